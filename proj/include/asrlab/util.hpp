#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace asrlab {

uint64_t splitmix64(uint64_t x);

// Mixes a base seed with a stream of tags so that independent consumers
// (per-utterance generators, dropout, shuffles) get decorrelated streams.
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags);

// Deterministic RNG. mt19937_64 has a standard-pinned algorithm; uniform and
// gaussian draws are hand-rolled so results do not depend on libstdc++
// distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  uint64_t u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi);

  // Box-Muller with cached spare
  double gauss();
  double gauss(double mu, double sigma) { return mu + sigma * gauss(); }

  // k distinct values from [0, n)
  std::vector<int> sample_without_replacement(int n, int k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Splits a UTF-8 string into single codepoints (as strings).
// Throws IoError on malformed input, naming the byte offset.
std::vector<std::string> utf8_chars(const std::string& s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace asrlab
