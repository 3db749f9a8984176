#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace asrlab {

// Dense 0-based token inventory with the reserved layout
//   blank=0, unk=1, sos/eos=V-1; everything in between is a real token.
class TokenVocab {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kUnk = 1;

  // tokens: the non-reserved token strings, assigned ids 2..V-2 in order.
  explicit TokenVocab(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(id_to_str_.size()); }
  int sos_eos() const { return size() - 1; }
  bool is_reserved(int id) const { return id == kBlank || id == kUnk || id == sos_eos(); }

  // -1 if unknown
  int id_of(const std::string& tok) const;
  const std::string& str_of(int id) const;

  // splits a space-free UTF-8 string into per-character token ids; unknown
  // characters map to unk
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  std::vector<std::string> non_reserved() const;

 private:
  std::vector<std::string> id_to_str_;
  std::unordered_map<std::string, int> str_to_id_;
};

class SememeVocab {
 public:
  SememeVocab() = default;
  explicit SememeVocab(const std::vector<std::string>& names);

  int size() const { return static_cast<int>(id_to_str_.size()); }
  int id_of(const std::string& name) const;  // -1 if unknown
  const std::string& str_of(int id) const;
  int add(const std::string& name);  // existing id or a fresh one

 private:
  std::vector<std::string> id_to_str_;
  std::unordered_map<std::string, int> str_to_id_;
};

// token id -> strictly ascending sememe-id set. Tokens absent from the map
// have the empty set. Immutable after parse.
class SememeLexicon {
 public:
  SememeLexicon(int vocab_size, int sememe_count) : vocab_size_(vocab_size), sememe_count_(sememe_count) {}

  int vocab_size() const { return vocab_size_; }
  int sememe_count() const { return sememe_count_; }

  // ascending list; empty for uncovered tokens
  const std::vector<int>& sememes_of(int token) const;
  int count_of(int token) const { return static_cast<int>(sememes_of(token).size()); }

  void set(int token, std::vector<int> sememes);  // sorts and validates

  const std::map<int, std::vector<int>>& entries() const { return entries_; }

 private:
  int vocab_size_;
  int sememe_count_;
  std::map<int, std::vector<int>> entries_;
  static const std::vector<int> kEmpty;
};

struct ParsedLexicon {
  SememeLexicon lexicon;
  SememeVocab sememes;
  std::vector<std::string> skipped_tokens;  // lines whose token is not in the vocab
};

// Line format: token<TAB>sememe,sememe,...  with '#' comments. When
// `sememes` is empty, the sememe vocabulary is built in first-appearance
// order ("build" mode).
ParsedLexicon parse_lexicon(const std::string& text, const TokenVocab& tokens,
                            std::optional<SememeVocab> sememes = std::nullopt);

std::string serialize_lexicon(const SememeLexicon& lex, const TokenVocab& tokens,
                              const SememeVocab& sememes);

// Binary vector of length S; reserved and uncovered tokens yield all zeros.
std::vector<double> sememe_multihot(const SememeLexicon& lex, const TokenVocab& tokens, int token);

struct CoverageStats {
  double covered_fraction = 0.0;
  double mean_sememes_per_covered = 0.0;
  int max_sememes = 0;
};

// Fractions over non-reserved tokens only.
CoverageStats coverage_stats(const SememeLexicon& lex, const TokenVocab& tokens);

}  // namespace asrlab
