#include "asrlab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "asrlab/errors.hpp"
#include "asrlab/util.hpp"

namespace asrlab {

namespace fs = std::filesystem;

namespace {

// seed-stream tags
enum : uint64_t { kTagProto = 1, kTagLex = 2, kTagRing = 3, kTagUtt = 4, kTagOffset = 5, kTagFix = 6 };

int conv_out(int n) { return n < 3 ? 0 : (n - 3) / 2 + 1; }
int sub_out(int n) { return conv_out(conv_out(n)); }

// smallest frame count whose twice-subsampled length is >= m
int min_frames_for(int m) { return 4 * m + 3; }

}  // namespace

std::vector<DomainSpec> CorpusSpec::default_domains() {
  DomainSpec base;
  base.name = "base";
  base.bigram_seed = 0;
  base.channel_offset = 0.0;
  base.train_share = 1.0;
  base.dev_share = 1.0;
  base.test_share = 0.5;
  DomainSpec shifted;
  shifted.name = "shifted";
  shifted.bigram_seed = 1;
  shifted.channel_offset = 0.5;
  shifted.train_share = 0.0;
  shifted.dev_share = 0.0;
  shifted.test_share = 0.5;
  return {base, shifted};
}

void CorpusSpec::validate() const {
  if (vocab_size < 8) throw ArgError("CorpusSpec: vocab_size must be >= 8");
  if (sememe_count < 1) throw ArgError("CorpusSpec: sememe_count must be >= 1");
  if (zipf_z < 0) throw ArgError("CorpusSpec: zipf_z must be >= 0");
  if (feature_dim < 1) throw ArgError("CorpusSpec: feature_dim must be >= 1");
  if (frames_per_token_min < 1 || frames_per_token_min > frames_per_token_max) {
    throw ArgError("CorpusSpec: need 1 <= frames_per_token_min <= frames_per_token_max");
  }
  if (noise_sigma < 0) throw ArgError("CorpusSpec: noise_sigma must be >= 0");
  if (tokens_per_utt_min < 1 || tokens_per_utt_min > tokens_per_utt_max) {
    throw ArgError("CorpusSpec: need 1 <= tokens_per_utt_min <= tokens_per_utt_max");
  }
  if (bigram_blend < 0 || bigram_blend > 1) throw ArgError("CorpusSpec: bigram_blend must be in [0,1]");
  if (bigram_window < 1) throw ArgError("CorpusSpec: bigram_window must be >= 1");
  if (lexicon_coverage < 0 || lexicon_coverage > 1) {
    throw ArgError("CorpusSpec: lexicon_coverage must be in [0,1]");
  }
  if (sememes_per_token_min < 1 || sememes_per_token_min > sememes_per_token_max ||
      sememes_per_token_max > sememe_count) {
    throw ArgError("CorpusSpec: need 1 <= sememes_per_token_min <= sememes_per_token_max <= sememe_count");
  }
  if (splits.train < 0 || splits.dev < 0 || splits.test < 0) {
    throw ArgError("CorpusSpec: split sizes must be >= 0");
  }
  if (domains.empty()) throw ArgError("CorpusSpec: at least one domain required");
  for (const auto& d : domains) {
    if (d.name.empty()) throw ArgError("CorpusSpec: domain name must be non-empty");
    if (d.train_share < 0 || d.dev_share < 0 || d.test_share < 0) {
      throw ArgError("CorpusSpec: domain shares must be >= 0");
    }
    if (d.channel_offset < 0) throw ArgError("CorpusSpec: channel_offset must be >= 0");
  }
}

std::vector<double> zipf_unigram(int n_tokens, double z) {
  if (n_tokens < 1) throw ArgError("zipf_unigram: need at least one token");
  std::vector<double> p(static_cast<size_t>(n_tokens));
  double norm = 0.0;
  for (int r = 1; r <= n_tokens; ++r) norm += std::pow(static_cast<double>(r), -z);
  for (int r = 1; r <= n_tokens; ++r) {
    p[static_cast<size_t>(r - 1)] = std::pow(static_cast<double>(r), -z) / norm;
  }
  return p;
}

namespace {

// Token-sequence sampler. The per-domain kernel mixes a fresh Zipf draw with
// a Metropolis step over a domain-specific neighbor ring; both components
// leave the Zipf marginal invariant, so token frequencies stay Zipf exactly.
class TokenSampler {
 public:
  TokenSampler(const CorpusSpec& spec, const DomainSpec& domain)
      : spec_(spec), n_(spec.vocab_size - 3), probs_(zipf_unigram(n_, spec.zipf_z)) {
    cdf_.resize(probs_.size());
    double c = 0.0;
    for (size_t i = 0; i < probs_.size(); ++i) {
      c += probs_[i];
      cdf_[i] = c;
    }
    cdf_.back() = 1.0;
    ring_.resize(static_cast<size_t>(n_));
    std::iota(ring_.begin(), ring_.end(), 0);
    Rng ring_rng(derive_seed(spec.seed, {kTagRing, domain.bigram_seed}));
    ring_rng.shuffle(ring_);
    pos_.resize(static_cast<size_t>(n_));
    for (int i = 0; i < n_; ++i) pos_[static_cast<size_t>(ring_[static_cast<size_t>(i)])] = i;
  }

  // rank index in [0, n); token id = rank + 2
  int draw_zipf(Rng& rng) const {
    double u = rng.uniform();
    return static_cast<int>(std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  }

  int draw_next(int cur, Rng& rng) const {
    if (rng.uniform() >= spec_.bigram_blend) return draw_zipf(rng);
    // symmetric proposal over the neighbor ring, Metropolis accept
    int step = rng.uniform_int(1, spec_.bigram_window);
    if (rng.uniform() < 0.5) step = -step;
    int p = (pos_[static_cast<size_t>(cur)] + step % n_ + n_) % n_;
    int proposal = ring_[static_cast<size_t>(p)];
    double accept = probs_[static_cast<size_t>(proposal)] / probs_[static_cast<size_t>(cur)];
    if (accept >= 1.0 || rng.uniform() < accept) return proposal;
    return cur;
  }

  const std::vector<double>& probs() const { return probs_; }

 private:
  const CorpusSpec& spec_;
  int n_;
  std::vector<double> probs_;
  std::vector<double> cdf_;
  std::vector<int> ring_;  // ring position -> rank
  std::vector<int> pos_;   // rank -> ring position
};

std::string utf8_of_codepoint(uint32_t cp) {
  std::string s;
  if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xF0 | (cp >> 18));
    s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

std::vector<int> domain_counts(const CorpusSpec& spec, int total, int which_split) {
  std::vector<double> shares;
  for (const auto& d : spec.domains) {
    shares.push_back(which_split == 0 ? d.train_share : which_split == 1 ? d.dev_share : d.test_share);
  }
  double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<int> counts(shares.size(), 0);
  if (total == 0) return counts;
  if (sum <= 0) throw ArgError("CorpusSpec: no domain has a positive share for a non-empty split");
  // largest-remainder rounding
  std::vector<std::pair<double, size_t>> rema;
  int assigned = 0;
  for (size_t i = 0; i < shares.size(); ++i) {
    double exact = static_cast<double>(total) * shares[i] / sum;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < total - assigned; ++k) counts[rema[static_cast<size_t>(k)].second] += 1;
  return counts;
}

}  // namespace

GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  spec.validate();
  int n_tokens = spec.vocab_size - 3;

  // vocabulary: single CJK characters so manifests carry space-free text
  std::vector<std::string> token_strs;
  token_strs.reserve(static_cast<size_t>(n_tokens));
  for (int i = 0; i < n_tokens; ++i) token_strs.push_back(utf8_of_codepoint(0x4E00 + static_cast<uint32_t>(i)));
  TokenVocab vocab(token_strs);

  // per-token Gaussian prototypes, one draw from the master seed
  Tensor prototypes({vocab.size(), spec.feature_dim});
  for (int id = 2; id < vocab.size() - 1; ++id) {
    Rng rng(derive_seed(spec.seed, {kTagProto, static_cast<uint64_t>(id)}));
    for (int dcol = 0; dcol < spec.feature_dim; ++dcol) prototypes.at(id, dcol) = rng.gauss();
  }

  // synthetic sememe lexicon
  std::vector<std::string> sememe_names;
  for (int s = 0; s < spec.sememe_count; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%03d", s);
    sememe_names.emplace_back(buf);
  }
  SememeVocab sememes(sememe_names);
  SememeLexicon lexicon(vocab.size(), spec.sememe_count);
  std::vector<uint8_t> sememe_used(static_cast<size_t>(spec.sememe_count), 0);
  for (int id = 2; id < vocab.size() - 1; ++id) {
    Rng rng(derive_seed(spec.seed, {kTagLex, static_cast<uint64_t>(id)}));
    if (rng.uniform() >= spec.lexicon_coverage) continue;
    int n = rng.uniform_int(spec.sememes_per_token_min, spec.sememes_per_token_max);
    auto picks = rng.sample_without_replacement(spec.sememe_count, n);
    for (int s : picks) sememe_used[static_cast<size_t>(s)] = 1;
    lexicon.set(id, std::move(picks));
  }
  // keep the full inventory in play: attach unused sememes to covered tokens
  for (int s = 0; s < spec.sememe_count; ++s) {
    if (sememe_used[static_cast<size_t>(s)]) continue;
    Rng rng(derive_seed(spec.seed, {kTagFix, static_cast<uint64_t>(s)}));
    for (int attempt = 0; attempt < vocab.size(); ++attempt) {
      int id = 2 + rng.uniform_int(0, n_tokens - 1);
      auto cur = lexicon.sememes_of(id);
      if (std::find(cur.begin(), cur.end(), s) != cur.end()) continue;
      if (static_cast<int>(cur.size()) >= spec.sememes_per_token_max && !cur.empty()) {
        // replace the last sememe to keep per-token counts bounded
        cur.pop_back();
      }
      cur.push_back(s);
      lexicon.set(id, cur);
      break;
    }
  }

  fs::create_directories(out_dir);
  fs::create_directories(fs::path(out_dir) / "feats");

  // domain channel offsets: magnitude * unit-norm direction
  std::vector<std::vector<double>> offsets;
  for (size_t di = 0; di < spec.domains.size(); ++di) {
    std::vector<double> off(static_cast<size_t>(spec.feature_dim), 0.0);
    if (spec.domains[di].channel_offset > 0) {
      Rng rng(derive_seed(spec.seed, {kTagOffset, spec.domains[di].bigram_seed}));
      double norm = 0.0;
      for (double& x : off) {
        x = rng.gauss();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (double& x : off) x = x / norm * spec.domains[di].channel_offset;
    }
    offsets.push_back(std::move(off));
  }

  std::vector<TokenSampler> samplers;
  samplers.reserve(spec.domains.size());
  for (const auto& d : spec.domains) samplers.emplace_back(spec, d);

  const char* split_names[3] = {"train", "dev", "test"};
  int split_totals[3] = {spec.splits.train, spec.splits.dev, spec.splits.test};
  std::vector<std::string> manifest_paths;
  nlohmann::json report;
  std::map<int, int64_t> train_histogram;

  for (int si = 0; si < 3; ++si) {
    fs::create_directories(fs::path(out_dir) / "feats" / split_names[si]);
    auto counts = domain_counts(spec, split_totals[si], si);
    Manifest manifest;
    int utt_index = 0;
    for (size_t di = 0; di < spec.domains.size(); ++di) {
      const DomainSpec& dom = spec.domains[di];
      for (int i = 0; i < counts[di]; ++i, ++utt_index) {
        Rng rng(derive_seed(spec.seed, {kTagUtt, static_cast<uint64_t>(si), static_cast<uint64_t>(di),
                                        static_cast<uint64_t>(i)}));
        int len = rng.uniform_int(spec.tokens_per_utt_min, spec.tokens_per_utt_max);
        std::vector<int> ranks(static_cast<size_t>(len));
        ranks[0] = samplers[di].draw_zipf(rng);
        for (int t = 1; t < len; ++t) {
          ranks[static_cast<size_t>(t)] = samplers[di].draw_next(ranks[static_cast<size_t>(t - 1)], rng);
        }
        std::vector<int> tokens(static_cast<size_t>(len));
        for (int t = 0; t < len; ++t) tokens[static_cast<size_t>(t)] = ranks[static_cast<size_t>(t)] + 2;

        std::vector<int> durations(static_cast<size_t>(len));
        int total = 0;
        for (int t = 0; t < len; ++t) {
          durations[static_cast<size_t>(t)] = rng.uniform_int(spec.frames_per_token_min, spec.frames_per_token_max);
          total += durations[static_cast<size_t>(t)];
        }
        // guarantee CTC feasibility after subsampling: need
        // sub_out(frames) >= len + adjacent-equal pairs
        int pairs = 0;
        for (int t = 1; t < len; ++t) {
          if (tokens[static_cast<size_t>(t)] == tokens[static_cast<size_t>(t - 1)]) ++pairs;
        }
        int needed = min_frames_for(len + pairs);
        for (int t = 0; total < needed; t = (t + 1) % len) {
          durations[static_cast<size_t>(t)] += 1;
          ++total;
        }

        Tensor feats({total, spec.feature_dim});
        int row = 0;
        for (int t = 0; t < len; ++t) {
          for (int dth = 0; dth < durations[static_cast<size_t>(t)]; ++dth, ++row) {
            for (int c = 0; c < spec.feature_dim; ++c) {
              double x = prototypes.at(tokens[static_cast<size_t>(t)], c) + offsets[di][static_cast<size_t>(c)];
              if (spec.noise_sigma > 0) x += spec.noise_sigma * rng.gauss();
              feats.at(row, c) = x;
            }
          }
        }

        char id_buf[64];
        std::snprintf(id_buf, sizeof(id_buf), "%s-%s-%05d", split_names[si], dom.name.c_str(), i);
        std::string rel = std::string("feats/") + split_names[si] + "/" + id_buf + ".fbk";
        write_features((fs::path(out_dir) / rel).string(), feats);

        ManifestRecord rec;
        rec.id = id_buf;
        rec.feats = rel;
        rec.text = vocab.decode(tokens);
        rec.domain = dom.name;
        manifest.records.push_back(std::move(rec));

        if (si == 0) {
          for (int tok : tokens) train_histogram[tok] += 1;
        }
      }
      report["splits"][split_names[si]][dom.name] = counts[di];
    }
    std::string mpath = (fs::path(out_dir) / (std::string(split_names[si]) + ".jsonl")).string();
    write_manifest(mpath, manifest);
    manifest_paths.push_back(mpath);
  }

  write_text_file((fs::path(out_dir) / "lexicon.tsv").string(), serialize_lexicon(lexicon, vocab, sememes));
  {
    std::string tok_file;
    for (const auto& t : vocab.non_reserved()) tok_file += t + "\n";
    write_text_file((fs::path(out_dir) / "tokens.txt").string(), tok_file);
  }
  write_features((fs::path(out_dir) / "prototypes.fbk").string(), prototypes);

  auto cov = coverage_stats(lexicon, vocab);
  report["lexicon"] = {{"covered_fraction", cov.covered_fraction},
                       {"mean_sememes_per_covered", cov.mean_sememes_per_covered},
                       {"max_sememes", cov.max_sememes}};
  int64_t total_train_tokens = 0;
  for (auto& [tok, c] : train_histogram) total_train_tokens += c;
  if (total_train_tokens > 0) {
    auto zipf = zipf_unigram(n_tokens, spec.zipf_z);
    double tv = 0.0;
    for (int r = 0; r < n_tokens; ++r) {
      auto it = train_histogram.find(r + 2);
      double emp = it == train_histogram.end() ? 0.0 : static_cast<double>(it->second) / total_train_tokens;
      tv += std::abs(emp - zipf[static_cast<size_t>(r)]);
    }
    report["train_unigram_tv_vs_zipf"] = tv / 2.0;
  }
  write_text_file((fs::path(out_dir) / "gen_report.json").string(), report.dump(2) + "\n");

  return GeneratedCorpus{out_dir,      std::move(vocab),     std::move(sememes),
                         std::move(lexicon), std::move(prototypes), std::move(manifest_paths)};
}

Tensor spec_augment(const Tensor& features, const AugmentPolicy& policy, uint64_t seed) {
  if (policy.freq_width < 0 || policy.time_width < 0 || policy.freq_masks < 0 || policy.time_masks < 0) {
    throw ArgError("AugmentPolicy: widths and counts must be >= 0");
  }
  Tensor out = features;
  if (!policy.enabled) return out;
  int rows = features.rows(), cols = features.cols();
  Rng rng(seed);
  for (int m = 0; m < policy.freq_masks; ++m) {
    int w = std::min(rng.uniform_int(0, policy.freq_width), cols);
    int start = (cols - w > 0) ? rng.uniform_int(0, cols - w) : 0;
    for (int r = 0; r < rows; ++r) {
      for (int c = start; c < start + w; ++c) out.at(r, c) = 0.0;
    }
  }
  for (int m = 0; m < policy.time_masks; ++m) {
    int w = std::min(rng.uniform_int(0, policy.time_width), rows);
    int start = (rows - w > 0) ? rng.uniform_int(0, rows - w) : 0;
    for (int r = start; r < start + w; ++r) {
      for (int c = 0; c < cols; ++c) out.at(r, c) = 0.0;
    }
  }
  return out;
}

Tensor Batch::padded_features(int i) const {
  int d = features.cols();
  Tensor out({max_frames, d});
  std::copy_n(features.data() + static_cast<size_t>(i) * max_frames * d,
              static_cast<size_t>(max_frames) * d, out.data());
  return out;
}

std::vector<Batch> batchify(const std::vector<const Utterance*>& utts, int batch_size,
                            bool sort_by_length) {
  if (batch_size < 1) throw ArgError("batchify: batch_size must be >= 1");
  std::vector<Batch> out;
  if (utts.empty()) return out;

  std::vector<const Utterance*> order = utts;
  if (sort_by_length) {
    std::stable_sort(order.begin(), order.end(), [](const Utterance* a, const Utterance* b) {
      if (a->features.rows() != b->features.rows()) return a->features.rows() < b->features.rows();
      return a->id < b->id;
    });
  }

  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), at + static_cast<size_t>(batch_size));
    Batch b;
    b.utts.assign(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(end));
    int d = b.utts.front()->features.cols();
    for (const Utterance* u : b.utts) {
      b.max_frames = std::max(b.max_frames, u->features.rows());
      b.max_tokens = std::max(b.max_tokens, static_cast<int>(u->tokens.size()));
      b.frame_lengths.push_back(u->features.rows());
      b.tokens.push_back(u->tokens);
    }
    b.features = Tensor({static_cast<int>(b.utts.size()) * b.max_frames, d});  // pad value 0.0
    for (size_t i = 0; i < b.utts.size(); ++i) {
      const Tensor& f = b.utts[i]->features;
      std::copy_n(f.data(), f.v.size(), b.features.data() + i * static_cast<size_t>(b.max_frames) * d);
    }
    for (const Utterance* u : b.utts) {
      std::vector<int> padded = u->tokens;
      std::vector<uint8_t> mask(padded.size(), 1);
      padded.resize(static_cast<size_t>(b.max_tokens), TokenVocab::kBlank);
      mask.resize(static_cast<size_t>(b.max_tokens), 0);
      b.padded_tokens.push_back(std::move(padded));
      b.token_mask.push_back(std::move(mask));
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Utterance> load_utterances(const std::string& manifest_path, const TokenVocab& vocab) {
  Manifest m = read_manifest(manifest_path, true);
  std::vector<Utterance> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    Utterance u;
    u.id = r.id;
    u.domain = r.domain;
    u.features = read_features(resolve_path(manifest_path, r.feats));
    u.tokens = vocab.encode(r.text);
    if (u.tokens.empty()) throw FormatError(manifest_path + ": utterance '" + r.id + "' has empty text");
    for (int t : u.tokens) {
      if (vocab.is_reserved(t)) {
        throw FormatError(manifest_path + ": utterance '" + r.id + "' contains a reserved/unknown token");
      }
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace asrlab
