#pragma once

#include <string>
#include <vector>

#include "asrlab/dataio.hpp"
#include "asrlab/lexicon.hpp"
#include "asrlab/tensor.hpp"

namespace asrlab {

struct DomainSpec {
  std::string name = "base";
  uint64_t bigram_seed = 0;        // seeds the per-token successor structure
  double channel_offset = 0.0;     // magnitude of the constant additive offset
  double train_share = 1.0;
  double dev_share = 1.0;
  double test_share = 1.0;
};

struct SplitSizes {
  int train = 2000;
  int dev = 200;
  int test = 200;
};

// Synthetic stand-in for a real speech corpus: per-token Gaussian prototypes,
// Zipf-distributed token frequencies, per-domain bigram structure and channel
// offsets. Fully deterministic given `seed`.
struct CorpusSpec {
  int vocab_size = 60;             // V, including blank/unk/sos-eos
  int sememe_count = 24;           // S
  double zipf_z = 1.1;
  int feature_dim = 80;
  int frames_per_token_min = 5;
  int frames_per_token_max = 9;
  double noise_sigma = 0.15;
  int tokens_per_utt_min = 3;
  int tokens_per_utt_max = 8;
  double bigram_blend = 0.25;      // probability of drawing from the bigram row
  int bigram_window = 4;           // successor ranks within +-window of the current rank
  double lexicon_coverage = 0.9;
  int sememes_per_token_min = 1;
  int sememes_per_token_max = 4;
  SplitSizes splits;
  std::vector<DomainSpec> domains = default_domains();
  uint64_t seed = 12345;

  void validate() const;
  static std::vector<DomainSpec> default_domains();
};

struct Utterance {
  std::string id;
  Tensor features;            // frames x D
  std::vector<int> tokens;    // reference sequence, no reserved ids
  std::string domain;
};

struct AugmentPolicy {
  bool enabled = true;
  int freq_masks = 2;
  int freq_width = 10;   // max columns per mask
  int time_masks = 2;
  int time_width = 6;    // max rows per mask
};

// P(rank r) = r^-z / sum_k k^-z over `n_tokens` non-reserved tokens,
// rank 1 assigned to the lowest non-reserved token id.
std::vector<double> zipf_unigram(int n_tokens, double z);

struct GeneratedCorpus {
  std::string dir;
  TokenVocab vocab;
  SememeVocab sememes;
  SememeLexicon lexicon;
  Tensor prototypes;                       // V x D, reserved rows zero
  std::vector<std::string> manifest_paths; // train/dev/test
};

// Writes feature files, per-split manifests, the synthetic lexicon, the
// prototype table and a generation report under out_dir.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, const std::string& out_dir);

// Zeroes uniformly-placed time/frequency stripes; identity when disabled.
Tensor spec_augment(const Tensor& features, const AugmentPolicy& policy, uint64_t seed);

struct Batch {
  std::vector<const Utterance*> utts;
  Tensor features;                 // B stacked padded matrices: (B*Tmax) x D
  int max_frames = 0;
  std::vector<int> frame_lengths;
  std::vector<std::vector<int>> tokens;     // unpadded references
  std::vector<std::vector<int>> padded_tokens;  // padded with blank
  std::vector<std::vector<uint8_t>> token_mask; // 1 = real position
  int max_tokens = 0;

  // view of utterance i's padded feature rows
  Tensor padded_features(int i) const;
};

// Chunks utterances in order into batches of `batch_size`; when
// sort_by_length, utterances are first ordered by frame count (stable by id).
std::vector<Batch> batchify(const std::vector<const Utterance*>& utts, int batch_size,
                            bool sort_by_length);

// Loads a manifest plus its feature files into memory.
std::vector<Utterance> load_utterances(const std::string& manifest_path, const TokenVocab& vocab);

}  // namespace asrlab
