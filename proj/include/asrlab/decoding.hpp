#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "asrlab/lexicon.hpp"
#include "asrlab/model.hpp"
#include "asrlab/tensor.hpp"

namespace asrlab {

struct Hypothesis {
  std::vector<int> tokens;  // no reserved ids
  double ctc = 0.0;         // log
  double att = 0.0;         // log
  double combined = 0.0;
};

struct NBestList {
  std::vector<Hypothesis> hyps;  // sorted by the relevant score, descending
  int beam = 0;
};

// Per-frame argmax, then collapse (merge adjacent repeats, drop blanks);
// argmax ties break toward the lowest id.
std::vector<int> ctc_greedy(const Tensor& logprobs);

// Standard prefix beam search over (blank-ending, non-blank-ending) mass.
// Scores are total log-probabilities of the collapsed prefixes.
NBestList ctc_prefix_beam(const Tensor& logprobs, int beam);

// Scoring interface for autoregressive decoding: log-probabilities of the
// next token given the prefix (without sos). Lets tests drive the search
// with exactly-known stub models.
using StepScorer = std::function<std::vector<double>(std::span<const int> prefix)>;

NBestList attention_beam_search(const StepScorer& scorer, int vocab, int eos, int beam, int max_len);

// Model-backed wrappers over a precomputed encoder output.
struct DecoderContext {
  const Model* model;
  Tensor h;      // encoder output (value), rows >= h_len
  int h_len;
  const SememeLexicon* lexicon;  // required in se/sep modes
};

NBestList attention_beam(const DecoderContext& dc, int beam, int max_len);

// Teacher-forced decoder log-probability of a hypothesis (sum over positions
// including eos).
double attention_score(const DecoderContext& dc, std::span<const int> tokens);

// Rescores a CTC n-best by combined = att + lambda_dec * ctc; ties prefer
// higher ctc, then shorter sequences. The result is always a member of the
// input list.
Hypothesis attention_rescore(const NBestList& nbest, const DecoderContext& dc, double lambda_dec);

struct DecodeRecord {
  std::string id;
  std::string method;
  std::string text;
  double att = 0.0;
  double ctc = 0.0;
  double combined = 0.0;
};

void write_decode_records(const std::string& path, const std::vector<DecodeRecord>& records);
std::vector<DecodeRecord> read_decode_records(const std::string& path);

}  // namespace asrlab
