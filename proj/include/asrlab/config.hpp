#pragma once

#include <string>

#include "asrlab/corpus.hpp"
#include "asrlab/model.hpp"
#include "asrlab/training.hpp"

namespace asrlab {

struct DecodeConfig {
  std::string method = "attention_rescoring";
  int beam = 10;
  double ctc_weight = 0.5;  // decode-time lambda
  int max_len_cap = 200;

  void validate() const;
};

// Union of all run settings; serializes to a single nested JSON document.
// Unknown keys are rejected. Every command writes its fully-resolved config
// next to its outputs.
struct RunConfig {
  CorpusSpec corpus;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  std::string data_dir = "data";
  std::string lexicon;  // defaults to <data_dir>/lexicon.tsv when empty
  std::string out_dir = "out";

  std::string lexicon_path() const;
  std::string to_json_string() const;
  static RunConfig from_json_string(const std::string& text);
  static RunConfig from_file(const std::string& path);
  void write(const std::string& path) const;
};

// "paper" pins the published recipe; "desk" is the small reference setup.
void apply_profile(RunConfig& cfg, const std::string& profile);

const char* const kDecodeMethods[] = {"attention", "ctc_greedy", "ctc_prefix_beam",
                                      "attention_rescoring"};
bool is_valid_method(const std::string& m);

}  // namespace asrlab
