#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrlab/corpus.hpp"
#include "asrlab/graph.hpp"
#include "asrlab/model.hpp"

namespace asrlab {

struct TrainConfig {
  double lr = 0.002;
  int warmup = 500;
  double clip = 5.0;
  int accumulation = 1;
  int epochs = 20;
  int batch_size = 8;
  double lambda = 0.3;
  double alpha = 0.3;
  double label_smoothing = 0.1;
  double dropout = 0.1;
  uint64_t seed = 1;
  int checkpoint_avg = 5;  // K best checkpoints by dev loss
  bool sort_by_length = true;
  int dev_beam = 10;
  double dev_ctc_weight = 0.5;
  std::string precision = "f64";  // f64 | f32
  AugmentPolicy augment;

  void validate() const;
};

// lr = base * min(step/warmup, sqrt(warmup/step)): linear ramp to base at
// step = warmup, inverse-square-root decay after.
double lr_schedule(int64_t step, double base, int64_t warmup);

struct ClipResult {
  double norm = 0.0;   // global L2 norm before clipping
  double scale = 1.0;  // applied factor (1.0 when below the limit)
};

// Scales all gradients by max_norm/norm when the global norm exceeds it.
// NaN gradients halt the step with a TrainError.
ClipResult clip_gradients(std::span<Parameter* const> params, double max_norm);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Parameter* const> params, double lr);
  int64_t steps() const { return t_; }

 private:
  struct State {
    Tensor m, v;
  };
  std::unordered_map<Parameter*, State> state_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

struct CheckpointRecord {
  int epoch = 0;
  int64_t step = 0;
  double dev_loss = 0.0;
  double dev_cer = 0.0;
  std::string path;
};

struct TrainInputs {
  ModelConfig model;
  TrainConfig train;
  std::string train_manifest;
  std::string dev_manifest;
  const TokenVocab* vocab = nullptr;
  const SememeLexicon* lexicon = nullptr;
  std::string out_dir;
};

struct TrainResult {
  std::vector<CheckpointRecord> records;
  std::string metrics_path;
  std::string averaged_path;
  int64_t optimizer_steps = 0;
  double final_dev_cer = 0.0;
};

// Full optimization loop: Eq.-mixed loss, gradient accumulation, clipping,
// Adam with the warmup schedule, per-epoch dev evaluation (loss + CER via
// attention rescoring), per-epoch checkpoints and best-K averaging.
TrainResult train(const TrainInputs& in);

// Mean of each parameter across the min(K, available) records with the
// lowest dev loss; writes the averaged checkpoint to out_path.
void average_checkpoints(const std::vector<CheckpointRecord>& records, int k,
                         const std::string& out_path);

void write_checkpoint_records(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint_records(const std::string& path);

}  // namespace asrlab
