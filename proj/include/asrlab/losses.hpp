#pragma once

#include <optional>
#include <vector>

#include "asrlab/graph.hpp"

namespace asrlab {

struct LossBreakdown {
  double ctc = 0.0;
  double aed = 0.0;
  double se = 0.0;
  double combined = 0.0;
  double lambda = 0.3;
  double alpha = 0.3;
};

struct CtcResult {
  Var loss;             // scalar; +infinity when infeasible
  bool feasible = true; // false => skip this utterance, do not backprop
};

// Negative log-likelihood over all frame paths that collapse to `labels`.
// blank id is 0; labels must be in (0, V). Infeasible label/length pairs
// return +infinity with feasible=false instead of throwing, so batches can
// skip them. Gradient flows to `logprobs` via the forward-backward recursion.
CtcResult ctc_loss(Var logprobs, const std::vector<int>& labels);

struct LsCeResult {
  Var loss;
  bool all_masked = false;  // warning flag: no supervised positions
};

// Mean over unmasked positions of the smoothed cross-entropy: the target
// distribution puts 1-eps on the true id and eps/(V-1) on every other id.
LsCeResult label_smoothed_ce(Var logits, const std::vector<int>& targets, double eps,
                             const std::vector<uint8_t>& pos_mask);

// Mean binary cross-entropy over unmasked positions and all sememe dims;
// probabilities are clamped to [1e-7, 1-1e-7] before the log.
Var sememe_bce(Var probs, const Tensor& targets, const std::vector<uint8_t>& pos_mask);

// Eq.-style mixer: combined = lambda*ctc + (1-lambda)*(alpha*aed + (1-alpha)*se).
// With sp disabled the mixer degenerates to lambda*ctc + (1-lambda)*aed.
// Throws ConfigError for out-of-range weights.
LossBreakdown combined_loss(double l_ctc, double l_aed, double l_se, double lambda, double alpha,
                            bool sp_enabled);

// Same mixing applied to graph nodes (for training).
Var combine_loss_vars(Var l_ctc, Var l_aed, std::optional<Var> l_se, double lambda, double alpha,
                      bool sp_enabled);

void validate_loss_weights(double lambda, double alpha, bool sp_enabled);

}  // namespace asrlab
