#include "asrlab/losses.hpp"

#include <cmath>
#include <limits>

#include "asrlab/errors.hpp"

namespace asrlab {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// CTC over the blank-extended label sequence l' = [b, l1, b, l2, ..., b].
// alpha[t][s] includes the emission at time t; beta[t][s] sums suffix paths
// from (t,s) to the end *excluding* the emission at t, so that
// alpha + beta = log mass of all paths through (t,s). The gradient w.r.t.
// logprob[t][k] is then -exp(logsumexp_{s: l'_s = k}(alpha+beta) - logZ).
CtcResult ctc_loss(Var logprobs, const std::vector<int>& labels) {
  const Tensor& lp = logprobs.val();
  int T = lp.rows(), V = lp.cols();
  int L = static_cast<int>(labels.size());
  for (int l : labels) {
    if (l <= 0 || l >= V) {
      throw ArgError("ctc_loss: label " + std::to_string(l) + " out of range (blank=0, V=" +
                     std::to_string(V) + ")");
    }
  }

  int pairs = 0;
  for (int i = 1; i < L; ++i) {
    if (labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(i - 1)]) ++pairs;
  }
  Graph* g = logprobs.g;
  if (T < L + pairs || (L == 0 && T < 1)) {
    return CtcResult{g->leaf(Tensor::scalar(std::numeric_limits<double>::infinity())), false};
  }

  int U = 2 * L + 1;
  std::vector<int> ext(static_cast<size_t>(U), 0);
  for (int i = 0; i < L; ++i) ext[static_cast<size_t>(2 * i + 1)] = labels[static_cast<size_t>(i)];

  auto lp_at = [&lp, V](int t, int k) { return lp.v[static_cast<size_t>(t) * V + k]; };
  auto can_skip = [&ext](int s) {
    return ext[static_cast<size_t>(s)] != 0 && s >= 2 && ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)];
  };

  std::vector<double> alpha(static_cast<size_t>(T) * U, kNegInf);
  alpha[0] = lp_at(0, 0);
  if (U > 1) alpha[1] = lp_at(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < U; ++s) {
      double a = alpha[static_cast<size_t>(t - 1) * U + s];
      if (s >= 1) a = log_add(a, alpha[static_cast<size_t>(t - 1) * U + (s - 1)]);
      if (can_skip(s)) a = log_add(a, alpha[static_cast<size_t>(t - 1) * U + (s - 2)]);
      alpha[static_cast<size_t>(t) * U + s] = a + lp_at(t, ext[static_cast<size_t>(s)]);
    }
  }
  double log_z = alpha[static_cast<size_t>(T - 1) * U + (U - 1)];
  if (U > 1) log_z = log_add(log_z, alpha[static_cast<size_t>(T - 1) * U + (U - 2)]);

  if (!std::isfinite(log_z)) {
    // -inf inputs can starve every path even when lengths are feasible
    return CtcResult{g->leaf(Tensor::scalar(std::numeric_limits<double>::infinity())), false};
  }

  std::vector<double> beta(static_cast<size_t>(T) * U, kNegInf);
  beta[static_cast<size_t>(T - 1) * U + (U - 1)] = 0.0;
  if (U > 1) beta[static_cast<size_t>(T - 1) * U + (U - 2)] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < U; ++s) {
      double b = beta[static_cast<size_t>(t + 1) * U + s] + lp_at(t + 1, ext[static_cast<size_t>(s)]);
      if (s + 1 < U) {
        b = log_add(b, beta[static_cast<size_t>(t + 1) * U + (s + 1)] + lp_at(t + 1, ext[static_cast<size_t>(s + 1)]));
      }
      if (s + 2 < U && can_skip(s + 2)) {
        b = log_add(b, beta[static_cast<size_t>(t + 1) * U + (s + 2)] + lp_at(t + 1, ext[static_cast<size_t>(s + 2)]));
      }
      beta[static_cast<size_t>(t) * U + s] = b;
    }
  }

  int ia = logprobs.id;
  int self = static_cast<int>(g->num_nodes());
  return CtcResult{
      g->make(Tensor::scalar(-log_z),
              [self, ia, T, V, U, log_z, ext = std::move(ext), alpha = std::move(alpha),
               beta = std::move(beta)](Graph& gr) {
                double go = gr.gref(self).v[0];
                auto& glp = gr.gref(ia).v;
                std::vector<double> per_k(static_cast<size_t>(V), kNegInf);
                for (int t = 0; t < T; ++t) {
                  std::fill(per_k.begin(), per_k.end(), kNegInf);
                  for (int s = 0; s < U; ++s) {
                    double ab = alpha[static_cast<size_t>(t) * U + s] + beta[static_cast<size_t>(t) * U + s];
                    int k = ext[static_cast<size_t>(s)];
                    per_k[static_cast<size_t>(k)] = log_add(per_k[static_cast<size_t>(k)], ab);
                  }
                  for (int k = 0; k < V; ++k) {
                    if (per_k[static_cast<size_t>(k)] == kNegInf) continue;
                    glp[static_cast<size_t>(t) * V + k] -= go * std::exp(per_k[static_cast<size_t>(k)] - log_z);
                  }
                }
              }),
      true};
}

LsCeResult label_smoothed_ce(Var logits, const std::vector<int>& targets, double eps,
                             const std::vector<uint8_t>& pos_mask) {
  const Tensor& lv = logits.val();
  int I = lv.rows(), V = lv.cols();
  if (static_cast<int>(targets.size()) != I || static_cast<int>(pos_mask.size()) != I) {
    throw ArgError("label_smoothed_ce: targets/mask length mismatch");
  }
  if (eps < 0 || eps >= 1) throw ArgError("label_smoothed_ce: eps must be in [0,1)");
  int64_t kept = 0;
  for (uint8_t m : pos_mask) kept += m ? 1 : 0;

  Var logp = log_softmax_rows(logits);
  if (kept == 0) {
    // nothing supervised: zero contribution, flagged
    return LsCeResult{dot_const(logp, Tensor::zeros({I, V})), true};
  }

  double on = 1.0 - eps;
  double off = V > 1 ? eps / static_cast<double>(V - 1) : 0.0;
  Tensor q({I, V});
  for (int i = 0; i < I; ++i) {
    if (!pos_mask[static_cast<size_t>(i)]) continue;
    int tgt = targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= V) throw ArgError("label_smoothed_ce: target out of range");
    for (int k = 0; k < V; ++k) q.at(i, k) = (k == tgt) ? on : off;
  }
  // loss = -sum(q .* logp) / kept
  for (double& x : q.v) x = -x / static_cast<double>(kept);
  return LsCeResult{dot_const(logp, q), false};
}

Var sememe_bce(Var probs, const Tensor& targets, const std::vector<uint8_t>& pos_mask) {
  return bce_mean(probs, targets, pos_mask);
}

void validate_loss_weights(double lambda, double alpha, bool sp_enabled) {
  if (sp_enabled) {
    if (!(lambda > 0.0 && lambda < 1.0)) {
      throw ConfigError("combined_loss: lambda must be in (0,1) when sememe prediction is enabled");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw ConfigError("combined_loss: alpha must be in (0,1) when sememe prediction is enabled");
    }
  } else {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("combined_loss: lambda must be in [0,1]");
  }
}

LossBreakdown combined_loss(double l_ctc, double l_aed, double l_se, double lambda, double alpha,
                            bool sp_enabled) {
  validate_loss_weights(lambda, alpha, sp_enabled);
  LossBreakdown b;
  b.ctc = l_ctc;
  b.aed = l_aed;
  b.se = sp_enabled ? l_se : 0.0;
  b.lambda = lambda;
  b.alpha = sp_enabled ? alpha : 1.0;
  b.combined = lambda * l_ctc + (1.0 - lambda) * (b.alpha * l_aed + (1.0 - b.alpha) * b.se);
  return b;
}

Var combine_loss_vars(Var l_ctc, Var l_aed, std::optional<Var> l_se, double lambda, double alpha,
                      bool sp_enabled) {
  validate_loss_weights(lambda, alpha, sp_enabled);
  if (sp_enabled && !l_se.has_value()) throw ArgError("combine_loss_vars: sememe loss missing");
  double a = sp_enabled ? alpha : 1.0;
  Var inner = scale(l_aed, a);
  if (sp_enabled) inner = add(inner, scale(*l_se, 1.0 - a));
  return add(scale(l_ctc, lambda), scale(inner, 1.0 - lambda));
}

}  // namespace asrlab
