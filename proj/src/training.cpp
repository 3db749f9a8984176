#include "asrlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "asrlab/decoding.hpp"
#include "asrlab/errors.hpp"
#include "asrlab/eval.hpp"
#include "asrlab/losses.hpp"

namespace asrlab {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (lr <= 0) throw ConfigError("TrainConfig: lr must be positive");
  if (warmup < 1) throw ConfigError("TrainConfig: warmup must be >= 1");
  if (clip <= 0) throw ConfigError("TrainConfig: clip must be positive");
  if (accumulation < 1) throw ConfigError("TrainConfig: accumulation must be >= 1");
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (label_smoothing < 0 || label_smoothing >= 1) {
    throw ConfigError("TrainConfig: label_smoothing must be in [0,1)");
  }
  if (dropout < 0 || dropout >= 1) throw ConfigError("TrainConfig: dropout must be in [0,1)");
  if (checkpoint_avg < 1) throw ConfigError("TrainConfig: checkpoint_avg must be >= 1");
  if (dev_beam < 1) throw ConfigError("TrainConfig: dev_beam must be >= 1");
  if (precision != "f64" && precision != "f32") throw ConfigError("TrainConfig: precision must be f64|f32");
}

double lr_schedule(int64_t step, double base, int64_t warmup) {
  if (step < 1) throw ArgError("lr_schedule: step must be >= 1");
  if (warmup < 1) throw ArgError("lr_schedule: warmup must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup);
  return base * std::min(s / w, std::sqrt(w / s));
}

ClipResult clip_gradients(std::span<Parameter* const> params, double max_norm) {
  if (max_norm <= 0) throw ArgError("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.v) sq += g * g;
  }
  if (!std::isfinite(sq)) {
    throw TrainError("clip_gradients: non-finite gradient norm (NaN/Inf in gradients)");
  }
  ClipResult r;
  r.norm = std::sqrt(sq);
  if (r.norm > max_norm) {
    r.scale = max_norm / r.norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.v) g *= r.scale;
    }
  }
  return r;
}

void Adam::step(std::span<Parameter* const> params, double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    State& st = state_[p];
    if (st.m.v.empty()) {
      st.m = Tensor::zeros(p->value.shape);
      st.v = Tensor::zeros(p->value.shape);
    }
    for (size_t i = 0; i < p->value.v.size(); ++i) {
      double g = p->grad.v[i];
      st.m.v[i] = beta1_ * st.m.v[i] + (1.0 - beta1_) * g;
      st.v.v[i] = beta2_ * st.v.v[i] + (1.0 - beta2_) * g * g;
      double m_hat = st.m.v[i] / bc1;
      double v_hat = st.v.v[i] / bc2;
      p->value.v[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

enum : uint64_t { kTagShuffle = 11, kTagAugment = 12, kTagDropout = 13 };

struct UttLoss {
  std::optional<Var> ctc;
  Var aed;
  std::optional<Var> se;
};

// Forward pass for one utterance; padded features + true length exercise the
// same masking path the batch contract defines.
UttLoss utterance_loss(const Model& model, Ctx& ctx, const Tensor& padded_feats, int true_frames,
                       const std::vector<int>& tokens, const TrainConfig& tc,
                       const TokenVocab& vocab, const SememeLexicon* lexicon) {
  UttLoss out;
  EncodeResult enc = model.encode(ctx, padded_feats, true_frames);

  Var lp = model.ctc_head(ctx, slice_rows(enc.h, 0, enc.length));
  CtcResult ctc = ctc_loss(lp, tokens);
  if (ctc.feasible) out.ctc = ctc.loss;

  std::vector<int> dec_in;
  dec_in.reserve(tokens.size() + 1);
  dec_in.push_back(model.sos_id());
  dec_in.insert(dec_in.end(), tokens.begin(), tokens.end());
  std::vector<int> targets = tokens;
  targets.push_back(model.eos_id());
  std::vector<uint8_t> mask(targets.size(), 1);

  DecodeOutputs dec = model.decode_tokens(ctx, enc.h, enc.length, dec_in, lexicon);
  out.aed = label_smoothed_ce(dec.logits, targets, tc.label_smoothing, mask).loss;

  if (model.config().sp_active()) {
    // position i predicts the sememes of its AED target token; the final
    // (pre-eos) position gets the zero vector
    int I = static_cast<int>(targets.size());
    int S = model.config().sememes;
    Tensor se_targets({I, S});
    for (int i = 0; i < I - 1; ++i) {
      auto hot = sememe_multihot(*lexicon, vocab, targets[static_cast<size_t>(i)]);
      std::copy(hot.begin(), hot.end(), se_targets.data() + static_cast<size_t>(i) * S);
    }
    out.se = sememe_bce(*dec.sememe_probs, se_targets, mask);
  }
  return out;
}

Var mean_of(Graph& g, const std::vector<Var>& terms) {
  if (terms.empty()) return g.leaf(Tensor::scalar(0.0));
  Var acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

TrainResult train(const TrainInputs& in) {
  in.train.validate();
  if (in.vocab == nullptr) throw ArgError("train: vocab is required");
  const TrainConfig& tc = in.train;
  ModelConfig mc = in.model;
  mc.normalize();
  if ((mc.uses_sememe_embeddings() || mc.sp_active()) && in.lexicon == nullptr) {
    throw ArgError("train: this mode needs a sememe lexicon");
  }

  Precision prev_precision = precision();
  set_precision(tc.precision == "f32" ? Precision::f32 : Precision::f64);

  fs::create_directories(in.out_dir);
  std::vector<Utterance> train_utts = load_utterances(in.train_manifest, *in.vocab);
  std::vector<Utterance> dev_utts = load_utterances(in.dev_manifest, *in.vocab);
  if (train_utts.empty() || dev_utts.empty()) throw ArgError("train: empty train or dev split");

  Model model(mc, tc.seed);
  std::vector<Parameter*>& params = model.parameters();
  Adam opt;

  std::string metrics_path = (fs::path(in.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) throw IoError("cannot write metrics log: " + metrics_path);

  TrainResult result;
  result.metrics_path = metrics_path;
  int64_t opt_step = 0;
  std::string last_good_ckpt = "(none)";
  bool sp = mc.sp_active();

  auto halt = [&last_good_ckpt](const std::string& why) {
    throw TrainError(why + "; last good checkpoint: " + last_good_ckpt);
  };

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::vector<const Utterance*> order;
    order.reserve(train_utts.size());
    for (const auto& u : train_utts) order.push_back(&u);
    Rng shuffle_rng(derive_seed(tc.seed, {kTagShuffle, static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    std::vector<Batch> batches = batchify(order, tc.batch_size, tc.sort_by_length);
    shuffle_rng.shuffle(batches);  // mix batch order while keeping length grouping

    Rng dropout_rng(derive_seed(tc.seed, {kTagDropout, static_cast<uint64_t>(epoch)}));

    int group_batches = 0;
    double acc_ctc = 0, acc_aed = 0, acc_se = 0, acc_combined = 0;

    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      Graph g;
      Ctx ctx(g);
      ctx.training = true;
      ctx.dropout = tc.dropout;
      ctx.dropout_rng = &dropout_rng;

      std::vector<Var> ctc_terms, aed_terms, se_terms;
      for (size_t ui = 0; ui < batch.utts.size(); ++ui) {
        const Utterance* u = batch.utts[ui];
        Tensor feats = u->features;
        if (tc.augment.enabled) {
          feats = spec_augment(feats, tc.augment,
                               derive_seed(tc.seed, {kTagAugment, static_cast<uint64_t>(epoch),
                                                     static_cast<uint64_t>(bi), static_cast<uint64_t>(ui)}));
        }
        Tensor padded({batch.max_frames, feats.cols()});
        std::copy(feats.v.begin(), feats.v.end(), padded.v.begin());

        UttLoss ul = utterance_loss(model, ctx, padded, u->features.rows(), u->tokens, tc, *in.vocab,
                                    in.lexicon);
        if (ul.ctc.has_value()) ctc_terms.push_back(*ul.ctc);
        aed_terms.push_back(ul.aed);
        if (ul.se.has_value()) se_terms.push_back(*ul.se);
      }

      Var l_ctc = mean_of(g, ctc_terms);
      Var l_aed = mean_of(g, aed_terms);
      std::optional<Var> l_se;
      if (sp) l_se = mean_of(g, se_terms);
      Var combined = combine_loss_vars(l_ctc, l_aed, l_se, tc.lambda, tc.alpha, sp);

      double combined_val = combined.val().v[0];
      if (!std::isfinite(combined_val)) halt("NaN/Inf loss at epoch " + std::to_string(epoch));

      acc_ctc += l_ctc.val().v[0];
      acc_aed += l_aed.val().v[0];
      acc_se += sp ? l_se->val().v[0] : 0.0;
      acc_combined += combined_val;
      ++group_batches;

      g.backward(scale(combined, 1.0 / static_cast<double>(tc.accumulation)));

      bool group_done = (group_batches == tc.accumulation) || (bi + 1 == batches.size());
      if (!group_done) continue;

      ClipResult clip = clip_gradients(params, tc.clip);
      ++opt_step;
      double lr = lr_schedule(opt_step, tc.lr, tc.warmup);
      opt.step(params, lr);
      for (Parameter* p : params) p->zero_grad();

      nlohmann::json line{{"type", "step"},
                          {"step", opt_step},
                          {"lr", lr},
                          {"ctc", acc_ctc / group_batches},
                          {"aed", acc_aed / group_batches},
                          {"se", acc_se / group_batches},
                          {"combined", acc_combined / group_batches},
                          {"grad_norm", clip.norm},
                          {"clip_scale", clip.scale}};
      metrics << line.dump() << "\n";
      group_batches = 0;
      acc_ctc = acc_aed = acc_se = acc_combined = 0;
    }

    // ---- dev evaluation: loss + CER via attention rescoring ----
    double dev_loss_sum = 0.0;
    int64_t dev_n = 0;
    std::vector<std::vector<int>> dev_refs, dev_hyps;
    for (const Utterance& u : dev_utts) {
      Graph g(false);
      Ctx ctx(g);
      EncodeResult enc = model.encode(ctx, u.features, u.features.rows());
      Var lp = model.ctc_head(ctx, enc.h);

      {
        // losses with dropout off
        Graph gl;
        Ctx cl(gl);
        UttLoss ul = utterance_loss(model, cl, u.features, u.features.rows(), u.tokens, tc, *in.vocab,
                                    in.lexicon);
        double lc = ul.ctc.has_value() ? ul.ctc->val().v[0] : 0.0;
        double la = ul.aed.val().v[0];
        double ls = ul.se.has_value() ? ul.se->val().v[0] : 0.0;
        dev_loss_sum += combined_loss(lc, la, ls, tc.lambda, tc.alpha, sp).combined;
        ++dev_n;
      }

      NBestList nbest = ctc_prefix_beam(lp.val(), tc.dev_beam);
      DecoderContext dc{&model, enc.h.val(), enc.length, in.lexicon};
      Hypothesis best = attention_rescore(nbest, dc, tc.dev_ctc_weight);
      dev_refs.push_back(u.tokens);
      dev_hyps.push_back(best.tokens);
    }
    double dev_loss = dev_loss_sum / static_cast<double>(dev_n);
    double dev_cer = cer(dev_refs, dev_hyps);
    if (!std::isfinite(dev_loss)) halt("non-finite dev loss at epoch " + std::to_string(epoch));

    char ck_name[64];
    std::snprintf(ck_name, sizeof(ck_name), "ckpt_epoch%03d.bin", epoch);
    std::string ck_path = (fs::path(in.out_dir) / ck_name).string();
    model.save(ck_path);
    last_good_ckpt = ck_path;
    result.records.push_back(CheckpointRecord{epoch, opt_step, dev_loss, dev_cer, ck_path});
    result.final_dev_cer = dev_cer;

    nlohmann::json line{{"type", "epoch"}, {"epoch", epoch}, {"dev_loss", dev_loss}, {"dev_cer", dev_cer}};
    metrics << line.dump() << "\n";
  }
  metrics.close();

  result.averaged_path = (fs::path(in.out_dir) / "model_avg.bin").string();
  average_checkpoints(result.records, tc.checkpoint_avg, result.averaged_path);
  write_checkpoint_records((fs::path(in.out_dir) / "checkpoints.json").string(), result.records);
  result.optimizer_steps = opt_step;

  set_precision(prev_precision);
  return result;
}

void average_checkpoints(const std::vector<CheckpointRecord>& records, int k,
                         const std::string& out_path) {
  if (records.empty()) throw ArgError("average_checkpoints: no records");
  if (k < 1) throw ArgError("average_checkpoints: K must be >= 1");
  std::vector<CheckpointRecord> ranked = records;
  std::stable_sort(ranked.begin(), ranked.end(), [](const CheckpointRecord& a, const CheckpointRecord& b) {
    if (a.dev_loss != b.dev_loss) return a.dev_loss < b.dev_loss;
    return a.epoch < b.epoch;
  });
  size_t take = std::min(static_cast<size_t>(k), ranked.size());
  if (take < static_cast<size_t>(k)) {
    std::fprintf(stderr, "average_checkpoints: only %zu checkpoints available, K=%d requested\n",
                 ranked.size(), k);
  }

  Model avg = Model::load(ranked[0].path);
  std::vector<Parameter*>& ps = avg.parameters();
  for (size_t r = 1; r < take; ++r) {
    Model next = Model::load(ranked[r].path, avg.config());
    const std::vector<Parameter*>& qs = next.parameters();
    for (size_t i = 0; i < ps.size(); ++i) {
      for (size_t j = 0; j < ps[i]->value.v.size(); ++j) ps[i]->value.v[j] += qs[i]->value.v[j];
    }
  }
  double inv = 1.0 / static_cast<double>(take);
  for (Parameter* p : ps) {
    for (double& x : p->value.v) x *= inv;
  }
  avg.save(out_path);
}

void write_checkpoint_records(const std::string& path, const std::vector<CheckpointRecord>& records) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : records) {
    j.push_back({{"epoch", r.epoch},
                 {"step", r.step},
                 {"dev_loss", r.dev_loss},
                 {"dev_cer", r.dev_cer},
                 {"path", r.path}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint records: " + path);
  out << j.dump(2) << "\n";
}

std::vector<CheckpointRecord> read_checkpoint_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint records: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  std::vector<CheckpointRecord> out;
  try {
    for (const auto& ent : j) {
      CheckpointRecord r;
      r.epoch = ent.at("epoch").get<int>();
      r.step = ent.at("step").get<int64_t>();
      r.dev_loss = ent.at("dev_loss").get<double>();
      r.dev_cer = ent.at("dev_cer").get<double>();
      r.path = ent.at("path").get<std::string>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return out;
}

}  // namespace asrlab
