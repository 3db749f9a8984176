#include "asrlab/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "asrlab/errors.hpp"

namespace asrlab {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kMaskNegInf = -1e30;
}  // namespace

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::sp: return "sp";
    case Mode::se: return "se";
    case Mode::sep: return "sep";
  }
  throw ConfigError("unknown mode value");
}

Mode mode_from_name(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "sp") return Mode::sp;
  if (s == "se") return Mode::se;
  if (s == "sep") return Mode::sep;
  throw ConfigError("unknown mode '" + s + "' (expected baseline|sp|se|sep)");
}

void ModelConfig::normalize() {
  if (d_model < 1 || heads < 1) throw ConfigError("ModelConfig: d_model and heads must be positive");
  if (d_model % heads != 0) throw ConfigError("ModelConfig: d_model must be divisible by heads");
  if (enc_blocks < 1 || dec_blocks < 1) throw ConfigError("ModelConfig: need at least one block per stack");
  if (d_ffn < 1) throw ConfigError("ModelConfig: d_ffn must be positive");
  if (dropout < 0 || dropout >= 1) throw ConfigError("ModelConfig: dropout must be in [0,1)");
  if (feat_dim < 1) throw ConfigError("ModelConfig: feat_dim must be positive");
  if (vocab < 4) throw ConfigError("ModelConfig: vocab must be >= 4");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("ModelConfig: conv_kernel must be odd");
  switch (mode) {
    case Mode::baseline:
    case Mode::se:
      sememe_prediction = false;
      break;
    case Mode::sp:
      sememe_prediction = true;
      break;
    case Mode::sep:
      break;  // optional auxiliary head
  }
  if (mode != Mode::baseline && sememes < 1) {
    throw ConfigError("ModelConfig: sememe modes need sememes >= 1");
  }
  if (mode == Mode::sep) {
    if (sememe_encoder_dims.empty()) {
      sememe_encoder_dims = {2 * d_model, d_model / 2, d_model};
    }
    if (sememe_encoder_dims.size() < 2) {
      throw ConfigError("ModelConfig: sememe_encoder_dims needs at least two entries");
    }
    if (sememe_encoder_dims.front() != 2 * d_model) {
      throw ConfigError("ModelConfig: sememe_encoder_dims must start at 2*d_model");
    }
    if (sememe_encoder_dims.back() != d_model) {
      throw ConfigError("ModelConfig: sememe_encoder_dims must end at d_model");
    }
    for (int w : sememe_encoder_dims) {
      if (w < 1) throw ConfigError("ModelConfig: sememe_encoder_dims entries must be positive");
    }
  } else {
    sememe_encoder_dims.clear();
  }
}

bool ModelConfig::sp_active() const {
  return mode == Mode::sp || (mode == Mode::sep && sememe_prediction);
}

std::vector<int> ModelConfig::encoder_stack_dims() const { return sememe_encoder_dims; }

std::string ModelConfig::to_json_string() const {
  nlohmann::json j{{"d_model", d_model},
                   {"heads", heads},
                   {"enc_blocks", enc_blocks},
                   {"dec_blocks", dec_blocks},
                   {"d_ffn", d_ffn},
                   {"dropout", dropout},
                   {"feat_dim", feat_dim},
                   {"vocab", vocab},
                   {"sememes", sememes},
                   {"mode", mode_name(mode)},
                   {"sememe_prediction", sememe_prediction},
                   {"sememe_encoder_dims", sememe_encoder_dims},
                   {"conv_kernel", conv_kernel}};
  return j.dump();
}

ModelConfig ModelConfig::from_json_string(const std::string& s) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ModelConfig: bad JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.enc_blocks = j.at("enc_blocks").get<int>();
    c.dec_blocks = j.at("dec_blocks").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.sememes = j.at("sememes").get<int>();
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.sememe_prediction = j.at("sememe_prediction").get<bool>();
    c.sememe_encoder_dims = j.at("sememe_encoder_dims").get<std::vector<int>>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ModelConfig: missing field: ") + e.what());
  }
  c.normalize();
  return c;
}

Var Ctx::use(Parameter& p) {
  auto it = bound.find(&p);
  if (it != bound.end()) return it->second;
  Var v = g.param(p);
  bound.emplace(&p, v);
  return v;
}

Tensor positional_encoding(int positions, int dim) {
  Tensor pe({positions, dim});
  for (int pos = 0; pos < positions; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// construction

Parameter* Model::add_param(const std::string& name, Tensor init) {
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  Parameter* p = params_.back().get();
  param_ptrs_.push_back(p);
  if (!by_name_.emplace(name, p).second) throw ArgError("duplicate parameter name: " + name);
  return p;
}

Model::LinearL Model::add_linear(const std::string& name, int in, int out, Rng& rng) {
  double a = std::sqrt(6.0 / (in + out));
  Tensor w({in, out});
  for (double& x : w.v) x = rng.uniform(-a, a);
  LinearL l;
  l.w = add_param(name + ".w", std::move(w));
  l.b = add_param(name + ".b", Tensor::zeros({out}));
  return l;
}

Model::NormL Model::add_norm(const std::string& name, int dim) {
  NormL n;
  n.gamma = add_param(name + ".gamma", Tensor::full({dim}, 1.0));
  n.beta = add_param(name + ".beta", Tensor::zeros({dim}));
  return n;
}

Model::AttnL Model::add_attn(const std::string& name, Rng& rng) {
  AttnL a;
  a.q = add_linear(name + ".q", cfg_.d_model, cfg_.d_model, rng);
  a.k = add_linear(name + ".k", cfg_.d_model, cfg_.d_model, rng);
  a.v = add_linear(name + ".v", cfg_.d_model, cfg_.d_model, rng);
  a.o = add_linear(name + ".o", cfg_.d_model, cfg_.d_model, rng);
  return a;
}

Model::FfnL Model::add_ffn(const std::string& name, Rng& rng) {
  FfnL f;
  f.up = add_linear(name + ".up", cfg_.d_model, cfg_.d_ffn, rng);
  f.down = add_linear(name + ".down", cfg_.d_ffn, cfg_.d_model, rng);
  return f;
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.normalize();
  Rng rng(derive_seed(seed, {0xA5D1}));
  int d = cfg_.d_model;

  // shared encoder: conv subsampling, projection, conformer-style blocks
  sub_conv1_ = add_linear("enc.sub.conv1", 3 * cfg_.feat_dim, d, rng);
  sub_conv2_ = add_linear("enc.sub.conv2", 3 * d, d, rng);
  sub_proj_ = add_linear("enc.sub.proj", d, d, rng);
  for (int b = 0; b < cfg_.enc_blocks; ++b) {
    std::string base = "enc.block" + std::to_string(b);
    EncBlock blk;
    blk.ln_ff1 = add_norm(base + ".ln_ff1", d);
    blk.ff1 = add_ffn(base + ".ff1", rng);
    blk.ln_att = add_norm(base + ".ln_att", d);
    blk.att = add_attn(base + ".att", rng);
    blk.ln_conv = add_norm(base + ".ln_conv", d);
    {
      double a = std::sqrt(6.0 / (cfg_.conv_kernel + 1));
      Tensor w({cfg_.conv_kernel, d});
      for (double& x : w.v) x = rng.uniform(-a, a);
      blk.conv_w = add_param(base + ".conv.w", std::move(w));
      blk.conv_b = add_param(base + ".conv.b", Tensor::zeros({d}));
    }
    blk.conv_pw = add_linear(base + ".conv.pw", d, d, rng);
    blk.ln_ff2 = add_norm(base + ".ln_ff2", d);
    blk.ff2 = add_ffn(base + ".ff2", rng);
    blk.ln_out = add_norm(base + ".ln_out", d);
    enc_.push_back(blk);
  }

  // CTC branch
  ctc_proj_ = add_linear("ctc.proj", d, cfg_.vocab, rng);

  // attention decoder
  {
    Tensor table({cfg_.vocab, d});
    double std = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : table.v) x = rng.gauss(0.0, std);
    token_table_ = add_param("dec.embed", std::move(table));
  }
  for (int b = 0; b < cfg_.dec_blocks; ++b) {
    std::string base = "dec.block" + std::to_string(b);
    DecBlock blk;
    blk.ln_self = add_norm(base + ".ln_self", d);
    blk.self_att = add_attn(base + ".self", rng);
    blk.ln_cross = add_norm(base + ".ln_cross", d);
    blk.cross_att = add_attn(base + ".cross", rng);
    blk.ln_ff = add_norm(base + ".ln_ff", d);
    blk.ff = add_ffn(base + ".ff", rng);
    dec_.push_back(blk);
  }
  dec_ln_out_ = add_norm("dec.ln_out", d);
  out_proj_ = add_linear("dec.out", d, cfg_.vocab, rng);

  // sememe machinery, allocated only for the modes that use it
  if (cfg_.uses_sememe_embeddings()) {
    Tensor table({cfg_.sememes, d});
    double std = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : table.v) x = rng.gauss(0.0, std);
    sememe_table_ = add_param("sememe.embed", std::move(table));
  }
  if (cfg_.mode == Mode::sep) {
    const auto& dims = cfg_.sememe_encoder_dims;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
      sememe_stack_.push_back(add_linear("sememe.encoder" + std::to_string(i), dims[i], dims[i + 1], rng));
    }
  }
  if (cfg_.sp_active()) {
    sp_head_ = add_linear("sememe.predict", d, cfg_.sememes, rng);
  }
}

Parameter* Model::find_parameter(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const Parameter* p : param_ptrs_) n += p->value.size();
  return n;
}

int Model::transplant_from(const Model& other) {
  int copied = 0;
  for (Parameter* p : param_ptrs_) {
    Parameter* src = other.find_parameter(p->name);
    if (src && src->value.shape == p->value.shape) {
      p->value.v = src->value.v;
      ++copied;
    }
  }
  return copied;
}

// ---------------------------------------------------------------------------
// forward building blocks

Var Model::linear(Ctx& ctx, const LinearL& l, Var x) const {
  return add_rowvec(matmul(x, ctx.use(*l.w)), ctx.use(*l.b));
}

Var Model::norm(Ctx& ctx, const NormL& n, Var x) const {
  return layer_norm_rows(x, ctx.use(*n.gamma), ctx.use(*n.beta), kLnEps);
}

Var Model::ffn(Ctx& ctx, const FfnL& f, Var x) const {
  return linear(ctx, f.down, silu(linear(ctx, f.up, x)));
}

Var Model::drop(Ctx& ctx, Var x) const {
  if (!ctx.training || ctx.dropout <= 0.0 || ctx.dropout_rng == nullptr) return x;
  return dropout(x, ctx.dropout, *ctx.dropout_rng);
}

Var Model::mha(Ctx& ctx, const AttnL& a, Var q_in, Var kv_in, const Tensor* mask) const {
  int h = cfg_.heads;
  int dk = cfg_.d_model / h;
  Var q = linear(ctx, a.q, q_in);
  Var k = linear(ctx, a.k, kv_in);
  Var v = linear(ctx, a.v, kv_in);
  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(h));
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int i = 0; i < h; ++i) {
    Var qi = slice_cols(q, i * dk, dk);
    Var ki = slice_cols(k, i * dk, dk);
    Var vi = slice_cols(v, i * dk, dk);
    Var scores = scale(matmul(qi, transpose(ki)), inv_sqrt);
    if (mask != nullptr) scores = add_const(scores, *mask);
    heads.push_back(matmul(softmax_rows(scores), vi));
  }
  return linear(ctx, a.o, concat_cols(heads));
}

// ---------------------------------------------------------------------------
// public forward surface

int Model::subsampled_length(int frames) {
  if (frames < 7) {
    throw ArgError("input too short: need at least 7 frames, got " + std::to_string(frames));
  }
  auto f = [](int n) { return (n - 3) / 2 + 1; };
  return f(f(frames));
}

EncodeResult Model::encode(Ctx& ctx, const Tensor& features, int true_frames) const {
  return encode(ctx, ctx.g.leaf(features), true_frames);
}

EncodeResult Model::encode(Ctx& ctx, Var features, int true_frames) const {
  const Tensor& fv = features.val();
  if (fv.cols() != cfg_.feat_dim) {
    throw ArgError("encode: feature dim " + std::to_string(fv.cols()) + " does not match model feat_dim " +
                   std::to_string(cfg_.feat_dim));
  }
  if (true_frames > fv.rows() || true_frames < 1) throw ArgError("encode: bad true_frames");
  int out_len = subsampled_length(true_frames);

  Var x = silu(linear(ctx, sub_conv1_, unfold_k3s2(features)));
  x = silu(linear(ctx, sub_conv2_, unfold_k3s2(x)));
  x = linear(ctx, sub_proj_, x);
  int rows = x.val().rows();

  std::vector<uint8_t> keep(static_cast<size_t>(rows), 0);
  for (int i = 0; i < out_len; ++i) keep[static_cast<size_t>(i)] = 1;

  x = add_const(x, positional_encoding(rows, cfg_.d_model));
  x = drop(ctx, x);
  x = zero_rows(x, keep);

  // additive key mask: padded positions never receive attention
  Tensor att_mask({rows, rows});
  for (int i = 0; i < rows; ++i) {
    for (int j = out_len; j < rows; ++j) att_mask.at(i, j) = kMaskNegInf;
  }

  for (const EncBlock& blk : enc_) {
    x = add(x, scale(drop(ctx, ffn(ctx, blk.ff1, norm(ctx, blk.ln_ff1, x))), 0.5));
    {
      Var q = norm(ctx, blk.ln_att, x);
      x = add(x, drop(ctx, mha(ctx, blk.att, q, q, &att_mask)));
    }
    {
      Var y = zero_rows(norm(ctx, blk.ln_conv, x), keep);
      y = dwconv_time(y, ctx.use(*blk.conv_w), ctx.use(*blk.conv_b));
      y = linear(ctx, blk.conv_pw, silu(y));
      x = add(x, drop(ctx, y));
    }
    x = add(x, scale(drop(ctx, ffn(ctx, blk.ff2, norm(ctx, blk.ln_ff2, x))), 0.5));
    x = norm(ctx, blk.ln_out, x);
  }
  x = zero_rows(x, keep);
  return EncodeResult{x, out_len};
}

Var Model::embed_tokens(Ctx& ctx, std::span<const int> tokens) const {
  std::vector<int> ids(tokens.begin(), tokens.end());
  for (int id : ids) {
    if (id < 0 || id >= cfg_.vocab) throw ArgError("embed_tokens: id out of range: " + std::to_string(id));
  }
  return embedding_rows(ctx.use(*token_table_), ids, std::sqrt(static_cast<double>(cfg_.d_model)));
}

Var Model::sememe_avg(Ctx& ctx, std::span<const int> tokens, const SememeLexicon& lex) const {
  if (sememe_table_ == nullptr) throw ArgError("sememe_avg: this mode allocates no sememe table");
  if (lex.sememe_count() != cfg_.sememes) {
    throw ArgError("sememe_avg: lexicon sememe count does not match model");
  }
  int n = static_cast<int>(tokens.size());
  Tensor avg({n, cfg_.sememes});
  for (int i = 0; i < n; ++i) {
    int tok = tokens[static_cast<size_t>(i)];
    if (tok < 0 || tok >= cfg_.vocab) throw ArgError("sememe_avg: id out of range");
    const auto& sids = lex.sememes_of(tok);
    if (sids.empty()) continue;  // empty set averages to the zero vector
    double w = 1.0 / static_cast<double>(sids.size());
    for (int s : sids) avg.at(i, s) = w;
  }
  return matmul(ctx.g.leaf(std::move(avg)), ctx.use(*sememe_table_));
}

Var sememe_enhance(Var text_emb, Var sememe_emb) {
  if (text_emb.shape() != sememe_emb.shape()) {
    throw ArgError("sememe_enhance: shape mismatch " + shape_str(text_emb.shape()) + " vs " +
                   shape_str(sememe_emb.shape()));
  }
  return add(text_emb, sememe_emb);
}

Var Model::sememe_encode(Ctx& ctx, Var text_emb, Var sememe_emb) const {
  if (cfg_.mode != Mode::sep) throw ArgError("sememe_encode: only available in sep mode");
  if (text_emb.val().rows() != sememe_emb.val().rows()) {
    throw ArgError("sememe_encode: leading dimensions differ");
  }
  Var x = concat_cols({text_emb, sememe_emb});
  for (size_t i = 0; i < sememe_stack_.size(); ++i) {
    x = linear(ctx, sememe_stack_[i], x);
    if (i + 1 < sememe_stack_.size()) x = silu(x);
  }
  return x;
}

DecodeOutputs Model::decode_tokens(Ctx& ctx, Var h, int h_len, std::span<const int> tokens_in,
                                   const SememeLexicon* lex) const {
  if (tokens_in.empty()) throw ArgError("decode_tokens: empty token input");
  if (tokens_in.front() != sos_id()) throw ArgError("decode_tokens: input must begin with sos");
  int h_rows = h.val().rows();
  if (h_len < 1 || h_len > h_rows) throw ArgError("decode_tokens: bad encoder length");

  Var e = embed_tokens(ctx, tokens_in);
  if (cfg_.uses_sememe_embeddings()) {
    if (lex == nullptr) throw ArgError("decode_tokens: se/sep modes need a lexicon");
    Var c = sememe_avg(ctx, tokens_in, *lex);
    e = cfg_.mode == Mode::se ? sememe_enhance(e, c) : sememe_encode(ctx, e, c);
  }

  int I = static_cast<int>(tokens_in.size());
  Var x = add_const(e, positional_encoding(I, cfg_.d_model));
  x = drop(ctx, x);

  Tensor causal({I, I});
  for (int i = 0; i < I; ++i) {
    for (int j = i + 1; j < I; ++j) causal.at(i, j) = kMaskNegInf;
  }
  Tensor cross_mask({I, h_rows});
  for (int i = 0; i < I; ++i) {
    for (int j = h_len; j < h_rows; ++j) cross_mask.at(i, j) = kMaskNegInf;
  }

  for (const DecBlock& blk : dec_) {
    Var q = norm(ctx, blk.ln_self, x);
    x = add(x, drop(ctx, mha(ctx, blk.self_att, q, q, &causal)));
    x = add(x, drop(ctx, mha(ctx, blk.cross_att, norm(ctx, blk.ln_cross, x), h, &cross_mask)));
    x = add(x, drop(ctx, ffn(ctx, blk.ff, norm(ctx, blk.ln_ff, x))));
  }
  Var reps = norm(ctx, dec_ln_out_, x);

  DecodeOutputs out;
  out.reps = reps;
  out.logits = linear(ctx, out_proj_, reps);
  if (cfg_.sp_active()) out.sememe_probs = sigmoid(linear(ctx, sp_head_, reps));
  return out;
}

Var Model::ctc_head(Ctx& ctx, Var h) const { return log_softmax_rows(linear(ctx, ctc_proj_, h)); }

// ---------------------------------------------------------------------------
// checkpoint format:
//   "ASRLCKP1" | u32 header_len | header JSON | float32 payload
// header: {"config": ..., "params": [{"name","shape","offset"}]}, offsets in
// bytes from payload start.

namespace {
constexpr char kCkptMagic[8] = {'A', 'S', 'R', 'L', 'C', 'K', 'P', '1'};
}

void Model::save(const std::string& path) const {
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const Parameter* p : param_ptrs_) {
    manifest.push_back({{"name", p->name}, {"shape", p->value.shape}, {"offset", offset}});
    offset += static_cast<uint64_t>(p->value.size()) * 4;
  }
  nlohmann::json header{{"config", nlohmann::json::parse(cfg_.to_json_string())}, {"params", manifest}};
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  uint32_t hl = static_cast<uint32_t>(hs.size());
  unsigned char lb[4] = {static_cast<unsigned char>(hl & 0xFF), static_cast<unsigned char>((hl >> 8) & 0xFF),
                         static_cast<unsigned char>((hl >> 16) & 0xFF),
                         static_cast<unsigned char>((hl >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(lb), 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Parameter* p : param_ptrs_) {
    std::vector<float> buf(p->value.v.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(p->value.v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace {

struct RawCheckpoint {
  ModelConfig config;
  std::vector<std::tuple<std::string, Shape, uint64_t>> manifest;
  std::vector<unsigned char> payload;
};

RawCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), kCkptMagic, 8) != 0) {
    throw FormatError(path + ": not a checkpoint file (bad magic)");
  }
  uint32_t hl = static_cast<uint32_t>(raw[8]) | (static_cast<uint32_t>(raw[9]) << 8) |
                (static_cast<uint32_t>(raw[10]) << 16) | (static_cast<uint32_t>(raw[11]) << 24);
  if (raw.size() < 12 + static_cast<size_t>(hl)) throw FormatError(path + ": truncated header");
  std::string hs(reinterpret_cast<const char*>(raw.data() + 12), hl);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header JSON: " + e.what());
  }
  RawCheckpoint ck;
  try {
    ck.config = ModelConfig::from_json_string(header.at("config").dump());
    for (const auto& ent : header.at("params")) {
      ck.manifest.emplace_back(ent.at("name").get<std::string>(), ent.at("shape").get<Shape>(),
                               ent.at("offset").get<uint64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad header fields: " + e.what());
  }
  ck.payload.assign(raw.begin() + 12 + hl, raw.end());
  return ck;
}

}  // namespace

Model Model::load(const std::string& path) {
  RawCheckpoint ck = read_checkpoint(path);
  Model model(ck.config, 0);
  if (ck.manifest.size() != model.param_ptrs_.size()) {
    throw FormatError(path + ": parameter manifest size mismatch (" + std::to_string(ck.manifest.size()) +
                      " vs " + std::to_string(model.param_ptrs_.size()) + ")");
  }
  for (const auto& [name, shape, offset] : ck.manifest) {
    Parameter* p = model.find_parameter(name);
    if (p == nullptr) throw FormatError(path + ": unknown parameter '" + name + "'");
    if (p->value.shape != shape) {
      throw FormatError(path + ": shape mismatch for '" + name + "': file " + shape_str(shape) +
                        " vs model " + shape_str(p->value.shape));
    }
    size_t bytes = static_cast<size_t>(p->value.size()) * 4;
    if (offset + bytes > ck.payload.size()) {
      throw FormatError(path + ": payload truncated for '" + name + "' at offset " + std::to_string(offset));
    }
    for (int64_t i = 0; i < p->value.size(); ++i) {
      float f;
      std::memcpy(&f, ck.payload.data() + offset + static_cast<size_t>(i) * 4, 4);
      p->value.v[static_cast<size_t>(i)] = static_cast<double>(f);
    }
  }
  return model;
}

Model Model::load(const std::string& path, const ModelConfig& expected) {
  RawCheckpoint ck = read_checkpoint(path);
  ModelConfig want = expected;
  want.normalize();
  if (!(ck.config == want)) {
    // field-by-field diff report
    nlohmann::json a = nlohmann::json::parse(ck.config.to_json_string());
    nlohmann::json b = nlohmann::json::parse(want.to_json_string());
    std::ostringstream diff;
    diff << "checkpoint config mismatch in " << path << ":";
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (b.at(it.key()) != it.value()) {
        diff << " " << it.key() << ": file=" << it.value().dump() << " expected=" << b.at(it.key()).dump()
             << ";";
      }
    }
    throw ConfigError(diff.str());
  }
  return load(path);
}

}  // namespace asrlab
