#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrlab/graph.hpp"
#include "asrlab/lexicon.hpp"
#include "asrlab/tensor.hpp"

namespace asrlab {

enum class Mode { baseline, sp, se, sep };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& s);  // throws ConfigError on unknown names

struct ModelConfig {
  int d_model = 64;
  int heads = 4;
  int enc_blocks = 2;
  int dec_blocks = 2;
  int d_ffn = 256;
  double dropout = 0.1;
  int feat_dim = 80;  // input feature dimension D
  int vocab = 0;      // V, including blank/unk/sos-eos
  int sememes = 0;    // S
  Mode mode = Mode::baseline;
  // Forced on in sp mode; optional extra head in sep mode; off otherwise.
  bool sememe_prediction = false;
  // Sememe-encoder layer widths; must start at 2*d_model and end at d_model.
  // Empty selects the default {2d, d/2, d}.
  std::vector<int> sememe_encoder_dims;
  int conv_kernel = 7;  // depthwise conv width inside encoder blocks

  // Applies mode rules, fills defaulted fields, checks invariants.
  void normalize();
  bool sp_active() const;
  bool uses_sememe_embeddings() const { return mode == Mode::se || mode == Mode::sep; }
  std::vector<int> encoder_stack_dims() const;

  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& s);

  bool operator==(const ModelConfig&) const = default;
};

// Per-forward-pass state: the graph, dropout policy and the bind-once cache
// of parameters already placed on the tape.
struct Ctx {
  Graph& g;
  bool training = false;
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
  std::unordered_map<const Parameter*, Var> bound;

  explicit Ctx(Graph& graph) : g(graph) {}
  Var use(Parameter& p);
};

struct EncodeResult {
  Var h;       // T' x d_model; rows beyond `length` are zeroed padding
  int length;  // T'
};

struct DecodeOutputs {
  Var reps;    // contextual representations, positions x d_model
  Var logits;  // positions x V
  std::optional<Var> sememe_probs;  // positions x S, in (0,1), when the head is active
};

// Hybrid CTC/AED network with optional sememe integration: a prediction head
// on the decoder (sp), additive embedding enhancement (se) or a stacked
// linear sememe encoder over [text; sememe] embeddings (sep).
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  int sos_id() const { return cfg_.vocab - 1; }
  int eos_id() const { return cfg_.vocab - 1; }

  // Two stride-2 width-3 convolutions; throws ArgError for frames < 7.
  static int subsampled_length(int frames);

  EncodeResult encode(Ctx& ctx, Var features, int true_frames) const;
  EncodeResult encode(Ctx& ctx, const Tensor& features, int true_frames) const;

  // Scaled lookup; positional encoding is applied inside decode_tokens.
  Var embed_tokens(Ctx& ctx, std::span<const int> tokens) const;
  // Eq. of the average: mean of the token's sememe embeddings; zero row for
  // tokens with no sememes (incl. reserved ids).
  Var sememe_avg(Ctx& ctx, std::span<const int> tokens, const SememeLexicon& lex) const;
  // SEP path: stacked linear layers over [text ; sememe] concatenation.
  Var sememe_encode(Ctx& ctx, Var text_emb, Var sememe_emb) const;

  static int subsample_min_frames() { return 7; }

  DecodeOutputs decode_tokens(Ctx& ctx, Var h, int h_len, std::span<const int> tokens_in,
                              const SememeLexicon* lex) const;

  // Linear projection + log softmax over the encoder output.
  Var ctc_head(Ctx& ctx, Var h) const;

  std::vector<Parameter*>& parameters() { return param_ptrs_; }
  const std::vector<Parameter*>& parameters() const { return param_ptrs_; }
  Parameter* find_parameter(const std::string& name) const;
  int64_t parameter_count() const;

  // Copies values for parameters whose name and shape match; returns the
  // number of tensors copied.
  int transplant_from(const Model& other);

  void save(const std::string& path) const;
  static Model load(const std::string& path);
  static Model load(const std::string& path, const ModelConfig& expected);

 private:
  struct LinearL {
    Parameter* w = nullptr;
    Parameter* b = nullptr;
  };
  struct NormL {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;
  };
  struct AttnL {
    LinearL q, k, v, o;
  };
  struct FfnL {
    LinearL up, down;
  };
  struct EncBlock {
    NormL ln_ff1, ln_att, ln_conv, ln_ff2, ln_out;
    FfnL ff1, ff2;
    AttnL att;
    Parameter* conv_w = nullptr;
    Parameter* conv_b = nullptr;
    LinearL conv_pw;
  };
  struct DecBlock {
    NormL ln_self, ln_cross, ln_ff;
    AttnL self_att, cross_att;
    FfnL ff;
  };

  Parameter* add_param(const std::string& name, Tensor init);
  LinearL add_linear(const std::string& name, int in, int out, Rng& rng);
  NormL add_norm(const std::string& name, int dim);
  AttnL add_attn(const std::string& name, Rng& rng);
  FfnL add_ffn(const std::string& name, Rng& rng);

  Var linear(Ctx& ctx, const LinearL& l, Var x) const;
  Var norm(Ctx& ctx, const NormL& n, Var x) const;
  Var ffn(Ctx& ctx, const FfnL& f, Var x) const;
  Var mha(Ctx& ctx, const AttnL& a, Var q_in, Var kv_in, const Tensor* mask) const;
  Var drop(Ctx& ctx, Var x) const;

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<Parameter*> param_ptrs_;
  std::unordered_map<std::string, Parameter*> by_name_;

  LinearL sub_conv1_, sub_conv2_, sub_proj_;
  std::vector<EncBlock> enc_;
  LinearL ctc_proj_;
  Parameter* token_table_ = nullptr;
  std::vector<DecBlock> dec_;
  NormL dec_ln_out_;
  LinearL out_proj_;
  Parameter* sememe_table_ = nullptr;     // se / sep
  std::vector<LinearL> sememe_stack_;     // sep
  LinearL sp_head_;                       // sp, or sep with the flag on
};

// Sinusoidal position table, positions x dim.
Tensor positional_encoding(int positions, int dim);

// SE path: elementwise sum of the text and averaged-sememe embeddings.
// Shape mismatch raises ArgError.
Var sememe_enhance(Var text_emb, Var sememe_emb);

}  // namespace asrlab
