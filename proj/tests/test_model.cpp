#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asrlab/errors.hpp"
#include "asrlab/model.hpp"
#include "testutil.hpp"

using namespace asrlab;
using testutil::random_tensor;

namespace {

ModelConfig small_config(Mode mode, int d = 8, int feat = 6, int vocab = 9, int sememes = 5) {
  ModelConfig c;
  c.d_model = d;
  c.heads = 2;
  c.enc_blocks = 1;
  c.dec_blocks = 1;
  c.d_ffn = 2 * d;
  c.dropout = 0.0;
  c.feat_dim = feat;
  c.vocab = vocab;
  c.sememes = sememes;
  c.mode = mode;
  c.conv_kernel = 3;
  return c;
}

SememeLexicon small_lexicon(int vocab, int sememes, uint64_t seed) {
  SememeLexicon lex(vocab, sememes);
  Rng rng(seed);
  for (int tok = 2; tok < vocab - 1; ++tok) {
    if (rng.uniform() < 0.2) continue;
    int n = rng.uniform_int(1, std::min(3, sememes));
    lex.set(tok, rng.sample_without_replacement(sememes, n));
  }
  return lex;
}

}  // namespace

TEST_CASE("subsampled_length") {
  CHECK(Model::subsampled_length(67) == 16);
  CHECK(Model::subsampled_length(11) == 2);
  CHECK(Model::subsampled_length(7) == 1);
  CHECK_THROWS_AS(Model::subsampled_length(6), ArgError);
}

TEST_CASE("mode rules in config") {
  ModelConfig sp = small_config(Mode::sp);
  sp.sememe_prediction = false;
  sp.normalize();
  CHECK(sp.sememe_prediction);  // forced on

  ModelConfig base = small_config(Mode::baseline);
  base.sememe_prediction = true;
  base.normalize();
  CHECK_FALSE(base.sememe_prediction);

  ModelConfig sep = small_config(Mode::sep);
  sep.normalize();
  CHECK(sep.sememe_encoder_dims == std::vector<int>{16, 4, 8});

  ModelConfig sep256 = small_config(Mode::sep, 256, 6, 9, 5);
  sep256.normalize();
  CHECK(sep256.sememe_encoder_dims.front() == 512);
  CHECK(sep256.sememe_encoder_dims.back() == 256);

  ModelConfig bad = small_config(Mode::sep);
  bad.sememe_encoder_dims = {16, 4, 7};  // must end at d_model
  CHECK_THROWS_AS(bad.normalize(), ConfigError);
  bad.sememe_encoder_dims = {15, 4, 8};  // must start at 2*d_model
  CHECK_THROWS_AS(bad.normalize(), ConfigError);
}

TEST_CASE("encode shape and padding invariance") {
  Model model(small_config(Mode::baseline), 42);
  Rng rng(3);
  for (int t : {7, 11, 23, 40}) {
    Tensor feats = random_tensor({t, 6}, rng);
    Graph g(false);
    Ctx ctx(g);
    EncodeResult enc = model.encode(ctx, feats, t);
    CHECK(enc.length == Model::subsampled_length(t));
    CHECK(enc.h.val().rows() == Model::subsampled_length(t));
    CHECK(enc.h.val().cols() == 8);
    CHECK(enc.h.val().all_finite());
  }

  // zero-padding to T+9 leaves real rows bitwise unchanged
  Tensor feats = random_tensor({20, 6}, rng);
  Graph g1(false);
  Ctx c1(g1);
  EncodeResult plain = model.encode(c1, feats, 20);

  Tensor padded({29, 6});
  std::copy(feats.v.begin(), feats.v.end(), padded.v.begin());
  Graph g2(false);
  Ctx c2(g2);
  EncodeResult pad = model.encode(c2, padded, 20);

  CHECK(pad.length == plain.length);
  for (int r = 0; r < plain.length; ++r) {
    for (int c = 0; c < 8; ++c) {
      CHECK(std::abs(plain.h.val().at(r, c) - pad.h.val().at(r, c)) <= 1e-10);
    }
  }
}

TEST_CASE("embed_tokens basics") {
  Model model(small_config(Mode::baseline), 1);
  Graph g(false);
  Ctx ctx(g);
  std::vector<int> toks{3, 5, 3};
  Var e = model.embed_tokens(ctx, toks);
  CHECK(e.val().rows() == 3);
  CHECK(e.val().cols() == 8);
  for (int c = 0; c < 8; ++c) CHECK(e.val().at(0, c) == e.val().at(2, c));
  std::vector<int> bad{99};
  CHECK_THROWS_AS(model.embed_tokens(ctx, bad), ArgError);
}

TEST_CASE("sememe_avg") {
  ModelConfig cfg = small_config(Mode::se, 2, 6, 9, 2);
  cfg.heads = 1;
  Model model(cfg, 7);
  Parameter* table = model.find_parameter("sememe.embed");
  REQUIRE(table != nullptr);
  table->value = Tensor({2, 2}, {3.0, 0.0, 0.0, 3.0});

  SememeLexicon lex(9, 2);
  lex.set(2, {0, 1});  // both sememes
  lex.set(3, {1});     // single

  Graph g(false);
  Ctx ctx(g);
  std::vector<int> toks{2, 3, 4};
  Var c = model.sememe_avg(ctx, toks, lex);
  CHECK(c.val().at(0, 0) == doctest::Approx(1.5));
  CHECK(c.val().at(0, 1) == doctest::Approx(1.5));
  CHECK(c.val().at(1, 0) == doctest::Approx(0.0));
  CHECK(c.val().at(1, 1) == doctest::Approx(3.0));
  CHECK(c.val().at(2, 0) == 0.0);  // empty set -> zero vector
  CHECK(c.val().at(2, 1) == 0.0);
}

TEST_CASE("decoder causality") {
  ModelConfig cfg = small_config(Mode::baseline);
  Model model(cfg, 5);
  Rng rng(8);
  Tensor feats = random_tensor({12, 6}, rng);

  Graph g1(false);
  Ctx c1(g1);
  EncodeResult enc1 = model.encode(c1, feats, 12);
  std::vector<int> in1{model.sos_id(), 2, 3, 4};
  Tensor logits1 = model.decode_tokens(c1, enc1.h, enc1.length, in1, nullptr).logits.val();

  Graph g2(false);
  Ctx c2(g2);
  EncodeResult enc2 = model.encode(c2, feats, 12);
  std::vector<int> in2{model.sos_id(), 2, 3, 7};  // change only the last token
  Tensor logits2 = model.decode_tokens(c2, enc2.h, enc2.length, in2, nullptr).logits.val();

  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 9; ++k) {
      CHECK(std::abs(logits1.at(i, k) - logits2.at(i, k)) <= 1e-12);
    }
  }

  Graph g3(false);
  Ctx c3(g3);
  EncodeResult enc3 = model.encode(c3, feats, 12);
  std::vector<int> empty;
  CHECK_THROWS_AS(model.decode_tokens(c3, enc3.h, enc3.length, empty, nullptr), ArgError);
}

TEST_CASE("zero sememe prediction head gives probability one half") {
  ModelConfig cfg = small_config(Mode::sp);
  Model model(cfg, 3);
  model.find_parameter("sememe.predict.w")->value = Tensor::zeros({8, 5});
  model.find_parameter("sememe.predict.b")->value = Tensor::zeros({5});
  SememeLexicon lex = small_lexicon(9, 5, 2);
  Rng rng(4);
  Tensor feats = random_tensor({10, 6}, rng);
  Graph g(false);
  Ctx ctx(g);
  EncodeResult enc = model.encode(ctx, feats, 10);
  std::vector<int> in{model.sos_id(), 2, 3};
  DecodeOutputs out = model.decode_tokens(ctx, enc.h, enc.length, in, &lex);
  REQUIRE(out.sememe_probs.has_value());
  for (double p : out.sememe_probs->val().v) CHECK(p == 0.5);
}

TEST_CASE("mode equivalences") {
  // (a) se with zero sememe table == baseline, given transplanted parameters
  ModelConfig bc = small_config(Mode::baseline);
  Model baseline(bc, 11);
  ModelConfig sc = small_config(Mode::se);
  Model se(sc, 999);
  CHECK(se.transplant_from(baseline) > 0);
  Parameter* table = se.find_parameter("sememe.embed");
  REQUIRE(table != nullptr);
  table->value = Tensor::zeros(table->value.shape);

  SememeLexicon lex = small_lexicon(9, 5, 6);
  Rng rng(12);
  Tensor feats = random_tensor({15, 6}, rng);
  std::vector<int> in{baseline.sos_id(), 2, 4, 6};

  Graph g1(false);
  Ctx c1(g1);
  EncodeResult e1 = baseline.encode(c1, feats, 15);
  Tensor lb = baseline.decode_tokens(c1, e1.h, e1.length, in, nullptr).logits.val();

  Graph g2(false);
  Ctx c2(g2);
  EncodeResult e2 = se.encode(c2, feats, 15);
  Tensor ls = se.decode_tokens(c2, e2.h, e2.length, in, &lex).logits.val();

  for (size_t i = 0; i < lb.v.size(); ++i) CHECK(std::abs(lb.v[i] - ls.v[i]) <= 1e-12);

  // (b) sp forward token logits == baseline logits with shared parameters
  ModelConfig pc = small_config(Mode::sp);
  Model sp(pc, 777);
  CHECK(sp.transplant_from(baseline) > 0);
  Graph g3(false);
  Ctx c3(g3);
  EncodeResult e3 = sp.encode(c3, feats, 15);
  Tensor lp = sp.decode_tokens(c3, e3.h, e3.length, in, &lex).logits.val();
  for (size_t i = 0; i < lb.v.size(); ++i) CHECK(std::abs(lb.v[i] - lp.v[i]) <= 1e-12);
}

TEST_CASE("sememe_enhance") {
  Graph g;
  Var e = g.leaf(Tensor({1, 2}, {0.2, 0.3}));
  Var c = g.leaf(Tensor({1, 2}, {0.5, 0.5}));
  Var out = sememe_enhance(e, c);
  CHECK(out.val().v[0] == doctest::Approx(0.7));
  CHECK(out.val().v[1] == doctest::Approx(0.8));

  // additivity: the gradient reaching c equals the gradient reaching the sum
  Var loss = dot_const(out, Tensor({1, 2}, {2.0, -1.0}));
  g.backward(loss);
  CHECK(g.grad(c).v == g.grad(e).v);
  CHECK(g.grad(c).v[0] == 2.0);
  CHECK(g.grad(c).v[1] == -1.0);

  Graph g2(false);
  Var a = g2.leaf(Tensor({1, 2}));
  Var b = g2.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(sememe_enhance(a, b), ArgError);
}

TEST_CASE("sememe_encode shape and stack") {
  ModelConfig cfg = small_config(Mode::sep);
  Model model(cfg, 9);
  SememeLexicon lex = small_lexicon(9, 5, 3);
  Graph g(false);
  Ctx ctx(g);
  std::vector<int> toks{model.sos_id(), 2, 3, 4, 5};
  Var e = model.embed_tokens(ctx, toks);
  Var c = model.sememe_avg(ctx, toks, lex);
  Var enc = model.sememe_encode(ctx, e, c);
  CHECK(enc.val().rows() == 5);
  CHECK(enc.val().cols() == 8);
}

TEST_CASE("ctc_head rows are log-distributions") {
  Model model(small_config(Mode::baseline), 4);
  Rng rng(5);
  Tensor feats = random_tensor({18, 6}, rng);
  Graph g(false);
  Ctx ctx(g);
  EncodeResult enc = model.encode(ctx, feats, 18);
  Tensor lp = model.ctc_head(ctx, enc.h).val();
  CHECK(lp.rows() == enc.length);
  CHECK(lp.cols() == 9);
  for (int t = 0; t < lp.rows(); ++t) {
    double s = 0.0;
    for (int k = 0; k < lp.cols(); ++k) s += std::exp(lp.at(t, k));
    CHECK(std::abs(s - 1.0) <= 1e-10);
  }
}

TEST_CASE("parameter counts across modes") {
  int d = 8, S = 5;
  int64_t base = Model(small_config(Mode::baseline), 1).parameter_count();
  int64_t sp = Model(small_config(Mode::sp), 1).parameter_count();
  int64_t se = Model(small_config(Mode::se), 1).parameter_count();
  ModelConfig sep_cfg = small_config(Mode::sep);
  int64_t sep = Model(sep_cfg, 1).parameter_count();

  CHECK(base < sp);
  CHECK(base < se);
  CHECK(base < sep);
  CHECK(sp - base == static_cast<int64_t>(d) * S + S);  // head W + b
  CHECK(se - base == static_cast<int64_t>(S) * d);      // embedding table
  // sep (head off) adds the table plus exactly the stack dims' parameters
  int64_t stack = (16 * 4 + 4) + (4 * 8 + 8);
  CHECK(sep - base == static_cast<int64_t>(S) * d + stack);

  ModelConfig sep_sp = small_config(Mode::sep);
  sep_sp.sememe_prediction = true;
  int64_t sep2 = Model(sep_sp, 1).parameter_count();
  CHECK(sep2 - sep == static_cast<int64_t>(d) * S + S);
}

TEST_CASE("forward finite on bounded inputs") {
  for (Mode m : {Mode::baseline, Mode::sp, Mode::se, Mode::sep}) {
    Model model(small_config(m), 21);
    SememeLexicon lex = small_lexicon(9, 5, 9);
    Rng rng(static_cast<uint64_t>(17 + static_cast<int>(m)));
    Tensor feats = random_tensor({16, 6}, rng, -10.0, 10.0);
    Graph g(false);
    Ctx ctx(g);
    EncodeResult enc = model.encode(ctx, feats, 16);
    CHECK(enc.h.val().all_finite());
    std::vector<int> in{model.sos_id(), 2, 3, 4};
    DecodeOutputs out = model.decode_tokens(ctx, enc.h, enc.length, in, &lex);
    CHECK(out.logits.val().all_finite());
    CHECK(model.ctc_head(ctx, enc.h).val().all_finite());
    if (out.sememe_probs.has_value()) {
      for (double p : out.sememe_probs->val().v) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
      }
    }
  }
}

TEST_CASE("gradient checks through model pieces") {
  SememeLexicon lex = small_lexicon(9, 5, 14);
  Rng rng(23);

  SUBCASE("encoder stack wrt input features") {
    Model model(small_config(Mode::baseline), 31);
    Tensor feats = random_tensor({9, 6}, rng);
    Tensor w = random_tensor({Model::subsampled_length(9), 8}, rng);
    double err = grad_check(
        [&](Graph& g, Var x) {
          Ctx ctx(g);
          EncodeResult enc = model.encode(ctx, x, 9);
          return dot_const(enc.h, w);
        },
        feats, 1e-5);
    CHECK(err <= 1e-4);
  }

  SUBCASE("encoder + ctc head wrt all parameters") {
    Model model(small_config(Mode::baseline), 33);
    Tensor feats = random_tensor({8, 6}, rng);
    Tensor w = random_tensor({Model::subsampled_length(8), 9}, rng);
    double err = testutil::param_grad_check(model.parameters(), [&](Graph& g) {
      Ctx ctx(g);
      EncodeResult enc = model.encode(ctx, feats, 8);
      return dot_const(model.ctc_head(ctx, enc.h), w);
    });
    CHECK(err <= 1e-4);
  }

  SUBCASE("decoder wrt all parameters, sep mode with auxiliary head") {
    ModelConfig cfg = small_config(Mode::sep);
    cfg.sememe_prediction = true;
    Model model(cfg, 37);
    Tensor feats = random_tensor({8, 6}, rng);
    std::vector<int> in{model.sos_id(), 2, 3};
    Tensor wl = random_tensor({3, 9}, rng);
    Tensor ws = random_tensor({3, 5}, rng);
    double err = testutil::param_grad_check(model.parameters(), [&](Graph& g) {
      Ctx ctx(g);
      EncodeResult enc = model.encode(ctx, feats, 8);
      DecodeOutputs out = model.decode_tokens(ctx, enc.h, enc.length, in, &lex);
      return add(dot_const(out.logits, wl), dot_const(*out.sememe_probs, ws));
    });
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("checkpoint round trip and config diff") {
  std::string dir = testutil::temp_dir("ckpt");
  ModelConfig cfg = small_config(Mode::sep);
  Model model(cfg, 55);
  std::string p1 = dir + "/a.bin";
  model.save(p1);

  Model loaded = Model::load(p1);
  CHECK(loaded.config() == model.config());
  std::string p2 = dir + "/b.bin";
  loaded.save(p2);
  CHECK(testutil::file_bytes(p1) == testutil::file_bytes(p2));

  // values survive at f32 precision
  for (size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& a = model.parameters()[i]->value.v;
    const auto& b = loaded.parameters()[i]->value.v;
    for (size_t j = 0; j < a.size(); ++j) {
      CHECK(b[j] == static_cast<double>(static_cast<float>(a[j])));
    }
  }

  // mismatch rejected with a field-naming diff
  ModelConfig other = cfg;
  other.d_model = 16;
  other.sememe_encoder_dims.clear();
  try {
    Model::load(p1, other);
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("d_model") != std::string::npos);
  }
  // matching expectation loads fine
  Model ok = Model::load(p1, cfg);
  CHECK(ok.config() == model.config());

  // corrupt file
  std::ofstream bad(dir + "/bad.bin", std::ios::binary);
  bad << "garbage";
  bad.close();
  CHECK_THROWS_AS(Model::load(dir + "/bad.bin"), FormatError);
}
