#include "asrlab/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "asrlab/errors.hpp"
#include "asrlab/util.hpp"

namespace asrlab {

namespace fs = std::filesystem;
using nlohmann::json;

void DecodeConfig::validate() const {
  if (!is_valid_method(method)) {
    throw ConfigError("decode.method '" + method +
                      "' unknown (expected attention|ctc_greedy|ctc_prefix_beam|attention_rescoring)");
  }
  if (beam < 1) throw ConfigError("decode.beam must be >= 1");
  if (max_len_cap < 1) throw ConfigError("decode.max_len_cap must be >= 1");
}

bool is_valid_method(const std::string& m) {
  for (const char* k : kDecodeMethods) {
    if (m == k) return true;
  }
  return false;
}

namespace {

// get-with-default that tracks consumed keys so unknown ones can be rejected
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config section '" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + where_ + "." + key + "': " + e.what());
    }
  }

  bool has(const char* key) const { return j_.find(key) != j_.end(); }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.find(it.key()) == seen_.end()) {
        throw ConfigError("unknown config key '" + where_ + "." + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json domain_to_json(const DomainSpec& d) {
  return json{{"name", d.name},
              {"bigram_seed", d.bigram_seed},
              {"channel_offset", d.channel_offset},
              {"train_share", d.train_share},
              {"dev_share", d.dev_share},
              {"test_share", d.test_share}};
}

DomainSpec domain_from_json(const json& j, const std::string& where) {
  Section s(j, where);
  DomainSpec d;
  s.get("name", d.name);
  s.get("bigram_seed", d.bigram_seed);
  s.get("channel_offset", d.channel_offset);
  s.get("train_share", d.train_share);
  s.get("dev_share", d.dev_share);
  s.get("test_share", d.test_share);
  s.finish();
  return d;
}

json corpus_to_json(const CorpusSpec& c) {
  json domains = json::array();
  for (const auto& d : c.domains) domains.push_back(domain_to_json(d));
  return json{{"vocab_size", c.vocab_size},
              {"sememe_count", c.sememe_count},
              {"zipf_z", c.zipf_z},
              {"feature_dim", c.feature_dim},
              {"frames_per_token", json::array({c.frames_per_token_min, c.frames_per_token_max})},
              {"noise_sigma", c.noise_sigma},
              {"tokens_per_utt", json::array({c.tokens_per_utt_min, c.tokens_per_utt_max})},
              {"bigram_blend", c.bigram_blend},
              {"bigram_window", c.bigram_window},
              {"lexicon_coverage", c.lexicon_coverage},
              {"sememes_per_token", json::array({c.sememes_per_token_min, c.sememes_per_token_max})},
              {"splits", json{{"train", c.splits.train}, {"dev", c.splits.dev}, {"test", c.splits.test}}},
              {"domains", domains},
              {"seed", c.seed}};
}

CorpusSpec corpus_from_json(const json& j) {
  Section s(j, "corpus");
  CorpusSpec c;
  c.domains = CorpusSpec::default_domains();
  s.get("vocab_size", c.vocab_size);
  s.get("sememe_count", c.sememe_count);
  s.get("zipf_z", c.zipf_z);
  s.get("feature_dim", c.feature_dim);
  if (const json* fr = s.sub("frames_per_token")) {
    auto v = fr->get<std::vector<int>>();
    if (v.size() != 2) throw ConfigError("corpus.frames_per_token must be [min, max]");
    c.frames_per_token_min = v[0];
    c.frames_per_token_max = v[1];
  }
  s.get("noise_sigma", c.noise_sigma);
  if (const json* tr = s.sub("tokens_per_utt")) {
    auto v = tr->get<std::vector<int>>();
    if (v.size() != 2) throw ConfigError("corpus.tokens_per_utt must be [min, max]");
    c.tokens_per_utt_min = v[0];
    c.tokens_per_utt_max = v[1];
  }
  s.get("bigram_blend", c.bigram_blend);
  s.get("bigram_window", c.bigram_window);
  s.get("lexicon_coverage", c.lexicon_coverage);
  if (const json* sp = s.sub("sememes_per_token")) {
    auto v = sp->get<std::vector<int>>();
    if (v.size() != 2) throw ConfigError("corpus.sememes_per_token must be [min, max]");
    c.sememes_per_token_min = v[0];
    c.sememes_per_token_max = v[1];
  }
  if (const json* sj = s.sub("splits")) {
    Section ss(*sj, "corpus.splits");
    ss.get("train", c.splits.train);
    ss.get("dev", c.splits.dev);
    ss.get("test", c.splits.test);
    ss.finish();
  }
  if (const json* dj = s.sub("domains")) {
    if (!dj->is_array()) throw ConfigError("corpus.domains must be an array");
    c.domains.clear();
    int i = 0;
    for (const auto& dd : *dj) {
      c.domains.push_back(domain_from_json(dd, "corpus.domains[" + std::to_string(i++) + "]"));
    }
  }
  s.get("seed", c.seed);
  s.finish();
  return c;
}

json model_to_json(const ModelConfig& m) { return json::parse(m.to_json_string()); }

ModelConfig model_from_json(const json& j) {
  Section s(j, "model");
  ModelConfig m;
  s.get("d_model", m.d_model);
  s.get("heads", m.heads);
  s.get("enc_blocks", m.enc_blocks);
  s.get("dec_blocks", m.dec_blocks);
  s.get("d_ffn", m.d_ffn);
  s.get("dropout", m.dropout);
  s.get("feat_dim", m.feat_dim);
  s.get("vocab", m.vocab);
  s.get("sememes", m.sememes);
  std::string mode = mode_name(m.mode);
  s.get("mode", mode);
  m.mode = mode_from_name(mode);
  s.get("sememe_prediction", m.sememe_prediction);
  s.get("sememe_encoder_dims", m.sememe_encoder_dims);
  s.get("conv_kernel", m.conv_kernel);
  s.finish();
  return m;
}

json augment_to_json(const AugmentPolicy& a) {
  return json{{"enabled", a.enabled},
              {"freq_masks", a.freq_masks},
              {"freq_width", a.freq_width},
              {"time_masks", a.time_masks},
              {"time_width", a.time_width}};
}

AugmentPolicy augment_from_json(const json& j) {
  Section s(j, "train.augment");
  AugmentPolicy a;
  s.get("enabled", a.enabled);
  s.get("freq_masks", a.freq_masks);
  s.get("freq_width", a.freq_width);
  s.get("time_masks", a.time_masks);
  s.get("time_width", a.time_width);
  s.finish();
  return a;
}

json train_to_json(const TrainConfig& t) {
  return json{{"lr", t.lr},
              {"warmup", t.warmup},
              {"clip", t.clip},
              {"accumulation", t.accumulation},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lambda", t.lambda},
              {"alpha", t.alpha},
              {"label_smoothing", t.label_smoothing},
              {"dropout", t.dropout},
              {"seed", t.seed},
              {"checkpoint_avg", t.checkpoint_avg},
              {"sort_by_length", t.sort_by_length},
              {"dev_beam", t.dev_beam},
              {"dev_ctc_weight", t.dev_ctc_weight},
              {"precision", t.precision},
              {"augment", augment_to_json(t.augment)}};
}

TrainConfig train_from_json(const json& j) {
  Section s(j, "train");
  TrainConfig t;
  s.get("lr", t.lr);
  s.get("warmup", t.warmup);
  s.get("clip", t.clip);
  s.get("accumulation", t.accumulation);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lambda", t.lambda);
  s.get("alpha", t.alpha);
  s.get("label_smoothing", t.label_smoothing);
  s.get("dropout", t.dropout);
  s.get("seed", t.seed);
  s.get("checkpoint_avg", t.checkpoint_avg);
  s.get("sort_by_length", t.sort_by_length);
  s.get("dev_beam", t.dev_beam);
  s.get("dev_ctc_weight", t.dev_ctc_weight);
  s.get("precision", t.precision);
  if (const json* a = s.sub("augment")) t.augment = augment_from_json(*a);
  s.finish();
  return t;
}

json decode_to_json(const DecodeConfig& d) {
  return json{{"method", d.method},
              {"beam", d.beam},
              {"ctc_weight", d.ctc_weight},
              {"max_len_cap", d.max_len_cap}};
}

DecodeConfig decode_from_json(const json& j) {
  Section s(j, "decode");
  DecodeConfig d;
  s.get("method", d.method);
  s.get("beam", d.beam);
  s.get("ctc_weight", d.ctc_weight);
  s.get("max_len_cap", d.max_len_cap);
  s.finish();
  return d;
}

}  // namespace

std::string RunConfig::lexicon_path() const {
  if (!lexicon.empty()) return lexicon;
  return (fs::path(data_dir) / "lexicon.tsv").string();
}

std::string RunConfig::to_json_string() const {
  json j{{"corpus", corpus_to_json(corpus)}, {"model", model_to_json(model)},
         {"train", train_to_json(train)},   {"decode", decode_to_json(decode)},
         {"data_dir", data_dir},            {"lexicon", lexicon},
         {"out_dir", out_dir}};
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad JSON: ") + e.what());
  }
  Section s(j, "(root)");
  RunConfig cfg;
  if (const json* c = s.sub("corpus")) cfg.corpus = corpus_from_json(*c);
  if (const json* m = s.sub("model")) cfg.model = model_from_json(*m);
  if (const json* t = s.sub("train")) cfg.train = train_from_json(*t);
  if (const json* d = s.sub("decode")) cfg.decode = decode_from_json(*d);
  s.get("data_dir", cfg.data_dir);
  s.get("lexicon", cfg.lexicon);
  s.get("out_dir", cfg.out_dir);
  s.finish();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_json_string(read_text_file(path));
}

void RunConfig::write(const std::string& path) const { write_text_file(path, to_json_string()); }

void apply_profile(RunConfig& cfg, const std::string& profile) {
  if (profile == "paper") {
    cfg.model.d_model = 256;
    cfg.model.heads = 4;
    cfg.model.enc_blocks = 12;
    cfg.model.dec_blocks = 6;
    cfg.model.d_ffn = 2048;
    cfg.model.dropout = 0.1;
    cfg.train.lr = 0.002;
    cfg.train.warmup = 25000;
    cfg.train.clip = 5.0;
    cfg.train.accumulation = 4;
    cfg.train.epochs = 240;
    cfg.train.batch_size = 12;
    cfg.train.lambda = 0.3;
    cfg.train.alpha = 0.3;
    cfg.train.label_smoothing = 0.1;
    cfg.train.dropout = 0.1;
    cfg.train.checkpoint_avg = 30;
    cfg.train.dev_ctc_weight = 0.5;
    cfg.train.augment = AugmentPolicy{true, 2, 10, 2, 50};
  } else if (profile == "desk") {
    cfg.model.d_model = 64;
    cfg.model.heads = 4;
    cfg.model.enc_blocks = 2;
    cfg.model.dec_blocks = 2;
    cfg.model.d_ffn = 256;
    cfg.model.dropout = 0.1;
    cfg.train.lr = 0.002;
    cfg.train.warmup = 500;
    cfg.train.clip = 5.0;
    cfg.train.accumulation = 1;
    cfg.train.epochs = 20;
    cfg.train.batch_size = 8;
    cfg.train.lambda = 0.3;
    cfg.train.alpha = 0.3;
    cfg.train.label_smoothing = 0.1;
    cfg.train.dropout = 0.1;
    cfg.train.checkpoint_avg = 5;
    cfg.train.dev_ctc_weight = 0.5;
    cfg.train.augment = AugmentPolicy{true, 2, 10, 2, 6};
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected paper|desk)");
  }
}

}  // namespace asrlab
