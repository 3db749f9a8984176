#include "asrlab/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "asrlab/config.hpp"
#include "asrlab/decoding.hpp"
#include "asrlab/errors.hpp"
#include "asrlab/eval.hpp"
#include "asrlab/losses.hpp"
#include "asrlab/training.hpp"
#include "asrlab/util.hpp"

namespace asrlab {

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out;
  std::string profile;
  std::string mode;
  std::optional<uint64_t> seed;
};

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = RunConfig::from_file(o.config_path);
  if (!o.profile.empty()) apply_profile(cfg, o.profile);  // flags win over the file
  if (!o.mode.empty()) cfg.model.mode = mode_from_name(o.mode);
  if (o.seed.has_value()) {
    cfg.corpus.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (!o.out.empty()) cfg.out_dir = o.out;
  return cfg;
}

TokenVocab load_vocab(const std::string& data_dir) {
  std::string path = (fs::path(data_dir) / "tokens.txt").string();
  std::string text = read_text_file(path);
  std::vector<std::string> tokens;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      if (!line.empty()) tokens.push_back(line);
      line.clear();
    } else {
      line += c;
    }
  }
  if (!line.empty()) tokens.push_back(line);
  return TokenVocab(tokens);
}

int cmd_gen_data(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  if (!o.out.empty()) cfg.data_dir = o.out;
  generate_corpus(cfg.corpus, cfg.data_dir);
  cfg.write((fs::path(cfg.data_dir) / "config.json").string());
  std::cout << "corpus written to " << cfg.data_dir << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o) {
  RunConfig cfg = resolve_config(o);
  TokenVocab vocab = load_vocab(cfg.data_dir);
  auto parsed = parse_lexicon(read_text_file(cfg.lexicon_path()), vocab);

  cfg.model.vocab = vocab.size();
  cfg.model.sememes = parsed.lexicon.sememe_count();
  cfg.model.feat_dim = cfg.corpus.feature_dim;
  cfg.model.normalize();

  fs::create_directories(cfg.out_dir);
  cfg.write((fs::path(cfg.out_dir) / "config.json").string());

  TrainInputs in;
  in.model = cfg.model;
  in.train = cfg.train;
  in.train_manifest = (fs::path(cfg.data_dir) / "train.jsonl").string();
  in.dev_manifest = (fs::path(cfg.data_dir) / "dev.jsonl").string();
  in.vocab = &vocab;
  in.lexicon = &parsed.lexicon;
  in.out_dir = cfg.out_dir;

  TrainResult res = train(in);
  std::cout << "trained " << res.optimizer_steps << " steps; dev CER " << res.final_dev_cer
            << "; averaged model at " << res.averaged_path << "\n";
  return 0;
}

int cmd_decode(const CommonOpts& o, const std::string& model_path, const std::string& manifest_path,
               const std::string& method, const std::string& out_file) {
  if (!is_valid_method(method)) {
    std::string valid;
    for (const char* k : kDecodeMethods) valid += std::string(" ") + k;
    throw ConfigError("unknown method '" + method + "'; valid methods:" + valid);
  }
  RunConfig cfg = resolve_config(o);
  cfg.decode.method = method;
  cfg.decode.validate();

  Model model = Model::load(model_path);
  TokenVocab vocab = load_vocab(cfg.data_dir);
  if (vocab.size() != model.config().vocab) {
    throw ConfigError("vocab size mismatch between " + cfg.data_dir + " and checkpoint");
  }
  std::optional<ParsedLexicon> parsed;
  const SememeLexicon* lex = nullptr;
  if (model.config().uses_sememe_embeddings() || model.config().sp_active()) {
    parsed = parse_lexicon(read_text_file(cfg.lexicon_path()), vocab);
    lex = &parsed->lexicon;
  }

  std::vector<Utterance> utts = load_utterances(manifest_path, vocab);
  std::vector<DecodeRecord> records;
  records.reserve(utts.size());
  for (const Utterance& u : utts) {
    Graph g(false);
    Ctx ctx(g);
    EncodeResult enc = model.encode(ctx, u.features, u.features.rows());
    Tensor lp = model.ctc_head(ctx, enc.h).val();
    // only the first `length` rows are real
    Tensor lp_valid({enc.length, lp.cols()});
    std::copy_n(lp.data(), static_cast<size_t>(enc.length) * lp.cols(), lp_valid.data());

    DecodeRecord rec;
    rec.id = u.id;
    rec.method = method;
    DecoderContext dc{&model, enc.h.val(), enc.length, lex};
    if (method == "ctc_greedy") {
      std::vector<int> toks = ctc_greedy(lp_valid);
      double score = 0.0;
      for (int t = 0; t < lp_valid.rows(); ++t) {
        double best = lp_valid.at(t, 0);
        for (int k = 1; k < lp_valid.cols(); ++k) best = std::max(best, lp_valid.at(t, k));
        score += best;
      }
      rec.text = vocab.decode(toks);
      rec.ctc = score;
      rec.combined = score;
    } else if (method == "ctc_prefix_beam") {
      NBestList nbest = ctc_prefix_beam(lp_valid, cfg.decode.beam);
      rec.text = vocab.decode(nbest.hyps.front().tokens);
      rec.ctc = nbest.hyps.front().ctc;
      rec.combined = rec.ctc;
    } else if (method == "attention") {
      int max_len = std::min(enc.length, cfg.decode.max_len_cap);
      NBestList nbest = attention_beam(dc, cfg.decode.beam, max_len);
      rec.text = vocab.decode(nbest.hyps.front().tokens);
      rec.att = nbest.hyps.front().att;
      rec.combined = rec.att;
    } else {  // attention_rescoring
      NBestList nbest = ctc_prefix_beam(lp_valid, cfg.decode.beam);
      Hypothesis best = attention_rescore(nbest, dc, cfg.decode.ctc_weight);
      rec.text = vocab.decode(best.tokens);
      rec.att = best.att;
      rec.ctc = best.ctc;
      rec.combined = best.combined;
    }
    records.push_back(std::move(rec));
  }

  std::string out_path = out_file;
  if (out_path.empty()) {
    fs::create_directories(cfg.out_dir);
    out_path = (fs::path(cfg.out_dir) / ("hyps_" + method + ".jsonl")).string();
  } else if (fs::path(out_path).has_parent_path()) {
    fs::create_directories(fs::path(out_path).parent_path());
  }
  write_decode_records(out_path, records);
  std::cout << "decoded " << records.size() << " utterances with " << method << " -> " << out_path
            << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& refs_path, const std::string& hyps_path,
             const std::string& train_manifest, bool longtail, double tail_threshold) {
  RunConfig cfg = resolve_config(o);
  if (longtail && train_manifest.empty()) {
    throw ConfigError("--longtail requires --train-manifest for the occurrence counts");
  }
  TokenVocab vocab = load_vocab(cfg.data_dir);
  Manifest refs = read_manifest(refs_path, false);
  std::vector<DecodeRecord> hyps = read_decode_records(hyps_path);

  std::map<std::string, const ManifestRecord*> ref_by_id;
  for (const auto& r : refs.records) ref_by_id[r.id] = &r;
  std::map<std::string, const DecodeRecord*> hyp_by_id;
  for (const auto& h : hyps) hyp_by_id[h.id] = &h;

  std::vector<std::string> offenders;
  for (const auto& [id, r] : ref_by_id) {
    if (hyp_by_id.find(id) == hyp_by_id.end()) offenders.push_back(id + " (missing hyp)");
  }
  for (const auto& [id, h] : hyp_by_id) {
    if (ref_by_id.find(id) == ref_by_id.end()) offenders.push_back(id + " (missing ref)");
  }
  if (!offenders.empty()) {
    std::string msg = "refs/hyps id sets differ; first offenders:";
    for (size_t i = 0; i < offenders.size() && i < 5; ++i) msg += " " + offenders[i];
    throw ConfigError(msg);
  }

  std::vector<std::vector<int>> ref_toks, hyp_toks;
  std::vector<std::string> domains;
  for (const auto& r : refs.records) {
    ref_toks.push_back(vocab.encode(r.text));
    hyp_toks.push_back(vocab.encode(hyp_by_id[r.id]->text));
    domains.push_back(r.domain);
  }

  fs::create_directories(cfg.out_dir);
  DomainReport dom = domain_report(domains, ref_toks, hyp_toks);
  double overall = cer(ref_toks, hyp_toks);
  write_text_file((fs::path(cfg.out_dir) / "domain_cer.csv").string(), domain_csv(dom));

  nlohmann::json report{{"overall_cer", overall}, {"utterances", ref_toks.size()}};
  for (const auto& [d, c] : dom.per_domain) report["domain_cer"][d] = c;

  if (longtail) {
    Manifest train_m = read_manifest(train_manifest, false);
    std::vector<std::vector<int>> train_toks;
    for (const auto& r : train_m.records) train_toks.push_back(vocab.encode(r.text));
    LongTailSplit split = longtail_split(train_toks, tail_threshold);
    BinReport bins = longtail_bins(ref_toks, hyp_toks, split);
    write_text_file((fs::path(cfg.out_dir) / "longtail_bins.csv").string(), bins_csv(bins));
    report["longtail"] = {{"head_size", split.head.size()},
                          {"tail_size", split.tail.size()},
                          {"threshold", tail_threshold},
                          {"skipped_empty", bins.skipped_empty}};
    for (size_t b = 0; b < bins.bins.size(); ++b) {
      report["longtail"]["bin_cer"].push_back(bins.bins[b].cer());
      report["longtail"]["bin_utts"].push_back(bins.bins[b].utts);
    }
  }
  write_text_file((fs::path(cfg.out_dir) / "eval_report.json").string(), report.dump(2) + "\n");
  cfg.write((fs::path(cfg.out_dir) / "config.json").string());
  std::cout << "overall CER " << overall << "; reports in " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"hybrid CTC/AED speech-recognition lab with sememe knowledge integration"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string model_path, manifest_path, method = "attention_rescoring", out_file;
  std::string refs_path, hyps_path, train_manifest;
  bool longtail = false;
  double tail_threshold = 0.95;

  auto add_common = [&opts](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "JSON config file");
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--profile", opts.profile, "paper|desk")->check(CLI::IsMember({"paper", "desk"}));
    sub->add_option("--mode", opts.mode, "baseline|sp|se|sep");
    sub->add_option_function<uint64_t>(
        "--seed", [&opts](const uint64_t& v) { opts.seed = v; }, "master seed override");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen);

  CLI::App* tr = app.add_subcommand("train", "train a model on a generated corpus");
  add_common(tr);

  CLI::App* dec = app.add_subcommand("decode", "decode a manifest with a trained model");
  add_common(dec);
  dec->add_option("--model", model_path, "checkpoint path")->required();
  dec->add_option("--manifest", manifest_path, "manifest to decode")->required();
  dec->add_option("--method", method, "attention|ctc_greedy|ctc_prefix_beam|attention_rescoring");
  dec->add_option("--hyps-out", out_file, "hypothesis output file");

  CLI::App* ev = app.add_subcommand("eval", "score hypotheses against references");
  add_common(ev);
  ev->add_option("--refs", refs_path, "reference manifest")->required();
  ev->add_option("--hyps", hyps_path, "hypothesis file from decode")->required();
  ev->add_option("--train-manifest", train_manifest, "training manifest for long-tail counts");
  ev->add_flag("--longtail", longtail, "emit the 10-bin long-tail report");
  ev->add_option("--tail-threshold", tail_threshold, "tail occurrence share (default 0.95)");

  CLI::App* lt = app.add_subcommand("longtail-report", "eval with the long-tail report enabled");
  add_common(lt);
  lt->add_option("--refs", refs_path, "reference manifest")->required();
  lt->add_option("--hyps", hyps_path, "hypothesis file from decode")->required();
  lt->add_option("--train-manifest", train_manifest, "training manifest for long-tail counts")->required();
  lt->add_option("--tail-threshold", tail_threshold, "tail occurrence share (default 0.95)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(opts);
    if (tr->parsed()) return cmd_train(opts);
    if (dec->parsed()) return cmd_decode(opts, model_path, manifest_path, method, out_file);
    if (ev->parsed()) return cmd_eval(opts, refs_path, hyps_path, train_manifest, longtail, tail_threshold);
    if (lt->parsed()) return cmd_eval(opts, refs_path, hyps_path, train_manifest, true, tail_threshold);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ArgError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

}  // namespace asrlab
