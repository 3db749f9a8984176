#include "asrlab/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "asrlab/errors.hpp"
#include "asrlab/graph.hpp"

namespace asrlab {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::vector<int> ctc_greedy(const Tensor& logprobs) {
  int T = logprobs.rows(), V = logprobs.cols();
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < T; ++t) {
    int best = 0;
    double best_lp = logprobs.at(t, 0);
    for (int k = 1; k < V; ++k) {
      if (logprobs.at(t, k) > best_lp) {  // ties stay on the lowest id
        best_lp = logprobs.at(t, k);
        best = k;
      }
    }
    if (best != 0 && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

NBestList ctc_prefix_beam(const Tensor& logprobs, int beam) {
  if (beam < 1) throw ArgError("ctc_prefix_beam: beam must be >= 1");
  int T = logprobs.rows(), V = logprobs.cols();

  struct Mass {
    double pb = kNegInf;   // mass of paths ending in blank
    double pnb = kNegInf;  // mass of paths ending in the last label
    double total() const { return log_add(pb, pnb); }
  };
  std::map<std::vector<int>, Mass> beams;
  beams[{}] = Mass{0.0, kNegInf};

  for (int t = 0; t < T; ++t) {
    std::map<std::vector<int>, Mass> next;
    for (const auto& [prefix, mass] : beams) {
      int last = prefix.empty() ? -1 : prefix.back();
      for (int k = 0; k < V; ++k) {
        double p = logprobs.at(t, k);
        if (k == 0) {
          Mass& m = next[prefix];
          m.pb = log_add(m.pb, mass.pb + p, mass.pnb + p);
        } else if (k == last) {
          // same symbol extends the non-blank mass without a new prefix
          Mass& m = next[prefix];
          m.pnb = log_add(m.pnb, mass.pnb + p);
          // ...and starts a new copy only from the blank-ending mass
          std::vector<int> ext = prefix;
          ext.push_back(k);
          Mass& m2 = next[ext];
          m2.pnb = log_add(m2.pnb, mass.pb + p);
        } else {
          std::vector<int> ext = prefix;
          ext.push_back(k);
          Mass& m = next[ext];
          m.pnb = log_add(m.pnb, mass.pb + p, mass.pnb + p);
        }
      }
    }
    // prune to the beam; drop unreachable prefixes (zero mass)
    std::vector<std::pair<const std::vector<int>*, const Mass*>> ranked;
    ranked.reserve(next.size());
    for (const auto& [prefix, mass] : next) {
      if (mass.total() == kNegInf) continue;
      ranked.emplace_back(&prefix, &mass);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      double ta = a.second->total(), tb = b.second->total();
      if (ta != tb) return ta > tb;
      if (a.first->size() != b.first->size()) return a.first->size() < b.first->size();
      return *a.first < *b.first;
    });
    std::map<std::vector<int>, Mass> pruned;
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(beam); ++i) {
      pruned.emplace(*ranked[i].first, *ranked[i].second);
    }
    beams = std::move(pruned);
  }

  NBestList out;
  out.beam = beam;
  for (const auto& [prefix, mass] : beams) {
    Hypothesis h;
    h.tokens = prefix;
    h.ctc = mass.total();
    out.hyps.push_back(std::move(h));
  }
  std::sort(out.hyps.begin(), out.hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.ctc != b.ctc) return a.ctc > b.ctc;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  });
  if (static_cast<int>(out.hyps.size()) > beam) out.hyps.resize(static_cast<size_t>(beam));
  return out;
}

NBestList attention_beam_search(const StepScorer& scorer, int vocab, int eos, int beam, int max_len) {
  if (beam < 1) throw ArgError("attention_beam_search: beam must be >= 1");
  if (max_len < 1) throw ArgError("attention_beam_search: max_len must be >= 1");

  struct Live {
    std::vector<int> tokens;
    double score = 0.0;
  };
  auto live_less = [](const Live& a, const Live& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  };

  std::vector<Live> live{{std::vector<int>{}, 0.0}};
  std::vector<Hypothesis> completed;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Live> candidates;
    for (const Live& hyp : live) {
      std::vector<double> lp = scorer(hyp.tokens);
      if (static_cast<int>(lp.size()) != vocab) throw ArgError("attention_beam_search: scorer size mismatch");
      // expand with the hypothesis's top-beam tokens
      std::vector<int> idx(lp.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      size_t take = std::min(static_cast<size_t>(beam), idx.size());
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                        [&lp](int a, int b) {
                          if (lp[static_cast<size_t>(a)] != lp[static_cast<size_t>(b)]) {
                            return lp[static_cast<size_t>(a)] > lp[static_cast<size_t>(b)];
                          }
                          return a < b;
                        });
      for (size_t i = 0; i < take; ++i) {
        int tok = idx[i];
        Live ext;
        ext.tokens = hyp.tokens;
        ext.score = hyp.score + lp[static_cast<size_t>(tok)];
        if (tok == eos) {
          Hypothesis done;
          done.tokens = hyp.tokens;
          done.att = ext.score;  // eos log-prob included
          completed.push_back(std::move(done));
        } else {
          ext.tokens.push_back(tok);
          candidates.push_back(std::move(ext));
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), live_less);
    if (static_cast<int>(candidates.size()) > beam) candidates.resize(static_cast<size_t>(beam));
    live = std::move(candidates);
  }

  // pad with forced-terminated live hypotheses when too few completed
  if (static_cast<int>(completed.size()) < beam) {
    for (const Live& hyp : live) {
      std::vector<double> lp = scorer(hyp.tokens);
      Hypothesis done;
      done.tokens = hyp.tokens;
      done.att = hyp.score + lp[static_cast<size_t>(eos)];
      completed.push_back(std::move(done));
    }
  }

  std::sort(completed.begin(), completed.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.att != b.att) return a.att > b.att;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  });
  // duplicates can arise when a forced termination matches an earlier eos
  std::vector<Hypothesis> unique;
  for (auto& h : completed) {
    bool dup = false;
    for (const auto& u : unique) {
      if (u.tokens == h.tokens) {
        dup = true;
        break;
      }
    }
    if (!dup) unique.push_back(std::move(h));
    if (static_cast<int>(unique.size()) == beam) break;
  }
  NBestList out;
  out.beam = beam;
  out.hyps = std::move(unique);
  return out;
}

namespace {

StepScorer model_scorer(const DecoderContext& dc) {
  return [&dc](std::span<const int> prefix) {
    Graph g(false);
    Ctx ctx(g);
    std::vector<int> input;
    input.reserve(prefix.size() + 1);
    input.push_back(dc.model->sos_id());
    input.insert(input.end(), prefix.begin(), prefix.end());
    Var h = g.leaf(dc.h);
    DecodeOutputs out = dc.model->decode_tokens(ctx, h, dc.h_len, input, dc.lexicon);
    Var logp = log_softmax_rows(out.logits);
    const Tensor& lv = logp.val();
    int last = lv.rows() - 1;
    return std::vector<double>(lv.data() + static_cast<size_t>(last) * lv.cols(),
                               lv.data() + static_cast<size_t>(last + 1) * lv.cols());
  };
}

}  // namespace

NBestList attention_beam(const DecoderContext& dc, int beam, int max_len) {
  StepScorer scorer = model_scorer(dc);
  return attention_beam_search(scorer, dc.model->config().vocab, dc.model->eos_id(), beam, max_len);
}

double attention_score(const DecoderContext& dc, std::span<const int> tokens) {
  Graph g(false);
  Ctx ctx(g);
  std::vector<int> input;
  input.reserve(tokens.size() + 1);
  input.push_back(dc.model->sos_id());
  input.insert(input.end(), tokens.begin(), tokens.end());
  Var h = g.leaf(dc.h);
  DecodeOutputs out = dc.model->decode_tokens(ctx, h, dc.h_len, input, dc.lexicon);
  const Tensor& logp = log_softmax_rows(out.logits).val();
  double score = 0.0;
  for (size_t i = 0; i < tokens.size(); ++i) {
    score += logp.at(static_cast<int>(i), tokens[i]);
  }
  score += logp.at(static_cast<int>(tokens.size()), dc.model->eos_id());
  return score;
}

Hypothesis attention_rescore(const NBestList& nbest, const DecoderContext& dc, double lambda_dec) {
  if (nbest.hyps.empty()) throw ArgError("attention_rescore: empty n-best list");
  Hypothesis best;
  bool have = false;
  for (const Hypothesis& cand : nbest.hyps) {
    Hypothesis h = cand;
    h.att = attention_score(dc, h.tokens);
    h.combined = h.att + lambda_dec * h.ctc;
    bool better = false;
    if (!have) {
      better = true;
    } else if (h.combined != best.combined) {
      better = h.combined > best.combined;
    } else if (h.ctc != best.ctc) {
      better = h.ctc > best.ctc;
    } else {
      better = h.tokens.size() < best.tokens.size();
    }
    if (better) {
      best = std::move(h);
      have = true;
    }
  }
  return best;
}

void write_decode_records(const std::string& path, const std::vector<DecodeRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write decode output: " + path);
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id},   {"method", r.method},     {"text", r.text},
                     {"att", r.att}, {"ctc", r.ctc},           {"combined", r.combined}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<DecodeRecord> read_decode_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open decode output: " + path);
  std::vector<DecodeRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      DecodeRecord r;
      r.id = j.at("id").get<std::string>();
      r.method = j.at("method").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.att = j.at("att").get<double>();
      r.ctc = j.at("ctc").get<double>();
      r.combined = j.at("combined").get<double>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace asrlab
