#include "asrlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "asrlab/errors.hpp"

namespace asrlab {

EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  int n = static_cast<int>(ref.size());
  int m = static_cast<int>(hyp.size());
  std::vector<int> dp(static_cast<size_t>(n + 1) * (m + 1));
  auto at = [&dp, m](int i, int j) -> int& { return dp[static_cast<size_t>(i) * (m + 1) + j]; };
  for (int i = 0; i <= n; ++i) at(i, 0) = i;
  for (int j = 0; j <= m; ++j) at(0, j) = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      int sub = at(i - 1, j - 1) + (ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)] ? 0 : 1);
      int ins = at(i, j - 1) + 1;   // extra token in hyp
      int del = at(i - 1, j) + 1;   // missing token from ref
      at(i, j) = std::min({sub, ins, del});
    }
  }
  EditCounts c;
  c.distance = at(n, m);
  // backtrace, preferring substitution/match over insertion over deletion
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      bool match = ref[static_cast<size_t>(i - 1)] == hyp[static_cast<size_t>(j - 1)];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++c.sub;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.ins;
      --j;
      continue;
    }
    ++c.del;
    --i;
  }
  return c;
}

double cer(const std::vector<std::vector<int>>& refs, const std::vector<std::vector<int>>& hyps) {
  if (refs.size() != hyps.size()) throw ArgError("cer: refs/hyps size mismatch");
  int64_t dist = 0, len = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    dist += edit_distance(refs[i], hyps[i]).distance;
    len += static_cast<int64_t>(refs[i].size());
  }
  if (len == 0) throw ArgError("cer: total reference length is zero");
  return static_cast<double>(dist) / static_cast<double>(len);
}

LongTailSplit longtail_split(const std::vector<std::vector<int>>& train_texts, double threshold) {
  if (threshold < 0 || threshold > 1) throw ArgError("longtail_split: threshold must be in [0,1]");
  LongTailSplit split;
  split.threshold = threshold;
  int64_t total = 0;
  for (const auto& text : train_texts) {
    for (int tok : text) {
      split.counts[tok] += 1;
      ++total;
    }
  }
  if (total == 0) throw ArgError("longtail_split: empty training text");

  std::vector<std::pair<int, int64_t>> ranked(split.counts.begin(), split.counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  // compare in counts, not shares, so boundaries like 1/20 >= 0.05 hold
  // exactly despite 0.95 being inexact in binary
  double need = (1.0 - threshold) * static_cast<double>(total);
  double eps = static_cast<double>(total) * 1e-12;
  int64_t cum = 0;
  size_t i = 0;
  for (; i < ranked.size(); ++i) {
    if (static_cast<double>(cum) + eps >= need) break;  // minimal prefix reached
    split.head.insert(ranked[i].first);
    cum += ranked[i].second;
  }
  for (; i < ranked.size(); ++i) split.tail.insert(ranked[i].first);
  return split;
}

BinReport longtail_bins(const std::vector<std::vector<int>>& refs,
                        const std::vector<std::vector<int>>& hyps, const LongTailSplit& split) {
  if (refs.size() != hyps.size()) throw ArgError("longtail_bins: refs/hyps size mismatch");
  BinReport report;
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& ref = refs[i];
    if (ref.empty()) {
      ++report.skipped_empty;
      continue;
    }
    int tail = 0;
    for (int tok : ref) {
      if (split.is_tail(tok)) ++tail;
    }
    double r = static_cast<double>(tail) / static_cast<double>(ref.size());
    int bin = std::min(static_cast<int>(std::floor(10.0 * r)), 9);
    EditCounts c = edit_distance(ref, hyps[i]);
    BinCell& cell = report.bins[static_cast<size_t>(bin)];
    cell.utts += 1;
    cell.sub += c.sub;
    cell.ins += c.ins;
    cell.del += c.del;
    cell.ref_len += static_cast<int64_t>(ref.size());
  }
  return report;
}

DomainReport domain_report(const std::vector<std::string>& domains,
                           const std::vector<std::vector<int>>& refs,
                           const std::vector<std::vector<int>>& hyps,
                           const std::vector<std::string>* hyp_domains) {
  if (domains.size() != refs.size() || refs.size() != hyps.size()) {
    throw ArgError("domain_report: input size mismatch");
  }
  if (domains.empty()) throw ArgError("domain_report: no utterances");
  if (hyp_domains != nullptr) {
    if (hyp_domains->size() != hyps.size()) throw ArgError("domain_report: hyp domain size mismatch");
    std::set<std::string> known(domains.begin(), domains.end());
    for (const auto& tag : *hyp_domains) {
      if (known.find(tag) == known.end()) {
        throw ArgError("domain_report: unknown domain tag '" + tag + "' in hypotheses");
      }
    }
  }
  std::map<std::string, std::pair<int64_t, int64_t>> acc;  // domain -> (dist, ref len)
  int64_t dist_all = 0, len_all = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    int64_t d = edit_distance(refs[i], hyps[i]).distance;
    auto& [dd, ll] = acc[domains[i]];
    dd += d;
    ll += static_cast<int64_t>(refs[i].size());
    dist_all += d;
    len_all += static_cast<int64_t>(refs[i].size());
  }
  DomainReport report;
  for (const auto& [dom, dl] : acc) {
    report.per_domain[dom] = dl.second > 0 ? static_cast<double>(dl.first) / dl.second : 0.0;
  }
  report.overall = len_all > 0 ? static_cast<double>(dist_all) / len_all : 0.0;
  return report;
}

std::string bins_csv(const BinReport& report) {
  std::ostringstream out;
  out << "bin,utterances,substitutions,insertions,deletions,ref_len,cer\n";
  for (size_t b = 0; b < report.bins.size(); ++b) {
    const BinCell& c = report.bins[b];
    out << b << "," << c.utts << "," << c.sub << "," << c.ins << "," << c.del << "," << c.ref_len << ","
        << c.cer() << "\n";
  }
  return out.str();
}

std::string domain_csv(const DomainReport& report) {
  std::ostringstream out;
  out << "domain,cer\n";
  for (const auto& [dom, c] : report.per_domain) out << dom << "," << c << "\n";
  out << "overall," << report.overall << "\n";
  return out.str();
}

std::string comparison_csv(const std::vector<std::string>& columns,
                           const std::map<std::string, std::vector<double>>& rows) {
  std::ostringstream out;
  out << "model";
  for (const auto& c : columns) out << "," << c;
  out << "\n";
  for (const auto& [name, vals] : rows) {
    if (vals.size() != columns.size()) throw ArgError("comparison_csv: row width mismatch");
    out << name;
    for (double v : vals) out << "," << v;
    out << "\n";
  }
  return out.str();
}

}  // namespace asrlab
