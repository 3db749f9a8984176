#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace asrlab {

struct EditCounts {
  int distance = 0;
  int sub = 0;
  int ins = 0;
  int del = 0;
};

// Unit-cost Levenshtein; S/I/D from one optimal alignment with ties resolved
// preferring substitution over insertion over deletion.
EditCounts edit_distance(std::span<const int> ref, std::span<const int> hyp);

// Sum of distances over sum of reference lengths. May exceed 1.
double cer(const std::vector<std::vector<int>>& refs, const std::vector<std::vector<int>>& hyps);

struct LongTailSplit {
  std::set<int> head;
  std::set<int> tail;                 // observed-in-training tokens outside the head
  std::map<int, int64_t> counts;      // training occurrence counts
  double threshold = 0.95;

  // tokens unseen in training are tail
  bool is_tail(int token) const { return head.find(token) == head.end(); }
};

// Ranks tokens by descending training count (ties: ascending id); the head is
// the minimal prefix holding at least (1 - threshold) of the occurrence mass,
// i.e. the tail accounts for the bottom `threshold` share.
LongTailSplit longtail_split(const std::vector<std::vector<int>>& train_texts, double threshold);

struct BinCell {
  int64_t utts = 0;
  int64_t sub = 0;
  int64_t ins = 0;
  int64_t del = 0;
  int64_t ref_len = 0;
  double cer() const { return ref_len > 0 ? static_cast<double>(sub + ins + del) / ref_len : 0.0; }
};

struct BinReport {
  std::array<BinCell, 10> bins;
  int64_t skipped_empty = 0;  // empty references, excluded with a warning

  int64_t total_utts() const {
    int64_t n = 0;
    for (const auto& b : bins) n += b.utts;
    return n;
  }
};

// Bin index = min(floor(10 * tail_ratio), 9) with tail_ratio over the
// reference tokens.
BinReport longtail_bins(const std::vector<std::vector<int>>& refs,
                        const std::vector<std::vector<int>>& hyps, const LongTailSplit& split);

struct DomainReport {
  std::map<std::string, double> per_domain;
  double overall = 0.0;
};

// Per-domain CER plus overall. When hyp_domains is given, every tag must
// occur among the reference domains; an unknown tag raises ArgError naming it.
DomainReport domain_report(const std::vector<std::string>& domains,
                           const std::vector<std::vector<int>>& refs,
                           const std::vector<std::vector<int>>& hyps,
                           const std::vector<std::string>* hyp_domains = nullptr);

// CSV emitters for the report files.
std::string bins_csv(const BinReport& report);
std::string domain_csv(const DomainReport& report);
// rows: model names; columns: fixed label set (e.g. decoding methods)
std::string comparison_csv(const std::vector<std::string>& columns,
                           const std::map<std::string, std::vector<double>>& rows);

}  // namespace asrlab
