#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/survival.hpp"

namespace moc {

struct RiskScoredCohort {
  std::vector<SurvivalRecord> records;
  std::map<std::string, double> risk;

  void validate() const {
    for (const SurvivalRecord& r : records) {
      auto it = risk.find(r.id);
      require(it != risk.end(), ErrorCategory::data, "no risk score for id '" + r.id + "'");
      require(std::isfinite(it->second), ErrorCategory::data,
              "non-finite risk score for id '" + r.id + "'");
    }
  }
};

namespace metrics_detail {

// Fenwick tree over compressed risk ranks, counting inserted subjects.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}

  void add(std::size_t rank) {
    for (std::size_t i = rank + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }

  // Number of inserted values with rank < `rank`.
  std::int64_t count_below(std::size_t rank) const {
    std::int64_t total = 0;
    for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) total += tree_[i];
    return total;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace metrics_detail

// Concordance index over comparable pairs (strictly earlier time belongs to
// an uncensored subject): 1 for correctly ordered risks, 1/2 for tied risks.
// Counting runs over descending times with a rank tree; an O(n^2) loop must
// give the same integer counts.
inline double c_index(const RiskScoredCohort& sc) {
  sc.validate();
  const std::size_t n = sc.records.size();
  require(n >= 2, ErrorCategory::argument, "concordance needs at least two subjects");

  struct Entry {
    double time;
    bool event;
    double risk;
  };
  std::vector<Entry> entries;
  entries.reserve(n);
  for (const SurvivalRecord& r : sc.records) {
    entries.push_back({r.time, r.event, sc.risk.at(r.id)});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.time < b.time; });

  std::vector<double> risks_sorted;
  risks_sorted.reserve(n);
  for (const Entry& e : entries) risks_sorted.push_back(e.risk);
  std::sort(risks_sorted.begin(), risks_sorted.end());
  risks_sorted.erase(std::unique(risks_sorted.begin(), risks_sorted.end()), risks_sorted.end());
  auto rank_of = [&risks_sorted](double v) {
    return static_cast<std::size_t>(
        std::lower_bound(risks_sorted.begin(), risks_sorted.end(), v) - risks_sorted.begin());
  };

  metrics_detail::Fenwick tree(risks_sorted.size());
  std::int64_t inserted = 0;
  std::int64_t numerator_halves = 0;  // 2 per concordant pair, 1 per risk tie
  std::int64_t comparable = 0;

  // Walk tie groups of equal time from the latest time backwards; subjects
  // already inserted all have strictly later times.
  std::size_t i = n;
  while (i > 0) {
    std::size_t hi = i;
    const double t = entries[i - 1].time;
    while (i > 0 && entries[i - 1].time == t) --i;
    for (std::size_t k = i; k < hi; ++k) {
      if (!entries[k].event) continue;
      const std::size_t rank = rank_of(entries[k].risk);
      const std::int64_t below = tree.count_below(rank);
      const std::int64_t at_or_below = tree.count_below(rank + 1);
      const std::int64_t ties = at_or_below - below;
      numerator_halves += 2 * below + ties;
      comparable += inserted;
    }
    for (std::size_t k = i; k < hi; ++k) {
      tree.add(rank_of(entries[k].risk));
      ++inserted;
    }
  }

  require(comparable > 0, ErrorCategory::data,
          "concordance undefined: no comparable pairs in the cohort");
  return static_cast<double>(numerator_halves) / (2.0 * static_cast<double>(comparable));
}

// Product-limit survival curve. Vectors are aligned over the distinct event
// times in ascending order; a cohort without events yields empty vectors
// (the curve is identically 1).
struct KMCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<int> at_risk;
  std::vector<int> events;
};

inline KMCurve km_curve(std::span<const SurvivalRecord> records) {
  require(!records.empty(), ErrorCategory::argument, "empty record list");
  std::vector<const SurvivalRecord*> sorted;
  sorted.reserve(records.size());
  for (const SurvivalRecord& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const SurvivalRecord* a, const SurvivalRecord* b) { return a->time < b->time; });

  KMCurve curve;
  double s = 1.0;
  std::size_t i = 0;
  const std::size_t n = sorted.size();
  while (i < n) {
    const double t = sorted[i]->time;
    int deaths = 0;
    std::size_t j = i;
    while (j < n && sorted[j]->time == t) {
      if (sorted[j]->event) ++deaths;
      ++j;
    }
    if (deaths > 0) {
      const int at_risk = static_cast<int>(n - i);
      s *= 1.0 - static_cast<double>(deaths) / at_risk;
      curve.times.push_back(t);
      curve.survival.push_back(s);
      curve.at_risk.push_back(at_risk);
      curve.events.push_back(deaths);
    }
    i = j;
  }
  return curve;
}

// Upper tail of the chi-square distribution with one degree of freedom:
// P(Z^2 > x) = erfc(sqrt(x / 2)).
inline double chisq1_sf(double x) {
  require(x >= 0.0, ErrorCategory::argument, "chi-square statistic must be >= 0");
  return std::erfc(std::sqrt(x / 2.0));
}

struct LogRankResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

// Two-group log-rank test with the hypergeometric variance; subjects tied
// at an event time are pooled.
inline LogRankResult logrank_test(std::span<const SurvivalRecord> group_a,
                                  std::span<const SurvivalRecord> group_b) {
  require(!group_a.empty() && !group_b.empty(), ErrorCategory::argument,
          "both groups must be nonempty");

  struct Item {
    double time;
    bool event;
    bool in_a;
  };
  std::vector<Item> items;
  items.reserve(group_a.size() + group_b.size());
  bool any_event = false;
  for (const SurvivalRecord& r : group_a) {
    items.push_back({r.time, r.event, true});
    any_event = any_event || r.event;
  }
  for (const SurvivalRecord& r : group_b) {
    items.push_back({r.time, r.event, false});
    any_event = any_event || r.event;
  }
  require(any_event, ErrorCategory::data, "log-rank undefined: no events in either group");

  std::sort(items.begin(), items.end(),
            [](const Item& x, const Item& y) { return x.time < y.time; });

  std::size_t n_a = group_a.size();
  std::size_t n_b = group_b.size();
  double observed_minus_expected = 0.0;
  double variance = 0.0;

  std::size_t i = 0;
  while (i < items.size()) {
    const double t = items[i].time;
    int d = 0, d_a = 0;
    std::size_t leave_a = 0, leave_b = 0;
    std::size_t j = i;
    while (j < items.size() && items[j].time == t) {
      if (items[j].event) {
        ++d;
        if (items[j].in_a) ++d_a;
      }
      if (items[j].in_a) {
        ++leave_a;
      } else {
        ++leave_b;
      }
      ++j;
    }
    const double n = static_cast<double>(n_a + n_b);
    if (d > 0 && n_a + n_b > 1) {
      const double fa = static_cast<double>(n_a) / n;
      observed_minus_expected += static_cast<double>(d_a) - d * fa;
      variance += d * fa * (1.0 - fa) * (n - d) / (n - 1.0);
    }
    n_a -= leave_a;
    n_b -= leave_b;
    i = j;
  }

  LogRankResult result;
  result.n_a = group_a.size();
  result.n_b = group_b.size();
  result.statistic =
      variance > 0.0 ? observed_minus_expected * observed_minus_expected / variance : 0.0;
  result.p_value = chisq1_sf(result.statistic);
  return result;
}

struct MedianSplit {
  std::vector<std::string> high_ids;
  std::vector<std::string> low_ids;
};

// Median risk split. Subjects strictly above the median go high, strictly
// below go low; subjects exactly at the median are dealt alternately (in
// ascending id order, each to the currently smaller group, low first on a
// tie) so the group sizes stay balanced and reproducible.
inline MedianSplit median_split(const RiskScoredCohort& sc) {
  sc.validate();
  const std::size_t n = sc.records.size();
  require(n >= 2, ErrorCategory::argument, "median split needs at least two subjects");

  std::vector<double> risks;
  risks.reserve(n);
  for (const SurvivalRecord& r : sc.records) risks.push_back(sc.risk.at(r.id));
  std::sort(risks.begin(), risks.end());
  const double median =
      n % 2 == 1 ? risks[n / 2] : (risks[n / 2 - 1] + risks[n / 2]) / 2.0;

  MedianSplit split;
  std::vector<std::string> at_median;
  for (const SurvivalRecord& r : sc.records) {
    const double v = sc.risk.at(r.id);
    if (v > median) {
      split.high_ids.push_back(r.id);
    } else if (v < median) {
      split.low_ids.push_back(r.id);
    } else {
      at_median.push_back(r.id);
    }
  }
  std::sort(at_median.begin(), at_median.end());
  for (const std::string& id : at_median) {
    if (split.low_ids.size() <= split.high_ids.size()) {
      split.low_ids.push_back(id);
    } else {
      split.high_ids.push_back(id);
    }
  }
  std::sort(split.high_ids.begin(), split.high_ids.end());
  std::sort(split.low_ids.begin(), split.low_ids.end());
  return split;
}

}  // namespace moc
