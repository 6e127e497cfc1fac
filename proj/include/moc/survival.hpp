#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/numarray.hpp"
#include "moc/rng.hpp"

namespace moc {

// One subject. `event` is true when the death was observed (uncensored);
// for censored subjects `time` is the last follow-up, a lower bound on the
// true survival time.
struct SurvivalRecord {
  std::string id;
  double time = 0.0;
  bool event = false;
};

// Oriented training pair: the higher-risk member died (event observed)
// strictly earlier than the lower-risk member's time.
struct ContrastPair {
  std::string higher_id;
  std::string lower_id;
};

// Per-subject features: a bag of patch feature vectors (n_i x d_p) and one
// gene expression vector (d_g).
struct FeatureSet {
  NumArray bag;
  NumArray gene;
};

struct Cohort {
  std::vector<SurvivalRecord> records;
  std::map<std::string, FeatureSet> features;

  int d_p() const {
    if (features.empty()) return 0;
    return static_cast<int>(features.begin()->second.bag.cols());
  }
  int d_g() const {
    if (features.empty()) return 0;
    return static_cast<int>(features.begin()->second.gene.size());
  }

  const FeatureSet& feature(const std::string& id) const {
    auto it = features.find(id);
    require(it != features.end(), ErrorCategory::data, "no features for id '" + id + "'");
    return it->second;
  }

  // Checks the cohort invariants; collects every violation before failing.
  void validate() const {
    std::vector<std::string> problems;
    std::set<std::string> seen;
    for (const SurvivalRecord& r : records) {
      if (!(r.time > 0.0)) problems.push_back("id '" + r.id + "': time must be > 0");
      if (!seen.insert(r.id).second) problems.push_back("id '" + r.id + "': duplicate id");
      if (!features.count(r.id)) problems.push_back("id '" + r.id + "': missing features");
    }
    int dp = -1, dg = -1;
    for (const auto& [id, fs] : features) {
      if (fs.bag.rank() != 2 || fs.bag.rows() < 1) {
        problems.push_back("id '" + id + "': patch bag must be a nonempty rank-2 array");
        continue;
      }
      if (dp < 0) dp = static_cast<int>(fs.bag.cols());
      if (static_cast<int>(fs.bag.cols()) != dp) {
        problems.push_back("id '" + id + "': patch feature dimension " +
                           std::to_string(fs.bag.cols()) + " != " + std::to_string(dp));
      }
      if (dg < 0) dg = static_cast<int>(fs.gene.size());
      if (static_cast<int>(fs.gene.size()) != dg) {
        problems.push_back("id '" + id + "': gene dimension " + std::to_string(fs.gene.size()) +
                           " != " + std::to_string(dg));
      }
    }
    if (!problems.empty()) {
      std::string msg = "cohort invariant violations:";
      for (const std::string& p : problems) msg += "\n  " + p;
      fail(ErrorCategory::data, msg);
    }
  }

  Cohort subset(std::span<const std::string> ids) const {
    std::set<std::string> wanted(ids.begin(), ids.end());
    Cohort out;
    for (const SurvivalRecord& r : records) {
      if (wanted.count(r.id)) {
        out.records.push_back(r);
        auto it = features.find(r.id);
        if (it != features.end()) out.features.emplace(r.id, it->second);
      }
    }
    return out;
  }
};

// All valid oriented pairs among the records, visiting each unordered pair
// once. A pair exists when the strictly earlier time belongs to an
// uncensored subject; equal times never pair. Output is sorted by
// (higher_id, lower_id).
inline std::vector<ContrastPair> build_pairs(std::span<const SurvivalRecord> records) {
  std::vector<ContrastPair> pairs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = i + 1; j < records.size(); ++j) {
      const SurvivalRecord& a = records[i];
      const SurvivalRecord& b = records[j];
      if (a.time == b.time) continue;
      const SurvivalRecord& earlier = a.time < b.time ? a : b;
      const SurvivalRecord& later = a.time < b.time ? b : a;
      if (!earlier.event) continue;
      pairs.push_back({earlier.id, later.id});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const ContrastPair& x, const ContrastPair& y) {
    if (x.higher_id != y.higher_id) return x.higher_id < y.higher_id;
    return x.lower_id < y.lower_id;
  });
  return pairs;
}

inline std::vector<ContrastPair> build_pairs(const Cohort& cohort) {
  return build_pairs(std::span<const SurvivalRecord>(cohort.records));
}

struct FoldSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

// Disjoint folds covering every id; sizes differ by at most one (the first
// n % k folds get the extra element); deterministic given the seed.
inline std::vector<FoldSplit> kfold_split(const Cohort& cohort, int k, std::uint64_t seed) {
  const int n = static_cast<int>(cohort.records.size());
  require(k >= 2, ErrorCategory::argument, "k must be >= 2");
  require(k <= n, ErrorCategory::argument,
          "k = " + std::to_string(k) + " exceeds cohort size " + std::to_string(n));

  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (const SurvivalRecord& r : cohort.records) ids.push_back(r.id);
  Rng rng(derive_seed(seed, 0x6b666f6cULL));
  rng.shuffle(ids);

  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  const int base = n / k;
  const int rem = n % k;
  std::size_t cursor = 0;
  for (int f = 0; f < k; ++f) {
    const int take = base + (f < rem ? 1 : 0);
    for (int t = 0; t < take; ++t) folds[static_cast<std::size_t>(f)].push_back(ids[cursor++]);
  }

  std::vector<FoldSplit> splits(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldSplit& s = splits[static_cast<std::size_t>(f)];
    s.val_ids = folds[static_cast<std::size_t>(f)];
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      const auto& src = folds[static_cast<std::size_t>(g)];
      s.train_ids.insert(s.train_ids.end(), src.begin(), src.end());
    }
    std::sort(s.val_ids.begin(), s.val_ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
  }
  return splits;
}

}  // namespace moc
