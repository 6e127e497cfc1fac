#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/survival.hpp"

namespace moc {

enum class LossMode {
  moc,
  intra_only,
  oc_unimodal_path,
  oc_unimodal_gene,
  cox_baseline,
};

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::moc: return "moc";
    case LossMode::intra_only: return "intra_only";
    case LossMode::oc_unimodal_path: return "oc_unimodal_path";
    case LossMode::oc_unimodal_gene: return "oc_unimodal_gene";
    case LossMode::cox_baseline: return "cox_baseline";
  }
  return "unknown";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "moc") return LossMode::moc;
  if (s == "intra_only") return LossMode::intra_only;
  if (s == "oc_unimodal_path") return LossMode::oc_unimodal_path;
  if (s == "oc_unimodal_gene") return LossMode::oc_unimodal_gene;
  if (s == "cox_baseline") return LossMode::cox_baseline;
  fail(ErrorCategory::config, "unknown loss mode '" + s + "'");
}

inline std::vector<std::string> term_names(LossMode m) {
  switch (m) {
    case LossMode::moc: return {"pp", "pg", "gp", "gg", "fused"};
    case LossMode::intra_only: return {"pp", "gg"};
    case LossMode::oc_unimodal_path: return {"pp"};
    case LossMode::oc_unimodal_gene: return {"gg"};
    case LossMode::cox_baseline: return {};
  }
  return {};
}

// Predictions for one oriented training pair. Slot `num` feeds the ratio
// numerators and slot `den` the denominators; during training the trainer
// puts the longer-lived (lower-risk) member in the numerator slot, so
// minimising the ratios pushes its risk below the shorter-lived member's.
struct PairPredictions {
  double p_num = 0.0;
  double g_num = 0.0;
  double p_den = 0.0;
  double g_den = 0.0;

  void validate() const {
    auto inside = [](double v) { return v > 0.0 && v < 1.0; };
    require(inside(p_num) && inside(g_num) && inside(p_den) && inside(g_den),
            ErrorCategory::argument, "pair predictions must lie strictly inside (0,1)");
  }
};

struct LossValue {
  double total = 0.0;
  std::vector<double> terms;
};

// Ratio contrast objective for one modality: loss = r_num / r_den.
inline double oc_loss(double r_num, double r_den) {
  require(r_num > 0.0 && r_num < 1.0 && r_den > 0.0 && r_den < 1.0, ErrorCategory::argument,
          "oc_loss arguments must lie strictly inside (0,1)");
  return r_num / r_den;
}

// Closed-form gradients of the ratio loss at the two output pre-activations,
// assuming each risk is the sigmoid of its pre-activation. These are the
// analytic oracle the reverse-mode engine is checked against.
struct OcGrads {
  double d_o_num = 0.0;
  double d_o_den = 0.0;
};

inline OcGrads oc_output_grads(double r_num, double r_den) {
  const double ratio = r_num / r_den;
  return {ratio * (1.0 - r_num), -ratio * (1.0 - r_den)};
}

// Cross-modal objective: four pairwise ratios plus the fused-sum ratio.
inline LossValue moc_loss(const PairPredictions& pp) {
  pp.validate();
  LossValue lv;
  lv.terms = {pp.p_num / pp.p_den, pp.p_num / pp.g_den, pp.g_num / pp.p_den,
              pp.g_num / pp.g_den, (pp.p_num + pp.g_num) / (pp.p_den + pp.g_den)};
  lv.total = std::accumulate(lv.terms.begin(), lv.terms.end(), 0.0);
  return lv;
}

// Ablation variant without the cross-modal and fused terms.
inline LossValue intra_modal_loss(const PairPredictions& pp) {
  pp.validate();
  LossValue lv;
  lv.terms = {pp.p_num / pp.p_den, pp.g_num / pp.g_den};
  lv.total = lv.terms[0] + lv.terms[1];
  return lv;
}

namespace cox_detail {

struct Sorted {
  std::vector<std::size_t> order;  // indices sorted by ascending time
};

inline Sorted sort_by_time(std::span<const SurvivalRecord> records) {
  Sorted s;
  s.order.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) s.order[i] = i;
  std::stable_sort(s.order.begin(), s.order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].time < records[b].time;
  });
  return s;
}

}  // namespace cox_detail

// Negative log partial likelihood of the proportional-hazards model with
// Breslow handling of tied event times. Risk sets use t_j >= t_i. Scores
// are unbounded log-risks aligned with the records.
inline double cox_npll(std::span<const double> scores, std::span<const SurvivalRecord> records) {
  require(scores.size() == records.size(), ErrorCategory::argument,
          "scores and records differ in length");
  require(!records.empty(), ErrorCategory::argument, "empty cohort");
  bool any_event = false;
  for (const SurvivalRecord& r : records) any_event = any_event || r.event;
  require(any_event, ErrorCategory::data,
          "partial likelihood undefined: no uncensored samples");

  const auto sorted = cox_detail::sort_by_time(records);
  const double max_score = *std::max_element(scores.begin(), scores.end());

  // Walk times in descending order keeping the running risk-set sum; all
  // subjects tied at one time enter the risk set together.
  double loss = 0.0;
  double risk_sum = 0.0;
  std::size_t i = sorted.order.size();
  while (i > 0) {
    std::size_t hi = i;  // one past the last element of the tie group
    const double t = records[sorted.order[i - 1]].time;
    while (i > 0 && records[sorted.order[i - 1]].time == t) --i;
    for (std::size_t k = i; k < hi; ++k) {
      risk_sum += std::exp(scores[sorted.order[k]] - max_score);
    }
    const double log_risk_set = max_score + std::log(risk_sum);
    for (std::size_t k = i; k < hi; ++k) {
      const std::size_t idx = sorted.order[k];
      if (records[idx].event) loss -= scores[idx] - log_risk_set;
    }
  }
  return loss;
}

// Value plus analytic gradient w.r.t. each score:
// d/ds_k = -event_k + exp(s_k) * sum over events i with t_i <= t_k of 1/S_i,
// where S_i is the risk-set sum at t_i.
inline double cox_npll_grad(std::span<const double> scores,
                            std::span<const SurvivalRecord> records,
                            std::span<double> dscores) {
  require(dscores.size() == scores.size(), ErrorCategory::argument,
          "gradient buffer size mismatch");
  const double loss = cox_npll(scores, records);  // validates inputs

  const auto sorted = cox_detail::sort_by_time(records);
  const double max_score = *std::max_element(scores.begin(), scores.end());

  // Risk-set sums per tie group, accumulated from the latest time backwards.
  struct Group {
    std::size_t begin, end;  // range in sorted.order
    double inv_risk_sum_times_events;
  };
  std::vector<Group> groups;
  double risk_sum = 0.0;
  std::size_t i = sorted.order.size();
  while (i > 0) {
    std::size_t hi = i;
    const double t = records[sorted.order[i - 1]].time;
    while (i > 0 && records[sorted.order[i - 1]].time == t) --i;
    int events = 0;
    for (std::size_t k = i; k < hi; ++k) {
      risk_sum += std::exp(scores[sorted.order[k]] - max_score);
      if (records[sorted.order[k]].event) ++events;
    }
    groups.push_back({i, hi, events > 0 ? events / risk_sum : 0.0});
  }

  // groups run from latest to earliest; prefix in time order means suffix here.
  double cum = 0.0;
  for (std::size_t gi = groups.size(); gi-- > 0;) {
    cum += groups[gi].inv_risk_sum_times_events;
    for (std::size_t k = groups[gi].begin; k < groups[gi].end; ++k) {
      const std::size_t idx = sorted.order[k];
      dscores[idx] = std::exp(scores[idx] - max_score) * cum - (records[idx].event ? 1.0 : 0.0);
    }
  }
  return loss;
}

}  // namespace moc
