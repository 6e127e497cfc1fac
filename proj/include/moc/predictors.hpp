#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/graph.hpp"
#include "moc/params.hpp"
#include "moc/rng.hpp"
#include "moc/survival.hpp"

namespace moc {

enum class HiddenAct { relu, tanh_fn, selu_fn };

inline const char* to_string(HiddenAct a) {
  switch (a) {
    case HiddenAct::relu: return "relu";
    case HiddenAct::tanh_fn: return "tanh";
    case HiddenAct::selu_fn: return "selu";
  }
  return "unknown";
}

inline HiddenAct parse_hidden_act(const std::string& s) {
  if (s == "relu") return HiddenAct::relu;
  if (s == "tanh") return HiddenAct::tanh_fn;
  if (s == "selu") return HiddenAct::selu_fn;
  fail(ErrorCategory::config, "unknown hidden activation '" + s + "'");
}

struct ModelDims {
  int d_p = 1024;
  int d_g = 0;
  int attn_dim = 256;
  int path_h1 = 512;
  int path_h2 = 256;
  int gene_h1 = 256;
  int gene_h2 = 256;
  HiddenAct path_act = HiddenAct::relu;

  bool operator==(const ModelDims&) const = default;

  void validate() const {
    require(d_p >= 1 && d_g >= 1, ErrorCategory::config, "feature dimensions must be >= 1");
    require(attn_dim >= 1 && path_h1 >= 1 && path_h2 >= 1 && gene_h1 >= 1 && gene_h2 >= 1,
            ErrorCategory::config, "layer widths must be >= 1");
  }
};

// Parameter slot order; the flat view (and every checkpoint) follows it.
namespace slots {
enum : int {
  amil_v = 0,
  amil_u,
  amil_w,
  path_w1,
  path_b1,
  path_w2,
  path_b2,
  path_w3,
  path_b3,
  gene_w1,
  gene_b1,
  gene_w2,
  gene_b2,
  gene_w3,
  gene_b3,
  count,
};
}  // namespace slots

// All-zero parameter set with the canonical slot layout for these dims.
inline ParamSet param_layout(const ModelDims& dims) {
  dims.validate();
  const auto dp = static_cast<std::size_t>(dims.d_p);
  const auto dg = static_cast<std::size_t>(dims.d_g);
  const auto ad = static_cast<std::size_t>(dims.attn_dim);
  const auto p1 = static_cast<std::size_t>(dims.path_h1);
  const auto p2 = static_cast<std::size_t>(dims.path_h2);
  const auto g1 = static_cast<std::size_t>(dims.gene_h1);
  const auto g2 = static_cast<std::size_t>(dims.gene_h2);

  ParamSet p;
  p.add("amil.V", NumArray({ad, dp}));
  p.add("amil.U", NumArray({ad, dp}));
  p.add("amil.w", NumArray({ad}));
  p.add("path.W1", NumArray({p1, dp}));
  p.add("path.b1", NumArray({p1}));
  p.add("path.W2", NumArray({p2, p1}));
  p.add("path.b2", NumArray({p2}));
  p.add("path.W3", NumArray({1, p2}));
  p.add("path.b3", NumArray({1}));
  p.add("snn.W1", NumArray({g1, dg}));
  p.add("snn.b1", NumArray({g1}));
  p.add("snn.W2", NumArray({g2, g1}));
  p.add("snn.b2", NumArray({g2}));
  p.add("snn.W3", NumArray({1, g2}));
  p.add("snn.b3", NumArray({1}));
  return p;
}

// Hidden affine weights get fan-in-scaled Gaussian draws (the scaling the
// self-normalizing branch requires); biases start at zero. The final layer
// of each branch is zero so a fresh predictor emits exactly 0.5.
inline ParamSet init_params(std::uint64_t seed, const ModelDims& dims) {
  ParamSet p = param_layout(dims);
  Rng rng(derive_seed(seed, 0x696e6974ULL));
  auto fill_gaussian = [&rng, &p](int slot, std::size_t fan_in) {
    NumArray& w = p.tensor(slot);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std_dev);
  };
  fill_gaussian(slots::amil_v, static_cast<std::size_t>(dims.d_p));
  fill_gaussian(slots::amil_u, static_cast<std::size_t>(dims.d_p));
  fill_gaussian(slots::amil_w, static_cast<std::size_t>(dims.attn_dim));
  fill_gaussian(slots::path_w1, static_cast<std::size_t>(dims.d_p));
  fill_gaussian(slots::path_w2, static_cast<std::size_t>(dims.path_h1));
  fill_gaussian(slots::gene_w1, static_cast<std::size_t>(dims.d_g));
  fill_gaussian(slots::gene_w2, static_cast<std::size_t>(dims.gene_h1));
  return p;
}

struct BranchOutputs {
  int prob = -1;              // post-sigmoid risk, a scalar in (0,1)
  int logit = -1;             // output pre-activation
  int weighted_feature = -1;  // attention-pooled bag feature (pathology only)
  int attention = -1;         // attention weights (pathology only)
};

namespace predictors_detail {

inline int hidden_act_node(Graph& g, int x, HiddenAct act) {
  switch (act) {
    case HiddenAct::relu: return g.relu_node(x);
    case HiddenAct::tanh_fn: return g.tanh_node(x);
    case HiddenAct::selu_fn: return g.selu_node(x);
  }
  fail(ErrorCategory::state, "unknown hidden activation");
}

}  // namespace predictors_detail

// Gated-attention pooling over the patch bag followed by an MLP head.
// Attention weight path: softmax_j of w . (tanh(V pf_j) * sigmoid(U pf_j)).
inline BranchOutputs add_pathology_branch(Graph& g, int bag_node, const ModelDims& dims,
                                          int slot_base, double dropout_rate, int stream) {
  const int tanh_arm = g.tanh_node(g.affine(bag_node, slot_base + slots::amil_v));
  const int gate_arm = g.sigmoid_node(g.affine(bag_node, slot_base + slots::amil_u));
  const int gated = g.mul(tanh_arm, gate_arm);
  const int scores = g.matvec(gated, slot_base + slots::amil_w);
  const int alpha = g.softmax(scores);
  const int wf = g.sum_rows(g.row_scale(bag_node, alpha));

  int h = g.affine(wf, slot_base + slots::path_w1, slot_base + slots::path_b1);
  h = predictors_detail::hidden_act_node(g, h, dims.path_act);
  h = g.dropout(h, dropout_rate, stream);
  h = g.affine(h, slot_base + slots::path_w2, slot_base + slots::path_b2);
  h = predictors_detail::hidden_act_node(g, h, dims.path_act);
  h = g.dropout(h, dropout_rate, stream);
  const int logit = g.affine(h, slot_base + slots::path_w3, slot_base + slots::path_b3);

  BranchOutputs out;
  out.logit = logit;
  out.prob = g.sigmoid_node(logit);
  out.weighted_feature = wf;
  out.attention = alpha;
  return out;
}

// Self-normalizing branch over the gene vector: SELU hidden layers with
// alpha-dropout, sigmoid output.
inline BranchOutputs add_genomics_branch(Graph& g, int gene_node,
                                         int slot_base, double dropout_rate, int stream) {
  int h = g.affine(gene_node, slot_base + slots::gene_w1, slot_base + slots::gene_b1);
  h = g.selu_node(h);
  h = g.alpha_dropout(h, dropout_rate, stream);
  h = g.affine(h, slot_base + slots::gene_w2, slot_base + slots::gene_b2);
  h = g.selu_node(h);
  h = g.alpha_dropout(h, dropout_rate, stream);
  const int logit = g.affine(h, slot_base + slots::gene_w3, slot_base + slots::gene_b3);

  BranchOutputs out;
  out.logit = logit;
  out.prob = g.sigmoid_node(logit);
  return out;
}

// Decision-level fusion: the mean of the two modality risks.
inline double fuse(double p, double g) {
  require(p > 0.0 && p < 1.0 && g > 0.0 && g < 1.0, ErrorCategory::argument,
          "fuse expects risks strictly inside (0,1)");
  return (p + g) / 2.0;
}

struct RiskPrediction {
  double p = 0.0;
  double g = 0.0;
  double r = 0.0;
};

// Eval-mode predictor over a fixed parameter snapshot. Holds one graph per
// branch, so one instance is single-threaded; copies are independent.
class MsrpPredictor {
 public:
  explicit MsrpPredictor(const ModelDims& dims) : dims_(dims) {
    dims_.validate();
    const int bag = path_graph_.input({0, static_cast<std::size_t>(dims_.d_p)});
    path_nodes_ = add_pathology_branch(path_graph_, bag, dims_, 0, 0.0, 0);
    path_graph_.mark_output(path_nodes_.prob);

    const int gene = gene_graph_.input({static_cast<std::size_t>(dims_.d_g)});
    gene_nodes_ = add_genomics_branch(gene_graph_, gene, 0, 0.0, 0);
    gene_graph_.mark_output(gene_nodes_.prob);
  }

  const ModelDims& dims() const { return dims_; }

  double pathology_risk(const NumArray& bag, const ParamSet& params) {
    const NumArray inputs[] = {bag};
    return path_graph_.forward(params, inputs).scalar_value();
  }

  double genomics_risk(const NumArray& gene, const ParamSet& params) {
    const NumArray inputs[] = {gene};
    return gene_graph_.forward(params, inputs).scalar_value();
  }

  RiskPrediction predict(const FeatureSet& fs, const ParamSet& params) {
    RiskPrediction rp;
    rp.p = pathology_risk(fs.bag, params);
    rp.g = genomics_risk(fs.gene, params);
    rp.r = fuse(rp.p, rp.g);
    return rp;
  }

  // Attention-pooled bag feature (the weighted sum the MLP head consumes).
  NumArray attention_pooled(const NumArray& bag, const ParamSet& params) {
    const NumArray inputs[] = {bag};
    path_graph_.forward(params, inputs);
    return path_graph_.node_array(path_nodes_.weighted_feature);
  }

  NumArray attention_weights(const NumArray& bag, const ParamSet& params) {
    const NumArray inputs[] = {bag};
    path_graph_.forward(params, inputs);
    return path_graph_.node_array(path_nodes_.attention);
  }

 private:
  ModelDims dims_;
  Graph path_graph_;
  Graph gene_graph_;
  BranchOutputs path_nodes_;
  BranchOutputs gene_nodes_;
};

}  // namespace moc
