#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moc/checkpoint.hpp"
#include "moc/common.hpp"
#include "moc/graph.hpp"
#include "moc/objectives.hpp"
#include "moc/params.hpp"
#include "moc/predictors.hpp"
#include "moc/rng.hpp"
#include "moc/survival.hpp"

namespace moc {

struct TrainConfig {
  double learning_rate = 0.0002;
  int accumulation_forwards = 128;  // one member forward = 1; a pair costs 2
  double dropout_rate = 0.25;
  int epochs = 1;
  std::uint64_t seed = 1;
  LossMode loss_mode = LossMode::moc;
  bool plain_sgd = false;  // bypass the adaptive optimizer (diagnostics/tests)

  void validate() const {
    require(learning_rate >= 0.0, ErrorCategory::config, "learning_rate must be >= 0");
    require(accumulation_forwards >= 2 && accumulation_forwards % 2 == 0, ErrorCategory::config,
            "accumulation_forwards must be even and >= 2");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCategory::config,
            "dropout_rate must lie in [0,1)");
    require(epochs >= 0, ErrorCategory::config, "epochs must be >= 0");
  }
};

// Bias-corrected adaptive-moment state; moment arrays mirror the ParamSet.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<NumArray> m;
  std::vector<NumArray> v;

  OptimizerState() = default;

  explicit OptimizerState(const ParamSet& ref) {
    for (int s = 0; s < ref.size(); ++s) {
      m.emplace_back(ref.tensor(s).shape());
      v.emplace_back(ref.tensor(s).shape());
    }
  }

  std::vector<double> flat_m() const {
    std::vector<double> out;
    for (const NumArray& t : m) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
  }
  std::vector<double> flat_v() const {
    std::vector<double> out;
    for (const NumArray& t : v) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
  }
  void restore_flat(std::span<const double> fm, std::span<const double> fv) {
    std::size_t expected = 0;
    for (const NumArray& t : m) expected += t.size();
    require(fm.size() == expected && fv.size() == expected, ErrorCategory::format,
            "optimizer moment size mismatch");
    std::size_t km = 0, kv = 0;
    for (NumArray& t : m) {
      for (double& x : t.values()) x = fm[km++];
    }
    for (NumArray& t : v) {
      for (double& x : t.values()) x = fv[kv++];
    }
  }
};

namespace train_detail {

inline void check_gradients_finite(const GradStore& grads) {
  for (int s = 0; s < grads.size(); ++s) {
    if (!grads.grad(s).all_finite()) {
      fail(ErrorCategory::numeric,
           "non-finite gradient in parameter block '" + grads.name(s) + "'");
    }
  }
}

}  // namespace train_detail

// Standard bias-corrected adaptive-moment update.
inline void adam_step(ParamSet& params, const GradStore& grads, OptimizerState& state, double lr) {
  require(params.size() == grads.size() && params.size() == static_cast<int>(state.m.size()),
          ErrorCategory::shape, "optimizer state does not match the parameter layout");
  train_detail::check_gradients_finite(grads);
  ++state.step;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (int s = 0; s < params.size(); ++s) {
    double* pm = state.m[static_cast<std::size_t>(s)].data();
    double* pv = state.v[static_cast<std::size_t>(s)].data();
    const double* pg = grads.grad(s).data();
    double* pt = params.tensor(s).data();
    const std::size_t n = params.tensor(s).size();
    for (std::size_t i = 0; i < n; ++i) {
      pm[i] = state.beta1 * pm[i] + (1.0 - state.beta1) * pg[i];
      pv[i] = state.beta2 * pv[i] + (1.0 - state.beta2) * pg[i] * pg[i];
      const double m_hat = pm[i] / bias1;
      const double v_hat = pv[i] / bias2;
      pt[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

inline void sgd_step(ParamSet& params, const GradStore& grads, double lr) {
  train_detail::check_gradients_finite(grads);
  for (int s = 0; s < params.size(); ++s) {
    const double* pg = grads.grad(s).data();
    double* pt = params.tensor(s).data();
    for (std::size_t i = 0; i < params.tensor(s).size(); ++i) pt[i] -= lr * pg[i];
  }
}

// Pair objective graph: two full predictors laid out back to back in one
// parameter set (numerator side at slot 0, denominator side at slots::count)
// with the ratio objective on top. Predictions are clamped away from the
// interval endpoints before any division.
struct PairGraph {
  Graph graph;
  LossMode mode = LossMode::moc;
  int loss = -1;
  std::vector<int> terms;
  bool uses_bag = false;
  bool uses_gene = false;
};

inline constexpr double kRiskClampLo = 1e-6;
inline constexpr double kRiskClampHi = 1.0 - 1e-6;

inline PairGraph build_pair_graph(const ModelDims& dims, LossMode mode, double dropout_rate) {
  require(mode != LossMode::cox_baseline, ErrorCategory::argument,
          "the proportional-hazards baseline does not use pair graphs");
  PairGraph pg;
  pg.mode = mode;
  Graph& g = pg.graph;
  const auto dp = static_cast<std::size_t>(dims.d_p);
  const auto dg = static_cast<std::size_t>(dims.d_g);
  const int den_base = slots::count;

  auto clamped = [&g](int prob) { return g.clamp(prob, kRiskClampLo, kRiskClampHi); };

  switch (mode) {
    case LossMode::moc:
    case LossMode::intra_only: {
      pg.uses_bag = pg.uses_gene = true;
      const int bag_num = g.input({0, dp});
      const int gene_num = g.input({dg});
      const int bag_den = g.input({0, dp});
      const int gene_den = g.input({dg});
      const int p_num = clamped(add_pathology_branch(g, bag_num, dims, 0, dropout_rate, 0).prob);
      const int g_num = clamped(add_genomics_branch(g, gene_num, 0, dropout_rate, 0).prob);
      const int p_den =
          clamped(add_pathology_branch(g, bag_den, dims, den_base, dropout_rate, 1).prob);
      const int g_den =
          clamped(add_genomics_branch(g, gene_den, den_base, dropout_rate, 1).prob);
      pg.terms.push_back(g.ratio(p_num, p_den));
      if (mode == LossMode::moc) {
        pg.terms.push_back(g.ratio(p_num, g_den));
        pg.terms.push_back(g.ratio(g_num, p_den));
      }
      pg.terms.push_back(g.ratio(g_num, g_den));
      if (mode == LossMode::moc) {
        pg.terms.push_back(g.ratio(g.add(p_num, g_num), g.add(p_den, g_den)));
      }
      break;
    }
    case LossMode::oc_unimodal_path: {
      pg.uses_bag = true;
      const int bag_num = g.input({0, dp});
      const int bag_den = g.input({0, dp});
      const int p_num = clamped(add_pathology_branch(g, bag_num, dims, 0, dropout_rate, 0).prob);
      const int p_den =
          clamped(add_pathology_branch(g, bag_den, dims, den_base, dropout_rate, 1).prob);
      pg.terms.push_back(g.ratio(p_num, p_den));
      break;
    }
    case LossMode::oc_unimodal_gene: {
      pg.uses_gene = true;
      const int gene_num = g.input({dg});
      const int gene_den = g.input({dg});
      const int g_num = clamped(add_genomics_branch(g, gene_num, 0, dropout_rate, 0).prob);
      const int g_den =
          clamped(add_genomics_branch(g, gene_den, den_base, dropout_rate, 1).prob);
      pg.terms.push_back(g.ratio(g_num, g_den));
      break;
    }
    case LossMode::cox_baseline:
      break;
  }

  // In moc mode the graph reorders nothing: terms stay in the documented
  // order pp, pg, gp, gg, fused.
  int total = pg.terms[0];
  for (std::size_t t = 1; t < pg.terms.size(); ++t) total = g.add(total, pg.terms[t]);
  pg.loss = total;
  g.mark_output(total);
  return pg;
}

// Single-predictor graph whose output is the mean of the two output
// pre-activations; used as the unbounded log-risk for the
// proportional-hazards baseline.
struct ScoreGraph {
  Graph graph;
  int score = -1;
};

inline ScoreGraph build_score_graph(const ModelDims& dims, double dropout_rate) {
  ScoreGraph sg;
  Graph& g = sg.graph;
  const int bag = g.input({0, static_cast<std::size_t>(dims.d_p)});
  const int gene = g.input({static_cast<std::size_t>(dims.d_g)});
  const int o_p = add_pathology_branch(g, bag, dims, 0, dropout_rate, 0).logit;
  const int o_g = add_genomics_branch(g, gene, 0, dropout_rate, 0).logit;
  sg.score = g.scale(g.add(o_p, o_g), 0.5);
  g.mark_output(sg.score);
  return sg;
}

struct WindowInfo {
  int epoch = 0;   // 1-based
  int window = 0;  // 1-based within the epoch
  int pairs = 0;   // training units consumed (pairs, or samples for cox)
  double loss_mean = 0.0;
  std::vector<double> term_means;
  const ParamSet* theta_z = nullptr;
  const ParamSet* theta_a = nullptr;
  const ParamSet* theta_b = nullptr;
};

// Dual-predictor training. Per accumulation window of W = forwards/2 pairs:
// copy theta_Z into both sides, run every pair (numerator side on the
// longer-lived member, denominator side on the shorter-lived one),
// accumulate gradients, apply one optimizer step per side, then average the
// sides back into theta_Z. W = 1 recovers the per-pair copy/average loop.
class Trainer {
 public:
  Trainer(const Cohort& cohort, std::vector<ContrastPair> pairs, TrainConfig cfg, ModelDims dims)
      : Trainer(cohort, std::move(pairs), cfg, dims, init_params(cfg.seed, dims)) {}

  Trainer(const Cohort& cohort, std::vector<ContrastPair> pairs, TrainConfig cfg, ModelDims dims,
          ParamSet initial)
      : cohort_(&cohort),
        pairs_(std::move(pairs)),
        cfg_(cfg),
        dims_(dims),
        theta_z_(std::move(initial)),
        run_rng_(derive_seed(cfg.seed, 0)),
        rng_a_(derive_seed(cfg.seed, 1)),
        rng_b_(derive_seed(cfg.seed, 2)) {
    cfg_.validate();
    dims_.validate();
    require(theta_z_.flat_size() == param_layout(dims_).flat_size(), ErrorCategory::shape,
            "initial parameters do not match the model dimensions");
    theta_a_ = theta_z_;
    theta_b_ = theta_z_;

    if (cfg_.loss_mode == LossMode::cox_baseline) {
      require(!cohort_->records.empty(), ErrorCategory::data, "empty cohort");
      score_graph_ = build_score_graph(dims_, cfg_.dropout_rate);
      opt_single_ = OptimizerState(theta_z_);
      grads_single_ = GradStore(theta_z_);
    } else {
      require(!pairs_.empty(), ErrorCategory::data, "no contrast pairs to train on");
      for (const ContrastPair& p : pairs_) {
        require(cohort_->features.count(p.higher_id) && cohort_->features.count(p.lower_id),
                ErrorCategory::data,
                "pair (" + p.higher_id + ", " + p.lower_id + ") references a missing id");
      }
      pair_graph_ = build_pair_graph(dims_, cfg_.loss_mode, cfg_.dropout_rate);
      combined_ = ParamSet::concat(theta_z_, theta_z_, "A.", "B.");
      opt_combined_ = OptimizerState(combined_);
      grads_combined_ = GradStore(combined_);
    }
  }

  const ParamSet& theta_z() const { return theta_z_; }
  const ParamSet& theta_a() const { return theta_a_; }
  const ParamSet& theta_b() const { return theta_b_; }
  const ModelDims& dims() const { return dims_; }
  const TrainConfig& config() const { return cfg_; }
  int epochs_done() const { return epochs_done_; }

  std::function<void(const WindowInfo&)> on_window;

  void run_epochs(int n) {
    for (int e = 0; e < n; ++e) {
      if (cfg_.loss_mode == LossMode::cox_baseline) {
        run_cox_epoch();
      } else {
        run_pair_epoch();
      }
      ++epochs_done_;
    }
  }

  // Epoch-boundary checkpoint; the restored run continues bit-identically.
  void save_checkpoint(const std::filesystem::path& path, bool include_state = true) const {
    Checkpoint ckpt;
    ckpt.dims = dims_;
    ckpt.params = theta_z_;
    if (include_state) {
      TrainerStateBlob st;
      st.epochs_done = static_cast<std::uint32_t>(epochs_done_);
      const OptimizerState& opt =
          cfg_.loss_mode == LossMode::cox_baseline ? opt_single_ : opt_combined_;
      st.optimizers.push_back({opt.step, opt.flat_m(), opt.flat_v()});
      st.rng_states = {run_rng_.state_string(), rng_a_.state_string(), rng_b_.state_string()};
      ckpt.state = std::move(st);
    }
    write_checkpoint(path, ckpt);
  }

  void load_state(const std::filesystem::path& path) {
    Checkpoint ckpt = read_checkpoint(path);
    require(ckpt.dims == dims_, ErrorCategory::shape,
            "checkpoint " + path.string() + " was written for different model dimensions");
    require(ckpt.state.has_value(), ErrorCategory::format,
            "checkpoint " + path.string() + " carries no trainer state");
    theta_z_ = ckpt.params;
    theta_a_ = theta_z_;
    theta_b_ = theta_z_;
    const TrainerStateBlob& st = *ckpt.state;
    require(st.optimizers.size() == 1 && st.rng_states.size() == 3, ErrorCategory::format,
            "unexpected trainer state layout in " + path.string());
    OptimizerState& opt = cfg_.loss_mode == LossMode::cox_baseline ? opt_single_ : opt_combined_;
    opt.step = st.optimizers[0].step;
    opt.restore_flat(st.optimizers[0].m, st.optimizers[0].v);
    run_rng_.set_state(st.rng_states[0]);
    rng_a_.set_state(st.rng_states[1]);
    rng_b_.set_state(st.rng_states[2]);
    epochs_done_ = static_cast<int>(st.epochs_done);
  }

 private:
  void copy_values(ParamSet& dst, const ParamSet& src, int src_base) {
    for (int s = 0; s < dst.size(); ++s) {
      dst.tensor(s).values() = src.tensor(src_base + s).values();
    }
  }

  void average_halves_into_theta_z() {
    for (int s = 0; s < theta_z_.size(); ++s) {
      const double* pa = combined_.tensor(s).data();
      const double* pb = combined_.tensor(slots::count + s).data();
      double* pz = theta_z_.tensor(s).data();
      for (std::size_t i = 0; i < theta_z_.tensor(s).size(); ++i) {
        pz[i] = (pa[i] + pb[i]) * 0.5;
      }
    }
  }

  void check_theta_finite() const {
    std::string bad;
    if (!theta_z_.all_finite(&bad)) {
      fail(ErrorCategory::numeric, "training produced non-finite parameters in block '" + bad +
                                       "' (epoch " + std::to_string(epochs_done_ + 1) + ")");
    }
  }

  void emit_window(int window_idx, int units, double loss_mean, std::vector<double> term_means) {
    if (!on_window) return;
    WindowInfo info;
    info.epoch = epochs_done_ + 1;
    info.window = window_idx;
    info.pairs = units;
    info.loss_mean = loss_mean;
    info.term_means = std::move(term_means);
    info.theta_z = &theta_z_;
    info.theta_a = &theta_a_;
    info.theta_b = &theta_b_;
    on_window(info);
  }

  void run_pair_epoch() {
    const std::size_t window_pairs = static_cast<std::size_t>(cfg_.accumulation_forwards) / 2;
    // The epoch order is a fresh shuffle of the canonical pair list, so it
    // depends only on the current RNG state and resumes reproduce it.
    std::vector<std::size_t> order(pairs_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    run_rng_.shuffle(order);

    std::vector<NumArray> inputs(pair_graph_.uses_bag && pair_graph_.uses_gene ? 4 : 2);
    ForwardOptions opts;
    opts.training = true;
    opts.streams = {&rng_a_, &rng_b_};

    int window_idx = 0;
    for (std::size_t begin = 0; begin < pairs_.size(); begin += window_pairs) {
      const std::size_t end = std::min(begin + window_pairs, pairs_.size());
      combined_.set_slice(0, theta_z_);
      combined_.set_slice(slots::count, theta_z_);
      grads_combined_.zero();

      double loss_sum = 0.0;
      std::vector<double> term_sums(pair_graph_.terms.size(), 0.0);
      for (std::size_t pi = begin; pi < end; ++pi) {
        const ContrastPair& pair = pairs_[order[pi]];
        const FeatureSet& lower = cohort_->feature(pair.lower_id);
        const FeatureSet& higher = cohort_->feature(pair.higher_id);
        std::size_t k = 0;
        if (pair_graph_.uses_bag) inputs[k++] = lower.bag;
        if (pair_graph_.uses_gene) inputs[k++] = lower.gene;
        if (pair_graph_.uses_bag) inputs[k++] = higher.bag;
        if (pair_graph_.uses_gene) inputs[k++] = higher.gene;

        loss_sum += pair_graph_.graph.forward(combined_, inputs, opts).scalar_value();
        for (std::size_t t = 0; t < pair_graph_.terms.size(); ++t) {
          term_sums[t] += pair_graph_.graph.node_value(pair_graph_.terms[t]);
        }
        pair_graph_.graph.backward_into(1.0, grads_combined_);
      }

      if (cfg_.plain_sgd) {
        sgd_step(combined_, grads_combined_, cfg_.learning_rate);
      } else {
        adam_step(combined_, grads_combined_, opt_combined_, cfg_.learning_rate);
      }
      average_halves_into_theta_z();
      check_theta_finite();
      // The copy that opens the next window; afterwards the three parameter
      // sets agree exactly at the boundary.
      copy_values(theta_a_, theta_z_, 0);
      copy_values(theta_b_, theta_z_, 0);
      const int units = static_cast<int>(end - begin);
      for (double& t : term_sums) t /= units;
      emit_window(++window_idx, units, loss_sum / units, std::move(term_sums));
    }
  }

  void run_cox_epoch() {
    const std::size_t window_samples = static_cast<std::size_t>(cfg_.accumulation_forwards);
    std::vector<std::size_t> order(cohort_->records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    run_rng_.shuffle(order);

    std::vector<NumArray> inputs(2);
    ForwardOptions opts;
    opts.training = true;
    opts.streams = {&rng_a_, nullptr};

    int window_idx = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += window_samples) {
      const std::size_t end = std::min(begin + window_samples, order.size());
      const std::size_t m = end - begin;

      std::vector<double> scores(m);
      std::vector<SurvivalRecord> window_records(m);
      Rng replay = rng_a_;  // same masks on the gradient pass
      for (std::size_t k = 0; k < m; ++k) {
        const SurvivalRecord& rec = cohort_->records[order[begin + k]];
        const FeatureSet& fs = cohort_->feature(rec.id);
        inputs[0] = fs.bag;
        inputs[1] = fs.gene;
        scores[k] = score_graph_.graph.forward(theta_z_, inputs, opts).scalar_value();
        window_records[k] = rec;
      }

      int n_events = 0;
      for (const SurvivalRecord& r : window_records) n_events += r.event ? 1 : 0;
      double npll = 0.0;
      if (n_events > 0) {
        std::vector<double> dscores(m, 0.0);
        npll = cox_npll_grad(scores, window_records, dscores);
        rng_a_ = replay;
        grads_single_.zero();
        for (std::size_t k = 0; k < m; ++k) {
          const SurvivalRecord& rec = window_records[k];
          const FeatureSet& fs = cohort_->feature(rec.id);
          inputs[0] = fs.bag;
          inputs[1] = fs.gene;
          score_graph_.graph.forward(theta_z_, inputs, opts);
          score_graph_.graph.backward_into(dscores[k], grads_single_);
        }
        if (cfg_.plain_sgd) {
          sgd_step(theta_z_, grads_single_, cfg_.learning_rate);
        } else {
          adam_step(theta_z_, grads_single_, opt_single_, cfg_.learning_rate);
        }
        check_theta_finite();
      }
      copy_values(theta_a_, theta_z_, 0);
      copy_values(theta_b_, theta_z_, 0);
      // logged loss for this mode is the partial likelihood per event
      emit_window(++window_idx, static_cast<int>(m), n_events > 0 ? npll / n_events : 0.0, {});
    }
  }

  const Cohort* cohort_;
  std::vector<ContrastPair> pairs_;
  TrainConfig cfg_;
  ModelDims dims_;

  ParamSet theta_z_;
  ParamSet theta_a_;
  ParamSet theta_b_;
  ParamSet combined_;
  OptimizerState opt_combined_;
  OptimizerState opt_single_;
  GradStore grads_combined_;
  GradStore grads_single_;
  PairGraph pair_graph_;
  ScoreGraph score_graph_;

  Rng run_rng_;
  Rng rng_a_;
  Rng rng_b_;
  int epochs_done_ = 0;
};

// One-shot convenience: train for cfg.epochs and return the final averaged
// parameters.
inline ParamSet train(const Cohort& cohort, const std::vector<ContrastPair>& pairs,
                      const TrainConfig& cfg, const ModelDims& dims) {
  Trainer trainer(cohort, pairs, cfg, dims);
  trainer.run_epochs(cfg.epochs);
  return trainer.theta_z();
}

}  // namespace moc
