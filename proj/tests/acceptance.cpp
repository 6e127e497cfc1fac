// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Each criterion pins its tolerances and runtime budget in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "moc/moc.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is.good()) return "<missing:" + p.string() + ">";
  return std::string(std::istreambuf_iterator<char>(is), {});
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "moc_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// ---- criterion 1: ratio-objective gradient identities ----------------------

Outcome criterion_gradient_identity() {
  const auto start = std::chrono::steady_clock::now();
  moc::Rng rng(1001);
  double worst_closed = 0.0;
  double worst_fd = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double r_num = rng.uniform(0.01, 0.99);
    const double r_den = rng.uniform(0.01, 0.99);
    auto logit = [](double r) { return std::log(r / (1.0 - r)); };

    moc::ParamSet p;
    p.add("o_num", moc::NumArray::scalar(logit(r_num)));
    p.add("o_den", moc::NumArray::scalar(logit(r_den)));
    moc::Graph g;
    const int rn = g.clamp(g.sigmoid_node(g.param(0)), 1e-6, 1.0 - 1e-6);
    const int rd = g.clamp(g.sigmoid_node(g.param(1)), 1e-6, 1.0 - 1e-6);
    g.mark_output(g.ratio(rn, rd));
    g.forward(p, {});
    const moc::GradStore grads = g.backward(1.0);

    const moc::OcGrads closed = moc::oc_output_grads(r_num, r_den);
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
    };
    worst_closed = std::max(worst_closed, rel(grads.get_flat(0), closed.d_o_num));
    worst_closed = std::max(worst_closed, rel(grads.get_flat(1), closed.d_o_den));

    // engine-free central differences through sigmoid and division
    const double h = 1e-5;
    auto loss_at = [](double o_n, double o_d) {
      const double a = 1.0 / (1.0 + std::exp(-o_n));
      const double b = 1.0 / (1.0 + std::exp(-o_d));
      return a / b;
    };
    const double o_n = logit(r_num), o_d = logit(r_den);
    const double fd_num = (loss_at(o_n + h, o_d) - loss_at(o_n - h, o_d)) / (2.0 * h);
    const double fd_den = (loss_at(o_n, o_d + h) - loss_at(o_n, o_d - h)) / (2.0 * h);
    worst_fd = std::max(worst_fd, rel(grads.get_flat(0), fd_num));
    worst_fd = std::max(worst_fd, rel(grads.get_flat(1), fd_den));
  }
  const double elapsed = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "closed-form rel err %.2e (<=1e-8), fd rel err %.2e (<=1e-4), %.2fs (<5s)",
                worst_closed, worst_fd, elapsed);
  return {worst_closed <= 1e-8 && worst_fd <= 1e-4 && elapsed < 5.0, buf};
}

// ---- criterion 2: pair builder vs partner-search oracle --------------------

Outcome criterion_pair_oracle() {
  const auto start = std::chrono::steady_clock::now();
  int mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    moc::Rng rng(2000 + static_cast<std::uint64_t>(trial));
    const double censor_frac = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 0.3 : 0.7);
    const int n = 2 + static_cast<int>(rng.bounded(199));
    std::vector<moc::SurvivalRecord> rs;
    for (int i = 0; i < n; ++i) {
      rs.push_back({"S" + std::to_string(i), 1.0 + static_cast<double>(rng.bounded(25)),
                    rng.uniform() >= censor_frac});
    }
    const auto got = moc::build_pairs(rs);
    const auto expected = testutil::pair_oracle(rs);
    bool same = got.size() == expected.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].higher_id == expected[i].higher_id && got[i].lower_id == expected[i].lower_id;
    }
    if (!same) ++mismatches;
  }
  const double elapsed = seconds_since(start);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%d/50 cohorts mismatched (need 0), %.2fs (<10s)", mismatches,
                elapsed);
  return {mismatches == 0 && elapsed < 10.0, buf};
}

// ---- criterion 3: concordance vs double-loop oracle ------------------------

Outcome criterion_cindex_oracle() {
  const auto start = std::chrono::steady_clock::now();
  int mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    moc::Rng rng(3000 + static_cast<std::uint64_t>(trial));
    const int n = 2 + static_cast<int>(rng.bounded(99));
    moc::RiskScoredCohort sc;
    for (int i = 0; i < n; ++i) {
      moc::SurvivalRecord r{"S" + std::to_string(i),
                            1.0 + static_cast<double>(rng.bounded(12)), rng.uniform() < 0.7};
      sc.records.push_back(r);
      sc.risk[r.id] = static_cast<double>(rng.bounded(8)) / 8.0;  // deliberate ties
    }
    const double expected = testutil::c_index_oracle(sc);
    if (expected < 0.0) {
      try {
        moc::c_index(sc);
        ++mismatches;
      } catch (const moc::Error&) {
      }
    } else if (moc::c_index(sc) != expected) {
      ++mismatches;
    }
  }
  const double elapsed = seconds_since(start);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "%d/50 cohorts mismatched (need exact 0), %.2fs (<5s)",
                mismatches, elapsed);
  return {mismatches == 0 && elapsed < 5.0, buf};
}

// ---- criterion 4: trainer update algebra and synchronization ---------------

Outcome criterion_trainer_algebra() {
  moc::ModelDims dims;
  dims.d_p = 4;
  dims.d_g = 3;
  dims.attn_dim = 3;
  dims.path_h1 = 4;
  dims.path_h2 = 3;
  dims.gene_h1 = 3;
  dims.gene_h2 = 3;

  moc::SynthConfig scfg;
  scfg.n = 8;
  scfg.censor_frac = 0.0;
  scfg.d_p = dims.d_p;
  scfg.d_g = dims.d_g;
  scfg.mean_bag = 2.0;
  scfg.seed = 404;
  moc::Cohort cohort = moc::generate_synthetic(scfg).cohort;

  // single-pair closed form
  std::vector<std::string> two = {cohort.records[0].id, cohort.records[1].id};
  moc::Cohort pair_cohort = cohort.subset(two);
  pair_cohort.records[0].time = 1.0;
  pair_cohort.records[1].time = 2.0;
  pair_cohort.records[0].event = pair_cohort.records[1].event = true;
  const auto pairs = moc::build_pairs(pair_cohort);
  if (pairs.size() != 1) return {false, "expected exactly one pair"};

  moc::TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.accumulation_forwards = 2;
  cfg.dropout_rate = 0.0;
  cfg.seed = 7;
  cfg.loss_mode = moc::LossMode::moc;
  cfg.plain_sgd = true;

  const moc::ParamSet theta0 = moc::init_params(71, dims);
  moc::PairGraph pg = moc::build_pair_graph(dims, moc::LossMode::moc, 0.0);
  const moc::ParamSet combined = moc::ParamSet::concat(theta0, theta0, "A.", "B.");
  const auto& lower = pair_cohort.feature(pairs[0].lower_id);
  const auto& higher = pair_cohort.feature(pairs[0].higher_id);
  const std::vector<moc::NumArray> inputs = {lower.bag, lower.gene, higher.bag, higher.gene};
  pg.graph.forward(combined, inputs);
  const moc::GradStore grads = pg.graph.backward(1.0);

  std::vector<double> expected = theta0.flat_view();
  const std::size_t half = theta0.flat_size();
  for (std::size_t i = 0; i < half; ++i) {
    expected[i] -= (cfg.learning_rate / 2.0) * (grads.get_flat(i) + grads.get_flat(half + i));
  }
  moc::Trainer one_step(pair_cohort, pairs, cfg, dims, theta0);
  one_step.run_epochs(1);
  const double update_err = testutil::max_abs_diff(one_step.theta_z().flat_view(), expected);

  // synchronization invariant across a 3-epoch run with accumulation windows
  moc::TrainConfig cfg2 = cfg;
  cfg2.plain_sgd = false;
  cfg2.accumulation_forwards = 8;
  cfg2.dropout_rate = 0.25;
  const auto all_pairs = moc::build_pairs(cohort);
  moc::Trainer trainer(cohort, all_pairs, cfg2, dims);
  bool sync_ok = true;
  int windows = 0;
  trainer.on_window = [&](const moc::WindowInfo& w) {
    ++windows;
    sync_ok = sync_ok && w.theta_a->flat_view() == w.theta_z->flat_view() &&
              w.theta_b->flat_view() == w.theta_z->flat_view();
  };
  trainer.run_epochs(3);

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "single-pair update err %.2e (<=1e-12), sync exact at %d/%d boundaries",
                update_err, sync_ok ? windows : 0, windows);
  return {update_err <= 1e-12 && sync_ok && windows > 0, buf};
}

// ---- criteria 5 and 6: synthetic end-to-end analog --------------------------

struct EndToEnd {
  bool ran = false;
  double latent_oracle = 0.0;
  double moc_mean = 0.0;
  double intra_mean = 0.0;
  double logrank_p = 1.0;
  double elapsed = 0.0;
};

EndToEnd& end_to_end() {
  static EndToEnd result;
  if (result.ran) return result;
  result.ran = true;
  const auto start = std::chrono::steady_clock::now();

  moc::SynthConfig scfg;  // n=400, beta=3, noise 0.1, 30% censoring
  scfg.n = 400;
  scfg.beta = 3.0;
  scfg.noise_sigma = 0.1;
  scfg.censor_frac = 0.3;
  scfg.d_p = 32;
  scfg.d_g = 16;
  scfg.mean_bag = 6.0;
  scfg.seed = 1;
  const moc::SynthCohort synth = moc::generate_synthetic(scfg);

  std::map<std::string, double> latent;
  for (std::size_t i = 0; i < synth.cohort.records.size(); ++i) {
    latent[synth.cohort.records[i].id] = synth.latent[i];
  }
  result.latent_oracle = moc::eval_scores(synth.cohort, latent);
  if (result.latent_oracle < 0.80) {
    result.elapsed = seconds_since(start);
    return result;  // generator gate failed; training is pointless
  }

  auto arm = [&](moc::LossMode mode, const std::string& name) {
    moc::RunConfig rc;
    rc.manifest = "<in-memory synthetic>";
    rc.out_dir = (work_dir() / name).string();
    rc.k = 5;
    rc.train.learning_rate = 0.0002;
    rc.train.accumulation_forwards = 128;
    rc.train.dropout_rate = 0.25;
    rc.train.epochs = 3;  // within the 20-epoch budget
    rc.train.seed = 1;
    rc.train.loss_mode = mode;
    rc.attn_dim = 64;
    rc.path_h1 = 128;
    rc.path_h2 = 64;
    rc.gene_h1 = 64;
    rc.gene_h2 = 64;
    moc::run_train(synth.cohort, rc);
    return moc::run_eval(synth.cohort, rc.out_dir, rc.out_dir, false);
  };

  const moc::RunReport moc_report = arm(moc::LossMode::moc, "e2e_moc");
  const moc::RunReport intra_report = arm(moc::LossMode::intra_only, "e2e_intra");
  result.moc_mean = moc_report.mean_c;
  result.intra_mean = intra_report.mean_c;
  result.logrank_p = moc_report.logrank_p;
  result.elapsed = seconds_since(start);
  return result;
}

Outcome criterion_end_to_end() {
  const EndToEnd& r = end_to_end();
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "latent oracle %.3f (>=0.80), cross-modal mean c %.3f (>=0.70), "
                "intra-only mean c %.3f (margin >= -0.02), %.0fs (<600s)",
                r.latent_oracle, r.moc_mean, r.intra_mean, r.elapsed);
  const bool pass = r.latent_oracle >= 0.80 && r.moc_mean >= 0.70 &&
                    r.moc_mean >= r.intra_mean - 0.02 && r.elapsed < 600.0;
  return {pass, buf};
}

Outcome criterion_stratification() {
  const EndToEnd& r = end_to_end();
  char buf[120];
  std::snprintf(buf, sizeof(buf), "pooled-validation log-rank p = %.3e (<0.05)", r.logrank_p);
  return {r.ran && r.logrank_p < 0.05, buf};
}

// ---- criterion 7: metric sanity ---------------------------------------------

Outcome criterion_metrics_sanity() {
  bool ok = true;

  // hand-computed product-limit values on cohorts of up to six subjects
  {
    std::vector<moc::SurvivalRecord> rs = {
        {"a", 1, true}, {"b", 2, false}, {"c", 3, true}, {"d", 4, true}};
    const auto km = moc::km_curve(rs);
    ok = ok && km.survival.size() == 3 && km.survival[0] == 0.75 && km.survival[1] == 0.375 &&
         km.survival[2] == 0.0;
  }
  {
    std::vector<moc::SurvivalRecord> rs = {{"a", 1, true}, {"b", 2, true}};
    const auto km = moc::km_curve(rs);
    ok = ok && km.survival.size() == 2 && km.survival[0] == 0.5 && km.survival[1] == 0.0;
  }
  {
    std::vector<moc::SurvivalRecord> rs = {{"a", 5, false}, {"b", 7, false}, {"c", 9, false},
                                           {"d", 11, false}, {"e", 2, false}, {"f", 1, false}};
    ok = ok && moc::km_curve(rs).times.empty();  // no events: survival stays 1
  }

  const double tail = moc::chisq1_sf(3.841);
  const double oracle = testutil::chisq1_sf_oracle(3.841);
  const bool tail_ok = std::abs(tail - oracle) <= 1e-3 && std::abs(tail - 0.05) <= 1e-3;

  moc::Rng rng(777);
  std::vector<moc::SurvivalRecord> group;
  for (int i = 0; i < 25; ++i) {
    group.push_back({"g" + std::to_string(i), rng.uniform(1.0, 30.0), rng.uniform() < 0.8});
  }
  const double dup_p = moc::logrank_test(group, group).p_value;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "km hand values %s, chi2 tail %.6f vs oracle %.6f, duplicated-group p %.3f "
                "(>=0.99)",
                ok ? "exact" : "WRONG", tail, oracle, dup_p);
  return {ok && tail_ok && dup_p >= 0.99, buf};
}

// ---- criterion 8: determinism ------------------------------------------------

Outcome criterion_determinism() {
  moc::SynthConfig scfg;
  scfg.n = 120;
  scfg.beta = 3.0;
  scfg.noise_sigma = 0.1;
  scfg.censor_frac = 0.3;
  scfg.d_p = 8;
  scfg.d_g = 6;
  scfg.mean_bag = 3.0;
  scfg.seed = 1;

  const fs::path data_dir = work_dir() / "det_data";
  const fs::path run_dir = work_dir() / "det_run";

  struct Artifacts {
    std::string report, manifest;
    std::vector<std::vector<double>> params;
  };
  auto one_run = [&]() {
    fs::remove_all(data_dir);
    fs::remove_all(run_dir);
    const moc::SynthCohort synth = moc::generate_synthetic(scfg);
    moc::write_cohort(data_dir, synth);
    const moc::Cohort cohort = moc::load_cohort(data_dir / "manifest.csv");
    moc::RunConfig rc;
    rc.manifest = (data_dir / "manifest.csv").string();
    rc.out_dir = run_dir.string();
    rc.k = 3;
    rc.train.epochs = 1;
    rc.train.seed = 1;
    rc.attn_dim = 8;
    rc.path_h1 = 12;
    rc.path_h2 = 8;
    rc.gene_h1 = 8;
    rc.gene_h2 = 8;
    moc::run_train(cohort, rc);
    moc::run_eval(cohort, run_dir, run_dir, false);
    Artifacts a;
    a.report = slurp(run_dir / "report.txt");
    a.manifest = slurp(data_dir / "manifest.csv");
    for (int f = 0; f < 3; ++f) {
      a.params.push_back(moc::read_checkpoint(run_dir / ("fold_" + std::to_string(f) + ".ckpt"))
                             .params.flat_view());
    }
    return a;
  };

  const Artifacts first = one_run();
  const Artifacts second = one_run();
  const bool report_same = first.report == second.report;
  const bool manifest_same = first.manifest == second.manifest;
  bool params_same = true;
  for (std::size_t f = 0; f < 3; ++f) {
    params_same = params_same && first.params[f] == second.params[f];  // bit-exact doubles
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "report bytes %s, data bytes %s, parameters %s",
                report_same ? "identical" : "DIFFER", manifest_same ? "identical" : "DIFFER",
                params_same ? "bit-identical" : "DIFFER");
  return {report_same && manifest_same && params_same, buf};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"ratio-objective gradient identities", criterion_gradient_identity},
      {"contrast-pair builder vs partner-search oracle", criterion_pair_oracle},
      {"concordance index vs double-loop oracle", criterion_cindex_oracle},
      {"trainer update algebra and synchronization", criterion_trainer_algebra},
      {"synthetic five-fold cross-modal training", criterion_end_to_end},
      {"median-risk stratification significance", criterion_stratification},
      {"survival-metric sanity", criterion_metrics_sanity},
      {"bitwise determinism of identical runs", criterion_determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %zu: %s — %s\n", outcome.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].name, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
