#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "moc/moc.hpp"
#include "test_util.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("moc_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

moc::RunConfig small_run_config(const std::string& out_dir) {
  moc::RunConfig rc;
  rc.out_dir = out_dir;
  rc.k = 3;
  rc.train.epochs = 1;
  rc.train.seed = 1;
  rc.attn_dim = 8;
  rc.path_h1 = 12;
  rc.path_h2 = 8;
  rc.gene_h1 = 8;
  rc.gene_h2 = 8;
  return rc;
}

moc::SynthConfig small_synth() {
  moc::SynthConfig cfg;
  cfg.n = 45;
  cfg.d_p = 6;
  cfg.d_g = 5;
  cfg.mean_bag = 3;
  cfg.censor_frac = 0.3;
  cfg.seed = 2;
  return cfg;
}

}  // namespace

TEST_CASE("cross-validated run produces checkpoints, logs and a report", "[pipeline]") {
  const fs::path dir = fresh_dir("basic");
  const auto synth = moc::generate_synthetic(small_synth());
  const moc::RunConfig rc = small_run_config((dir / "run").string());

  moc::run_train(synth.cohort, rc);
  for (int f = 0; f < rc.k; ++f) {
    REQUIRE(fs::exists(dir / "run" / ("fold_" + std::to_string(f) + ".ckpt")));
    REQUIRE(fs::exists(dir / "run" / ("fold_" + std::to_string(f) + "_log.csv")));
  }
  REQUIRE(fs::exists(dir / "run" / "folds.csv"));
  REQUIRE(fs::exists(dir / "run" / "run_config.json"));

  const moc::RunReport report = moc::run_eval(synth.cohort, dir / "run", dir / "run", true);
  REQUIRE(report.folds.size() == 3);
  for (const auto& f : report.folds) {
    REQUIRE(f.c_index > 0.0);
    REQUIRE(f.c_index <= 1.0);
    REQUIRE(f.n_val == 15);
  }
  REQUIRE(report.n_high + report.n_low == 45);
  REQUIRE(fs::exists(dir / "run" / "report.txt"));
  REQUIRE(fs::exists(dir / "run" / "km.csv"));
  REQUIRE(fs::exists(dir / "run" / "km.svg"));

  const std::string km = slurp(dir / "run" / "km.csv");
  REQUIRE(km.rfind("time,survival,at_risk,events,group\n", 0) == 0);
  REQUIRE(km.find(",high\n") != std::string::npos);
  REQUIRE(km.find(",low\n") != std::string::npos);

  // training log layout: epoch,window,loss_mean plus one column per term
  const std::string log0 = slurp(dir / "run" / "fold_0_log.csv");
  REQUIRE(log0.rfind("epoch,window,loss_mean,term_pp,term_pg,term_gp,term_gg,term_fused\n", 0) ==
          0);
}

TEST_CASE("identical runs produce byte-identical artifacts", "[pipeline]") {
  const fs::path dir = fresh_dir("determinism");
  const auto synth = moc::generate_synthetic(small_synth());
  const moc::RunConfig rc = small_run_config((dir / "run").string());

  moc::run_train(synth.cohort, rc);
  moc::run_eval(synth.cohort, dir / "run", dir / "run", false);
  const std::string report_a = slurp(dir / "run" / "report.txt");
  const std::string ckpt_a = slurp(dir / "run" / "fold_0.ckpt");
  const std::string km_a = slurp(dir / "run" / "km.csv");

  fs::remove_all(dir / "run");
  moc::run_train(synth.cohort, rc);
  moc::run_eval(synth.cohort, dir / "run", dir / "run", false);
  REQUIRE(slurp(dir / "run" / "report.txt") == report_a);
  REQUIRE(slurp(dir / "run" / "fold_0.ckpt") == ckpt_a);
  REQUIRE(slurp(dir / "run" / "km.csv") == km_a);
}

TEST_CASE("evaluating untrained parameters reports the all-ties concordance", "[pipeline]") {
  const fs::path dir = fresh_dir("untrained");
  const auto synth = moc::generate_synthetic(small_synth());
  moc::RunConfig rc = small_run_config((dir / "run").string());
  rc.train.epochs = 0;  // checkpoints hold the zero-output initialization

  moc::run_train(synth.cohort, rc);
  const moc::RunReport report = moc::run_eval(synth.cohort, dir / "run", dir / "run", false);
  for (const auto& f : report.folds) REQUIRE(f.c_index == 0.5);
  // every risk ties at the median, so the tie rule balances the groups
  REQUIRE(report.n_high == 22);
  REQUIRE(report.n_low == 23);
}

TEST_CASE("run config JSON round-trips", "[pipeline]") {
  moc::RunConfig rc = small_run_config("/tmp/x");
  rc.manifest = "m.csv";
  rc.train.loss_mode = moc::LossMode::intra_only;
  rc.train.learning_rate = 0.0007;
  const moc::RunConfig back = moc::run_config_from_json(moc::run_config_json(rc));
  REQUIRE(back.manifest == rc.manifest);
  REQUIRE(back.k == rc.k);
  REQUIRE(back.train.learning_rate == rc.train.learning_rate);
  REQUIRE(back.train.loss_mode == rc.train.loss_mode);
  REQUIRE(back.attn_dim == rc.attn_dim);
  REQUIRE(back.gene_h2 == rc.gene_h2);
}

TEST_CASE("checkpoint dimension mismatches name the checkpoint", "[pipeline]") {
  const fs::path dir = fresh_dir("dims");
  const auto synth = moc::generate_synthetic(small_synth());
  const moc::RunConfig rc = small_run_config((dir / "run").string());
  moc::run_train(synth.cohort, rc);

  moc::SynthConfig other = small_synth();
  other.d_g = 9;  // different gene dimension
  const auto wrong = moc::generate_synthetic(other);
  try {
    moc::run_eval(wrong.cohort, dir / "run", dir / "run", false);
    FAIL("expected an error");
  } catch (const moc::Error& e) {
    REQUIRE(e.category() == moc::ErrorCategory::shape);
    REQUIRE(std::string(e.what()).find("fold_0.ckpt") != std::string::npos);
  }
}

TEST_CASE("latent scores from the sidecar act as an oracle", "[pipeline]") {
  const fs::path dir = fresh_dir("latent");
  moc::SynthConfig cfg = small_synth();
  cfg.n = 200;
  cfg.beta = 3.0;
  const auto synth = moc::generate_synthetic(cfg);
  moc::write_cohort(dir / "data", synth);

  const moc::Cohort cohort = moc::load_cohort(dir / "data" / "manifest.csv");
  const auto latent = moc::load_latent(dir / "data" / "latent.csv");
  REQUIRE(moc::eval_scores(cohort, latent) >= 0.80);
}
