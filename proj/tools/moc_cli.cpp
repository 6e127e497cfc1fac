// Command-line front end: synthetic cohort generation, contrast-pair audit,
// cross-validated training, evaluation, and survival-curve emission.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "moc/moc.hpp"

namespace {

namespace fs = std::filesystem;

// Two-column csv (header skipped): id,value.
std::map<std::string, double> load_score_csv(const fs::path& path) {
  std::ifstream is(path);
  moc::require(is.good(), moc::ErrorCategory::io, "cannot open score file " + path.string());
  std::string line;
  moc::require(static_cast<bool>(std::getline(is, line)), moc::ErrorCategory::format,
               "score file " + path.string() + " is empty");
  std::map<std::string, double> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = moc::io_detail::split_csv_line(line);
    double v = 0.0;
    moc::require(fields.size() == 2 && moc::io_detail::parse_double(fields[1], &v),
                 moc::ErrorCategory::format,
                 "score file " + path.string() + " row " + std::to_string(row) + " malformed");
    out[fields[0]] = v;
  }
  return out;
}

// Pre-scan for --config so the file can seed defaults before the real parse.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
  }
  return {};
}

nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream is(path);
  moc::require(is.good(), moc::ErrorCategory::config, "cannot open config file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    moc::fail(moc::ErrorCategory::config, "config file " + path + ": " + e.what());
  }
  return j;
}

template <typename T>
void from_config(const nlohmann::json& j, const char* key, T& target) {
  if (j.contains(key)) {
    try {
      target = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      moc::fail(moc::ErrorCategory::config, std::string("config key '") + key + "': " + e.what());
    }
  }
}

struct SynthArgs {
  std::string out;
  moc::SynthConfig cfg;
};

struct TrainArgs {
  std::string manifest;
  moc::RunConfig rc;
  std::string loss_mode = "moc";
};

struct EvalArgs {
  std::string manifest;
  std::string run_dir;
  std::string out_dir;
  std::string latent;
  bool svg = false;
};

struct PairsArgs {
  std::string manifest;
  std::string out = "-";
};

struct KmArgs {
  std::string manifest;
  std::string risk;
  std::string out;
  bool svg = false;
};

void run_synth(const SynthArgs& args) {
  const moc::SynthCohort synth = moc::generate_synthetic(args.cfg);
  const fs::path manifest = moc::write_cohort(args.out, synth);
  std::map<std::string, double> latent;
  for (std::size_t i = 0; i < synth.cohort.records.size(); ++i) {
    latent[synth.cohort.records[i].id] = synth.latent[i];
  }
  const double oracle = moc::eval_scores(synth.cohort, latent);
  std::printf("wrote %s (n=%d)\n", manifest.string().c_str(), args.cfg.n);
  std::printf("latent oracle c_index=%.6f\n", oracle);
}

void run_pairs(const PairsArgs& args) {
  const moc::Cohort cohort = moc::load_cohort(args.manifest);
  const auto pairs = moc::build_pairs(cohort);
  if (args.out == "-") {
    std::printf("higher_id,lower_id\n");
    for (const auto& p : pairs) std::printf("%s,%s\n", p.higher_id.c_str(), p.lower_id.c_str());
  } else {
    moc::write_pairs_csv(args.out, pairs);
    std::printf("wrote %zu pairs to %s\n", pairs.size(), args.out.c_str());
  }
}

void run_train_cmd(TrainArgs args) {
  args.rc.manifest = args.manifest;
  args.rc.train.loss_mode = moc::parse_loss_mode(args.loss_mode);
  const moc::Cohort cohort = moc::load_cohort(args.manifest);
  moc::run_train(cohort, args.rc);
  std::printf("trained %d folds into %s\n", args.rc.k, args.rc.out_dir.c_str());
}

void run_eval_cmd(const EvalArgs& args) {
  const moc::Cohort cohort = moc::load_cohort(args.manifest);
  if (!args.latent.empty()) {
    const double c = moc::eval_scores(cohort, load_score_csv(args.latent));
    std::printf("score oracle c_index=%.6f\n", c);
    return;
  }
  moc::require(!args.run_dir.empty(), moc::ErrorCategory::argument,
               "eval needs --run (a training output directory) or --latent");
  const fs::path out = args.out_dir.empty() ? fs::path(args.run_dir) : fs::path(args.out_dir);
  const moc::RunReport report = moc::run_eval(cohort, args.run_dir, out, args.svg);
  std::fputs(report.to_text().c_str(), stdout);
  std::printf("report written to %s\n", (out / "report.txt").string().c_str());
}

void run_km(const KmArgs& args) {
  const moc::Cohort cohort = moc::load_cohort(args.manifest);
  const auto scores = load_score_csv(args.risk);
  moc::RiskScoredCohort sc;
  sc.records = cohort.records;
  for (const auto& r : sc.records) {
    auto it = scores.find(r.id);
    moc::require(it != scores.end(), moc::ErrorCategory::data,
                 "no risk score for id '" + r.id + "'");
    sc.risk[r.id] = it->second;
  }
  const moc::MedianSplit split = moc::median_split(sc);
  std::set<std::string> high(split.high_ids.begin(), split.high_ids.end());
  std::vector<moc::SurvivalRecord> high_records, low_records;
  for (const auto& r : sc.records) (high.count(r.id) ? high_records : low_records).push_back(r);
  const moc::LogRankResult lr = moc::logrank_test(high_records, low_records);
  const moc::KMCurve km_high = moc::km_curve(high_records);
  const moc::KMCurve km_low = moc::km_curve(low_records);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  moc::require(!ec, moc::ErrorCategory::io, "cannot create output directory " + args.out);
  {
    std::ofstream os(fs::path(args.out) / "km.csv");
    moc::require(os.good(), moc::ErrorCategory::io, "cannot write km.csv");
    os << "time,survival,at_risk,events,group\n";
    auto dump = [&os](const moc::KMCurve& c, const char* group) {
      for (std::size_t i = 0; i < c.times.size(); ++i) {
        os << moc::io_detail::format_double(c.times[i]) << ','
           << moc::io_detail::format_double(c.survival[i]) << ',' << c.at_risk[i] << ','
           << c.events[i] << ',' << group << '\n';
      }
    };
    dump(km_high, "high");
    dump(km_low, "low");
  }
  if (args.svg) {
    std::ofstream os(fs::path(args.out) / "km.svg");
    moc::require(os.good(), moc::ErrorCategory::io, "cannot write km.svg");
    os << moc::km_svg(km_high, km_low, lr.p_value);
  }
  std::printf("logrank statistic=%.6f p=%.6e (n_high=%zu n_low=%zu)\n", lr.statistic, lr.p_value,
              split.high_ids.size(), split.low_ids.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"survival-risk contrast learning toolkit"};
  app.set_version_flag("--version", std::string("moc ") + moc::kVersion);
  app.require_subcommand(1);

  nlohmann::json file_cfg;
  try {
    file_cfg = load_config_file(find_config_arg(argc, argv));
  } catch (const moc::Error& e) {
    std::cerr << "error[" << to_string(e.category()) << "]: " << e.what() << '\n';
    return 1;
  }
  std::string config_path;  // accepted (and consumed) by every subcommand

  SynthArgs synth;
  from_config(file_cfg, "n", synth.cfg.n);
  from_config(file_cfg, "censor_frac", synth.cfg.censor_frac);
  from_config(file_cfg, "beta", synth.cfg.beta);
  from_config(file_cfg, "noise_sigma", synth.cfg.noise_sigma);
  from_config(file_cfg, "d_p", synth.cfg.d_p);
  from_config(file_cfg, "d_g", synth.cfg.d_g);
  from_config(file_cfg, "mean_bag", synth.cfg.mean_bag);
  from_config(file_cfg, "seed", synth.cfg.seed);
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic cohort on disk");
  cmd_synth->add_option("--out", synth.out, "output directory")->required();
  cmd_synth->add_option("--config", config_path, "JSON config file");
  cmd_synth->add_option("--n", synth.cfg.n, "cohort size");
  cmd_synth->add_option("--censor-frac", synth.cfg.censor_frac, "censored fraction in [0,1)");
  cmd_synth->add_option("--beta", synth.cfg.beta, "risk-signal strength");
  cmd_synth->add_option("--noise-sigma", synth.cfg.noise_sigma, "feature noise level");
  cmd_synth->add_option("--d-p", synth.cfg.d_p, "patch feature dimension");
  cmd_synth->add_option("--d-g", synth.cfg.d_g, "gene vector dimension");
  cmd_synth->add_option("--mean-bag", synth.cfg.mean_bag, "bag size is Poisson(mean)+1");
  cmd_synth->add_option("--seed", synth.cfg.seed, "random seed");

  PairsArgs pairs;
  auto* cmd_pairs = app.add_subcommand("pairs", "dump the constructed contrast pairs");
  cmd_pairs->add_option("--manifest", pairs.manifest, "cohort manifest csv")->required();
  cmd_pairs->add_option("--out", pairs.out, "output csv path ('-' for stdout)");
  cmd_pairs->add_option("--config", config_path, "JSON config file");

  TrainArgs train;
  from_config(file_cfg, "k", train.rc.k);
  from_config(file_cfg, "learning_rate", train.rc.train.learning_rate);
  from_config(file_cfg, "accumulation_forwards", train.rc.train.accumulation_forwards);
  from_config(file_cfg, "dropout_rate", train.rc.train.dropout_rate);
  from_config(file_cfg, "epochs", train.rc.train.epochs);
  from_config(file_cfg, "seed", train.rc.train.seed);
  from_config(file_cfg, "loss_mode", train.loss_mode);
  from_config(file_cfg, "attn_dim", train.rc.attn_dim);
  from_config(file_cfg, "path_act", train.rc.path_act);
  if (file_cfg.contains("path_hidden")) {
    train.rc.path_h1 = file_cfg["path_hidden"].at(0).get<int>();
    train.rc.path_h2 = file_cfg["path_hidden"].at(1).get<int>();
  }
  if (file_cfg.contains("gene_hidden")) {
    train.rc.gene_h1 = file_cfg["gene_hidden"].at(0).get<int>();
    train.rc.gene_h2 = file_cfg["gene_hidden"].at(1).get<int>();
  }
  auto* cmd_train = app.add_subcommand("train", "cross-validated contrast training");
  cmd_train->add_option("--manifest", train.manifest, "cohort manifest csv")->required();
  cmd_train->add_option("--out", train.rc.out_dir, "output directory")->required();
  cmd_train->add_option("--config", config_path, "JSON config file");
  cmd_train->add_option("--k", train.rc.k, "number of folds");
  cmd_train->add_option("--epochs", train.rc.train.epochs, "training epochs per fold");
  cmd_train->add_option("--lr", train.rc.train.learning_rate, "learning rate");
  cmd_train->add_option("--accum", train.rc.train.accumulation_forwards,
                        "forward passes per optimizer step");
  cmd_train->add_option("--dropout", train.rc.train.dropout_rate, "dropout rate");
  cmd_train->add_option("--seed", train.rc.train.seed, "run seed");
  cmd_train->add_option("--loss-mode", train.loss_mode,
                        "moc | intra_only | oc_unimodal_path | oc_unimodal_gene | cox_baseline");
  cmd_train->add_option("--attn-dim", train.rc.attn_dim, "attention dimension");
  cmd_train->add_option("--path-h1", train.rc.path_h1, "first pathology hidden width");
  cmd_train->add_option("--path-h2", train.rc.path_h2, "second pathology hidden width");
  cmd_train->add_option("--gene-h1", train.rc.gene_h1, "first genomics hidden width");
  cmd_train->add_option("--gene-h2", train.rc.gene_h2, "second genomics hidden width");
  cmd_train->add_option("--path-act", train.rc.path_act, "pathology hidden activation");

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a finished training run");
  cmd_eval->add_option("--manifest", eval.manifest, "cohort manifest csv")->required();
  cmd_eval->add_option("--run", eval.run_dir, "training output directory");
  cmd_eval->add_option("--out", eval.out_dir, "report directory (defaults to --run)");
  cmd_eval->add_option("--latent", eval.latent, "score csv: report its concordance instead");
  cmd_eval->add_flag("--svg", eval.svg, "also write km.svg");
  cmd_eval->add_option("--config", config_path, "JSON config file");

  KmArgs km;
  auto* cmd_km = app.add_subcommand("km", "survival curves for a risk-score file");
  cmd_km->add_option("--manifest", km.manifest, "cohort manifest csv")->required();
  cmd_km->add_option("--risk", km.risk, "csv with header and rows id,risk")->required();
  cmd_km->add_option("--out", km.out, "output directory")->required();
  cmd_km->add_flag("--svg", km.svg, "also write km.svg");
  cmd_km->add_option("--config", config_path, "JSON config file");

  try {
    app.parse(argc, argv);
    if (cmd_synth->parsed()) run_synth(synth);
    if (cmd_pairs->parsed()) run_pairs(pairs);
    if (cmd_train->parsed()) run_train_cmd(train);
    if (cmd_eval->parsed()) run_eval_cmd(eval);
    if (cmd_km->parsed()) run_km(km);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const moc::Error& e) {
    const std::string what = e.what();
    const std::size_t nl = what.find('\n');
    std::cerr << "error[" << to_string(e.category())
              << "]: " << (nl == std::string::npos ? what : what.substr(0, nl)) << '\n';
    if (nl != std::string::npos) std::cerr << what.substr(nl + 1) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
