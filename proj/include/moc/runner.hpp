#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "moc/checkpoint.hpp"
#include "moc/cohort_io.hpp"
#include "moc/common.hpp"
#include "moc/metrics.hpp"
#include "moc/predictors.hpp"
#include "moc/survival.hpp"
#include "moc/svg.hpp"
#include "moc/trainer.hpp"

namespace moc {

// Resolved run configuration; echoed verbatim into run_config.json and the
// evaluation report so every run is reproducible from its own artifacts.
struct RunConfig {
  std::string manifest;
  std::string out_dir;
  int k = 5;
  TrainConfig train;
  int attn_dim = 256;
  int path_h1 = 512;
  int path_h2 = 256;
  int gene_h1 = 256;
  int gene_h2 = 256;
  std::string path_act = "relu";
};

inline nlohmann::json run_config_json(const RunConfig& rc) {
  return nlohmann::json{
      {"manifest", rc.manifest},
      {"out_dir", rc.out_dir},
      {"k", rc.k},
      {"learning_rate", rc.train.learning_rate},
      {"accumulation_forwards", rc.train.accumulation_forwards},
      {"dropout_rate", rc.train.dropout_rate},
      {"epochs", rc.train.epochs},
      {"seed", rc.train.seed},
      {"loss_mode", to_string(rc.train.loss_mode)},
      {"plain_sgd", rc.train.plain_sgd},
      {"attn_dim", rc.attn_dim},
      {"path_hidden", nlohmann::json::array({rc.path_h1, rc.path_h2})},
      {"gene_hidden", nlohmann::json::array({rc.gene_h1, rc.gene_h2})},
      {"path_act", rc.path_act},
  };
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig rc;
  rc.manifest = j.at("manifest").get<std::string>();
  rc.out_dir = j.at("out_dir").get<std::string>();
  rc.k = j.at("k").get<int>();
  rc.train.learning_rate = j.at("learning_rate").get<double>();
  rc.train.accumulation_forwards = j.at("accumulation_forwards").get<int>();
  rc.train.dropout_rate = j.at("dropout_rate").get<double>();
  rc.train.epochs = j.at("epochs").get<int>();
  rc.train.seed = j.at("seed").get<std::uint64_t>();
  rc.train.loss_mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
  rc.train.plain_sgd = j.at("plain_sgd").get<bool>();
  rc.attn_dim = j.at("attn_dim").get<int>();
  rc.path_h1 = j.at("path_hidden").at(0).get<int>();
  rc.path_h2 = j.at("path_hidden").at(1).get<int>();
  rc.gene_h1 = j.at("gene_hidden").at(0).get<int>();
  rc.gene_h2 = j.at("gene_hidden").at(1).get<int>();
  rc.path_act = j.at("path_act").get<std::string>();
  return rc;
}

// Feature dimensions always come from the data; widths from the config.
inline ModelDims resolve_dims(const RunConfig& rc, const Cohort& cohort) {
  ModelDims dims;
  dims.d_p = cohort.d_p();
  dims.d_g = cohort.d_g();
  dims.attn_dim = rc.attn_dim;
  dims.path_h1 = rc.path_h1;
  dims.path_h2 = rc.path_h2;
  dims.gene_h1 = rc.gene_h1;
  dims.gene_h2 = rc.gene_h2;
  dims.path_act = parse_hidden_act(rc.path_act);
  dims.validate();
  return dims;
}

namespace runner_detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace runner_detail

// Cross-validated training. Per fold: pairs are built from the training
// records only (audited), the trainer runs with a fold-derived seed, and a
// resumable checkpoint plus a per-window loss log land in out_dir.
inline void run_train(const Cohort& cohort, const RunConfig& rc) {
  namespace fs = std::filesystem;
  cohort.validate();
  const fs::path out(rc.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  require(!ec, ErrorCategory::io, "cannot create output directory " + out.string());

  const ModelDims dims = resolve_dims(rc, cohort);
  const auto splits = kfold_split(cohort, rc.k, rc.train.seed);

  {
    std::ofstream folds_csv(out / "folds.csv");
    require(folds_csv.good(), ErrorCategory::io, "cannot write folds.csv");
    folds_csv << "id,fold\n";
    for (std::size_t f = 0; f < splits.size(); ++f) {
      for (const std::string& id : splits[f].val_ids) folds_csv << id << ',' << f << '\n';
    }
  }
  {
    std::ofstream cfg_os(out / "run_config.json");
    require(cfg_os.good(), ErrorCategory::io, "cannot write run_config.json");
    cfg_os << run_config_json(rc).dump() << '\n';
  }

  for (std::size_t f = 0; f < splits.size(); ++f) {
    const Cohort train_cohort = cohort.subset(splits[f].train_ids);
    std::vector<ContrastPair> pairs = build_pairs(train_cohort);

    // Fold isolation audit: a validation id must never occur in a pair.
    const std::set<std::string> val_set(splits[f].val_ids.begin(), splits[f].val_ids.end());
    for (const ContrastPair& p : pairs) {
      require(!val_set.count(p.higher_id) && !val_set.count(p.lower_id), ErrorCategory::state,
              "fold " + std::to_string(f) + ": training pair leaks validation id");
    }

    TrainConfig tc = rc.train;
    tc.seed = derive_seed(rc.train.seed, 1000 + f);

    std::ofstream log(out / ("fold_" + std::to_string(f) + "_log.csv"));
    require(log.good(), ErrorCategory::io, "cannot write the fold training log");
    log << "epoch,window,loss_mean";
    for (const std::string& t : term_names(tc.loss_mode)) log << ",term_" << t;
    log << '\n';

    try {
      Trainer trainer(train_cohort, std::move(pairs), tc, dims);
      trainer.on_window = [&log](const WindowInfo& w) {
        log << w.epoch << ',' << w.window << ',' << runner_detail::fmt("%.9g", w.loss_mean);
        for (double t : w.term_means) log << ',' << runner_detail::fmt("%.9g", t);
        log << '\n';
      };
      trainer.run_epochs(tc.epochs);
      trainer.save_checkpoint(out / ("fold_" + std::to_string(f) + ".ckpt"));
    } catch (const Error& e) {
      fail(e.category(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }
}

struct FoldEval {
  int fold = 0;
  double c_index = 0.0;
  int n_val = 0;
};

struct RunReport {
  std::string config_json;
  std::vector<FoldEval> folds;
  double mean_c = 0.0;
  double std_c = 0.0;  // sample standard deviation across folds
  std::size_t n_high = 0;
  std::size_t n_low = 0;
  double logrank_stat = 0.0;
  double logrank_p = 1.0;

  std::string to_text() const {
    std::string s;
    s += "multimodal object-level contrast: evaluation report\n";
    s += "version: ";
    s += kVersion;
    s += "\nconfig: " + config_json + "\n";
    for (const FoldEval& f : folds) {
      s += "fold " + std::to_string(f.fold) +
           ": c_index=" + runner_detail::fmt("%.6f", f.c_index) +
           " n_val=" + std::to_string(f.n_val) + "\n";
    }
    s += "c_index: mean=" + runner_detail::fmt("%.6f", mean_c) +
         " std=" + runner_detail::fmt("%.6f", std_c) + " folds=" + std::to_string(folds.size()) +
         "\n";
    s += "median_split: n_high=" + std::to_string(n_high) + " n_low=" + std::to_string(n_low) +
         "\n";
    s += "logrank: statistic=" + runner_detail::fmt("%.6f", logrank_stat) +
         " p=" + runner_detail::fmt("%.6e", logrank_p) + "\n";
    return s;
  }
};

// Evaluation over a finished training run: per-fold validation concordance
// from the fold checkpoints, then a pooled median-risk stratification with
// survival curves and the log-rank test. Writes report.txt and km.csv
// (and km.svg on request) into out_dir.
inline RunReport run_eval(const Cohort& cohort, const std::filesystem::path& run_dir,
                          const std::filesystem::path& out_dir, bool with_svg = false) {
  namespace fs = std::filesystem;
  cohort.validate();

  nlohmann::json cfg_json;
  {
    std::ifstream is(run_dir / "run_config.json");
    require(is.good(), ErrorCategory::io,
            "cannot open " + (run_dir / "run_config.json").string());
    is >> cfg_json;
  }
  const RunConfig rc = run_config_from_json(cfg_json);

  // fold -> validation ids
  std::vector<std::vector<std::string>> fold_ids(static_cast<std::size_t>(rc.k));
  {
    std::ifstream is(run_dir / "folds.csv");
    require(is.good(), ErrorCategory::io, "cannot open " + (run_dir / "folds.csv").string());
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto fields = io_detail::split_csv_line(line);
      require(fields.size() == 2, ErrorCategory::format, "malformed folds.csv line: " + line);
      require(cohort.features.count(fields[0]) != 0, ErrorCategory::data,
              "folds.csv id '" + fields[0] + "' is not in the cohort");
      const int f = std::stoi(fields[1]);
      require(f >= 0 && f < rc.k, ErrorCategory::format, "fold index out of range in folds.csv");
      fold_ids[static_cast<std::size_t>(f)].push_back(fields[0]);
    }
  }

  std::map<std::string, double> pooled_risk;
  RunReport report;
  report.config_json = cfg_json.dump();

  for (int f = 0; f < rc.k; ++f) {
    const fs::path ckpt_path = run_dir / ("fold_" + std::to_string(f) + ".ckpt");
    const Checkpoint ckpt = read_checkpoint(ckpt_path);
    require(ckpt.dims.d_p == cohort.d_p() && ckpt.dims.d_g == cohort.d_g(), ErrorCategory::shape,
            "checkpoint " + ckpt_path.string() + " expects d_p=" + std::to_string(ckpt.dims.d_p) +
                ", d_g=" + std::to_string(ckpt.dims.d_g) + " but the cohort has d_p=" +
                std::to_string(cohort.d_p()) + ", d_g=" + std::to_string(cohort.d_g()));
    MsrpPredictor predictor(ckpt.dims);

    const auto& ids = fold_ids[static_cast<std::size_t>(f)];
    RiskScoredCohort sc;
    sc.records = cohort.subset(ids).records;
    for (const SurvivalRecord& r : sc.records) {
      const RiskPrediction rp = predictor.predict(cohort.feature(r.id), ckpt.params);
      sc.risk[r.id] = rp.r;
      pooled_risk[r.id] = rp.r;
    }
    FoldEval fe;
    fe.fold = f;
    fe.n_val = static_cast<int>(sc.records.size());
    fe.c_index = c_index(sc);
    report.folds.push_back(fe);
  }

  double mean = 0.0;
  for (const FoldEval& f : report.folds) mean += f.c_index;
  mean /= static_cast<double>(report.folds.size());
  double var = 0.0;
  for (const FoldEval& f : report.folds) var += (f.c_index - mean) * (f.c_index - mean);
  report.mean_c = mean;
  report.std_c = report.folds.size() > 1
                     ? std::sqrt(var / static_cast<double>(report.folds.size() - 1))
                     : 0.0;

  // Pooled stratification across every validation prediction.
  RiskScoredCohort pooled;
  for (const SurvivalRecord& r : cohort.records) {
    if (pooled_risk.count(r.id)) {
      pooled.records.push_back(r);
      pooled.risk[r.id] = pooled_risk[r.id];
    }
  }
  const MedianSplit split = median_split(pooled);
  report.n_high = split.high_ids.size();
  report.n_low = split.low_ids.size();

  const std::set<std::string> high_set(split.high_ids.begin(), split.high_ids.end());
  std::vector<SurvivalRecord> high_records, low_records;
  for (const SurvivalRecord& r : pooled.records) {
    (high_set.count(r.id) ? high_records : low_records).push_back(r);
  }
  const LogRankResult lr = logrank_test(high_records, low_records);
  report.logrank_stat = lr.statistic;
  report.logrank_p = lr.p_value;

  const KMCurve km_high = km_curve(high_records);
  const KMCurve km_low = km_curve(low_records);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCategory::io, "cannot create output directory " + out_dir.string());
  {
    std::ofstream os(out_dir / "report.txt");
    require(os.good(), ErrorCategory::io, "cannot write report.txt");
    os << report.to_text();
  }
  {
    std::ofstream os(out_dir / "km.csv");
    require(os.good(), ErrorCategory::io, "cannot write km.csv");
    os << "time,survival,at_risk,events,group\n";
    auto dump = [&os](const KMCurve& c, const char* group) {
      for (std::size_t i = 0; i < c.times.size(); ++i) {
        os << io_detail::format_double(c.times[i]) << ','
           << io_detail::format_double(c.survival[i]) << ',' << c.at_risk[i] << ',' << c.events[i]
           << ',' << group << '\n';
      }
    };
    dump(km_high, "high");
    dump(km_low, "low");
  }
  if (with_svg) {
    std::ofstream os(out_dir / "km.svg");
    require(os.good(), ErrorCategory::io, "cannot write km.svg");
    os << km_svg(km_high, km_low, lr.p_value);
  }
  return report;
}

// Concordance of an externally supplied risk score (the synthetic latent,
// in practice) over the whole cohort.
inline double eval_scores(const Cohort& cohort, const std::map<std::string, double>& scores) {
  RiskScoredCohort sc;
  sc.records = cohort.records;
  for (const SurvivalRecord& r : sc.records) {
    auto it = scores.find(r.id);
    require(it != scores.end(), ErrorCategory::data, "no score for id '" + r.id + "'");
    sc.risk[r.id] = it->second;
  }
  return c_index(sc);
}

inline void write_pairs_csv(const std::filesystem::path& path,
                            std::span<const ContrastPair> pairs) {
  std::ofstream os(path);
  require(os.good(), ErrorCategory::io, "cannot write " + path.string());
  os << "higher_id,lower_id\n";
  for (const ContrastPair& p : pairs) os << p.higher_id << ',' << p.lower_id << '\n';
}

}  // namespace moc
