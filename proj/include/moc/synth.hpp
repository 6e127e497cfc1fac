#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "moc/common.hpp"
#include "moc/rng.hpp"
#include "moc/survival.hpp"

namespace moc {

// Desk-scale cohort generator. A scalar latent risk u in (0,1) drives the
// hazard; both modalities observe noisy linear images of u.
struct SynthConfig {
  int n = 400;
  double censor_frac = 0.3;  // fraction of subjects censored, in [0,1)
  double beta = 3.0;         // risk-signal strength (log-hazard slope)
  double noise_sigma = 0.1;
  int d_p = 32;
  int d_g = 16;
  double mean_bag = 6.0;  // bag size is Poisson(mean_bag) + 1
  std::uint64_t seed = 1;

  void validate() const {
    require(n >= 4, ErrorCategory::config, "synthetic cohort needs n >= 4");
    require(censor_frac >= 0.0 && censor_frac < 1.0, ErrorCategory::config,
            "censor_frac must lie in [0,1)");
    require(noise_sigma >= 0.0, ErrorCategory::config, "noise_sigma must be >= 0");
    require(d_p >= 1 && d_g >= 1, ErrorCategory::config, "feature dimensions must be >= 1");
    require(mean_bag >= 0.0, ErrorCategory::config, "mean_bag must be >= 0");
  }
};

struct SynthCohort {
  Cohort cohort;
  std::vector<double> latent;  // aligned with cohort.records; oracle only
};

// Reproducible given the config. Event times are exponential with rate
// exp(beta * (2u - 1)), so larger u means higher hazard and shorter life;
// censored subjects get event=false and their time scaled down by a uniform
// factor. The latent u is returned in a sidecar and must never reach
// training code.
inline SynthCohort generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int width = cfg.n >= 10000 ? 5 : 4;

  std::vector<double> latent(static_cast<std::size_t>(cfg.n));
  for (double& u : latent) u = rng.uniform();

  std::vector<double> times(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    const double rate = std::exp(cfg.beta * (2.0 * latent[static_cast<std::size_t>(i)] - 1.0));
    times[static_cast<std::size_t>(i)] = rng.exponential(rate);
  }

  // Exactly round(n * censor_frac) subjects are censored.
  std::vector<int> order(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  const int n_censored = static_cast<int>(cfg.censor_frac * cfg.n + 0.5);
  std::vector<bool> censored(static_cast<std::size_t>(cfg.n), false);
  for (int c = 0; c < n_censored; ++c) {
    const int idx = order[static_cast<std::size_t>(c)];
    censored[static_cast<std::size_t>(idx)] = true;
    times[static_cast<std::size_t>(idx)] *= rng.uniform();
  }

  // Fixed linear maps from the latent to each modality.
  std::vector<double> gene_dir(static_cast<std::size_t>(cfg.d_g));
  for (double& v : gene_dir) v = rng.normal();
  std::vector<double> patch_dir(static_cast<std::size_t>(cfg.d_p));
  for (double& v : patch_dir) v = rng.normal();

  SynthCohort out;
  out.latent = latent;
  for (int i = 0; i < cfg.n; ++i) {
    const double u = latent[static_cast<std::size_t>(i)];
    std::string num = std::to_string(i);
    while (static_cast<int>(num.size()) < width) num.insert(num.begin(), '0');
    SurvivalRecord rec;
    rec.id = "P" + num;
    rec.time = times[static_cast<std::size_t>(i)];
    rec.event = !censored[static_cast<std::size_t>(i)];

    FeatureSet fs;
    fs.gene = NumArray({static_cast<std::size_t>(cfg.d_g)});
    for (int kd = 0; kd < cfg.d_g; ++kd) {
      fs.gene[static_cast<std::size_t>(kd)] =
          gene_dir[static_cast<std::size_t>(kd)] * u + cfg.noise_sigma * rng.normal();
    }
    const int bag_size = rng.poisson(cfg.mean_bag) + 1;
    fs.bag = NumArray({static_cast<std::size_t>(bag_size), static_cast<std::size_t>(cfg.d_p)});
    for (int j = 0; j < bag_size; ++j) {
      for (int kd = 0; kd < cfg.d_p; ++kd) {
        fs.bag.at(static_cast<std::size_t>(j), static_cast<std::size_t>(kd)) =
            patch_dir[static_cast<std::size_t>(kd)] * u + cfg.noise_sigma * rng.normal();
      }
    }
    out.cohort.features.emplace(rec.id, std::move(fs));
    out.cohort.records.push_back(std::move(rec));
  }
  out.cohort.validate();
  return out;
}

}  // namespace moc
