#pragma once

// Seeded synthetic cohort with planted effects, standing in for the
// private clinical data.
//
// Generative model, per tattoo:
//   * N_t = 1 + NegBin(r = 2, mean = mean_treatments - 1) visits, gaps of
//     max(14, Gamma(2.5, mean_gap_days / 2.5)) days.
//   * Fluence starts at base_fluence + category shift + per-year tattoo-age
//     trend + noise and ramps by a per-tattoo step (clinicians step energy
//     up); spot size wobbles around a per-tattoo base with a per-tattoo
//     volatility; wavelength and frequency are Bernoulli per visit with
//     per-tattoo propensities.
//   * Complication labels follow a latent logistic model: score =
//     sum_j beta_j (x_j - mean_j) + colored/professional effects +
//     Logistic(0,1) noise, over the features of the pre-complication series
//     (missing features contribute 0). Exactly complication_tattoos tattoos
//     with the highest scores are labelled; the complication is recorded at
//     their last pre-complication visit, optionally followed by a few
//     post-complication visits.

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "inkstat/data_model.hpp"
#include "inkstat/featurize.hpp"

namespace inkstat {

struct SynthConfig {
  int patients = 502;
  int tattoos = 2118;
  int complication_tattoos = 118;

  double mean_treatments = 6.0;
  double mean_gap_days = 95.0;
  double base_fluence = 1.6;
  double fluence_ramp = 0.12;
  double fluence_ramp_sd = 0.06;
  double fluence_noise = 0.15;
  double base_spot = 4.9;
  double spot_drift = -0.07;
  double spot_volatility_max = 1.2;
  double mean_post_complication_visits = 1.0;
  double missing_rate = 0.02;

  // Planted log-odds per feature unit; defaults follow the signs and sizes
  // of the reference logistic fit.
  std::array<double, kFeatureCount> feature_log_odds = {
      -0.137015,  // mean_fluence
      0.0,        // sd_fluence
      -0.154691,  // mean_spot
      1.294140,   // sd_spot
      -0.004299,  // mean_wavelength
      0.014290,   // mean_frequency
      0.550567,   // mean_diff_fluence
      0.449331,   // mean_diff_spot
      0.004979,   // mean_diff_wavelength
      0.466965,   // mean_diff_frequency
      0.0,        // sd_diff_frequency
      -0.001966,  // mean_days_between
  };
  double colored_log_odds = 0.8;
  double professional_log_odds = 0.8;

  // Clinician practice effects on the starting fluence.
  std::map<std::string, double> category_fluence_shift = {{"face", -0.05}, {"upper_extremities", 0.09}};
  double fluence_per_tattoo_age_year = 0.006;

  // Config with every planted effect set to zero.
  static SynthConfig null_effects();
};

nlohmann::json to_json(const SynthConfig& config);
// Missing keys keep their defaults; unknown keys raise ParameterError.
SynthConfig synth_config_from_json(const nlohmann::json& j);

inline constexpr std::array<std::string_view, 8> kBodyCategories = {
    "face", "neck", "upper_extremities", "lower_extremities", "back", "chest", "head", "abdomen"};

// Pure function of (config, seed). Throws ParameterError for inconsistent
// counts (more complication tattoos than tattoos, more patients than
// tattoos, negatives).
Dataset synthesize(const SynthConfig& config, std::uint64_t seed);

// Manifest block documenting a synthetic dataset: seed, config hash, row
// counts and the generative model.
nlohmann::json synth_manifest(const SynthConfig& config, std::uint64_t seed, const Dataset& data);

// FNV-1a 64-bit hash as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace inkstat
