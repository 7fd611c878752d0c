#include "inkstat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <random>

#include "inkstat/error.hpp"

namespace inkstat {
namespace {

using Rng = std::mt19937_64;

constexpr std::array<double, 8> kCategoryWeights = {0.12, 0.16, 0.26, 0.12, 0.1, 0.12, 0.06, 0.06};
constexpr std::array<double, 8> kRaceWeights = {0.01, 0.01, 0.08, 0.01, 0.8, 0.04, 0.03, 0.02};
constexpr std::array<double, 6> kFitzpatrickWeights = {0.04, 0.14, 0.3, 0.3, 0.16, 0.06};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double normal(Rng& rng, double mean, double sd) { return std::normal_distribution<double>(mean, sd)(rng); }
bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

template <std::size_t N>
std::size_t categorical(Rng& rng, const std::array<double, N>& weights) {
  return std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
}

double round_to(double value, double step) { return std::round(value / step) * step; }

struct TattooPlan {
  double ramp;
  double spot_base;
  double spot_volatility;
  double spot_drift;
  double prob_1064;
  double prob_10hz;
  double gap_scale;  // per-tattoo pacing of visits
  double redraw;     // chance a visit re-draws the frequency instead of keeping it
};

TreatmentEvent next_event(Rng& rng, const SynthConfig& config, const TattooPlan& plan, const std::string& id,
                          const TreatmentEvent* previous, int index, double start_fluence) {
  TreatmentEvent e;
  e.tattoo_id = id;
  if (previous == nullptr) {
    e.day = 0;
    e.fluence = start_fluence;
  } else {
    const double gap = plan.gap_scale * std::gamma_distribution<double>(2.5, config.mean_gap_days / 2.5)(rng);
    e.day = previous->day + std::max(14, static_cast<int>(std::lround(gap)));
    e.fluence = previous->fluence + plan.ramp + normal(rng, 0.0, config.fluence_noise);
  }
  e.fluence = std::clamp(round_to(e.fluence, 0.01), 0.3, 8.0);
  const double spot =
      plan.spot_base + plan.spot_drift * index + plan.spot_volatility * normal(rng, 0.0, 1.0);
  e.spot_size = std::clamp(round_to(spot, 0.1), 1.0, 10.0);
  e.wavelength_nm = bernoulli(rng, plan.prob_1064) ? 1064 : 532;
  if (previous == nullptr || bernoulli(rng, plan.redraw)) {
    e.frequency_hz = bernoulli(rng, plan.prob_10hz) ? 10 : 5;
  } else {
    e.frequency_hz = previous->frequency_hz;
  }
  return e;
}

template <class T>
std::optional<T> maybe_missing(Rng& rng, double rate, T value) {
  if (rate > 0.0 && bernoulli(rng, rate)) return std::nullopt;
  return value;
}

void validate(const SynthConfig& c) {
  if (c.patients < 0 || c.tattoos < 0 || c.complication_tattoos < 0)
    throw ParameterError("synthetic counts must be nonnegative");
  if (c.complication_tattoos > c.tattoos)
    throw ParameterError(fmt::format("complication_tattoos ({}) exceeds tattoos ({})", c.complication_tattoos, c.tattoos));
  if (c.tattoos > 0 && c.patients > c.tattoos)
    throw ParameterError(fmt::format("patients ({}) exceeds tattoos ({}); every patient owns at least one tattoo",
                                     c.patients, c.tattoos));
  if (c.tattoos > 0 && c.patients == 0) throw ParameterError("tattoos require at least one patient");
  if (!(c.mean_treatments >= 1.0)) throw ParameterError("mean_treatments must be at least 1");
  if (!(c.mean_gap_days > 0.0)) throw ParameterError("mean_gap_days must be positive");
  if (c.missing_rate < 0.0 || c.missing_rate >= 1.0) throw ParameterError("missing_rate must lie in [0,1)");
  if (c.spot_volatility_max < 0.05) throw ParameterError("spot_volatility_max must be at least 0.05");
}

}  // namespace

SynthConfig SynthConfig::null_effects() {
  SynthConfig c;
  c.feature_log_odds.fill(0.0);
  c.colored_log_odds = 0.0;
  c.professional_log_odds = 0.0;
  c.category_fluence_shift.clear();
  c.fluence_per_tattoo_age_year = 0.0;
  return c;
}

Dataset synthesize(const SynthConfig& config, std::uint64_t seed) {
  validate(config);
  Dataset data;
  if (config.tattoos == 0) return data;
  Rng rng(seed);

  // Patients.
  const int n_patients = config.patients;
  std::vector<int> patient_age(n_patients);
  for (int i = 0; i < n_patients; ++i) {
    PatientRecord p;
    p.patient_id = fmt::format("P{:04d}", i + 1);
    patient_age[i] = 18 + static_cast<int>(std::gamma_distribution<double>(4.0, 4.0)(rng));
    p.age = maybe_missing(rng, config.missing_rate, patient_age[i]);
    p.sex_male = maybe_missing(rng, config.missing_rate, bernoulli(rng, 0.78));
    p.hispanic = maybe_missing(rng, config.missing_rate, bernoulli(rng, 0.75));
    p.race = maybe_missing(rng, config.missing_rate, static_cast<Race>(categorical(rng, kRaceWeights)));
    p.fitzpatrick = maybe_missing(rng, config.missing_rate, static_cast<int>(categorical(rng, kFitzpatrickWeights)) + 1);
    data.patients.push_back(std::move(p));
  }

  // Owner of each tattoo: one per patient, the remainder at random.
  std::vector<int> owner(config.tattoos);
  for (int t = 0; t < config.tattoos; ++t) {
    owner[t] = t < n_patients ? t : std::uniform_int_distribution<int>(0, n_patients - 1)(rng);
  }
  std::shuffle(owner.begin(), owner.end(), rng);

  // Tattoos and their pre-complication series.
  std::vector<TattooPlan> plans;
  std::vector<double> start_fluence;
  const double nb_mean = config.mean_treatments - 1.0;
  for (int t = 0; t < config.tattoos; ++t) {
    TattooRecord rec;
    rec.tattoo_id = fmt::format("T{:05d}", t + 1);
    rec.patient_id = data.patients[owner[t]].patient_id;
    const auto category = std::string(kBodyCategories[categorical(rng, kCategoryWeights)]);
    const int age = std::min(std::max(patient_age[owner[t]] - 12, 0),
                             static_cast<int>(std::gamma_distribution<double>(1.5, 6.0)(rng)));
    rec.body_category = maybe_missing(rng, config.missing_rate, category);
    rec.tattoo_age = maybe_missing(rng, config.missing_rate, age);
    rec.colored = maybe_missing(rng, config.missing_rate, bernoulli(rng, 0.3));
    rec.professional = maybe_missing(rng, config.missing_rate, bernoulli(rng, 0.5));
    rec.fitzpatrick = data.patients[owner[t]].fitzpatrick;

    TattooPlan plan;
    plan.ramp = normal(rng, config.fluence_ramp, config.fluence_ramp_sd);
    plan.spot_base = normal(rng, config.base_spot, 0.35);
    plan.spot_volatility = uniform(rng, 0.05, config.spot_volatility_max);
    plan.spot_drift = normal(rng, config.spot_drift, 0.05);
    plan.prob_1064 = uniform(rng, 0.55, 1.0);
    plan.prob_10hz = uniform(rng, 0.7, 1.0);
    plan.gap_scale = std::gamma_distribution<double>(2.0, 0.5)(rng);
    // Clinicians who vary the spot size, or see the patient after a long
    // gap, are also more likely to change the frequency.
    const double fidget = (plan.spot_volatility - 0.05) / (config.spot_volatility_max - 0.05 + 1e-12);
    plan.redraw = std::clamp(0.5 + 0.25 * plan.gap_scale + 0.25 * fidget, 0.0, 1.0);
    const auto shift = config.category_fluence_shift.find(category);
    const double start = config.base_fluence +
                         (shift == config.category_fluence_shift.end() ? 0.0 : shift->second) +
                         config.fluence_per_tattoo_age_year * age + normal(rng, 0.0, 0.25);

    const int visits = 1 + (nb_mean > 0.0 ? std::negative_binomial_distribution<int>(2, 2.0 / (2.0 + nb_mean))(rng) : 0);
    TreatmentSeries series{rec.tattoo_id, {}};
    for (int k = 0; k < visits; ++k) {
      series.events.push_back(next_event(rng, config, plan, rec.tattoo_id,
                                         series.events.empty() ? nullptr : &series.events.back(), k, start));
    }
    plans.push_back(plan);
    start_fluence.push_back(start);
    data.tattoos.push_back(std::move(rec));
    data.series.push_back(std::move(series));
  }

  // Latent logistic scores over the pre-complication features.
  std::vector<FeatureRow> rows;
  rows.reserve(data.series.size());
  for (const auto& s : data.series) rows.push_back(summarize(s));
  std::array<double, kFeatureCount> centers{};
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.values[j]) {
        total += *r.values[j];
        ++n;
      }
    }
    centers[j] = n > 0 ? total / static_cast<double>(n) : 0.0;
  }
  std::vector<double> score(config.tattoos);
  for (int t = 0; t < config.tattoos; ++t) {
    double eta = 0.0;
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      if (rows[t].values[j]) eta += config.feature_log_odds[j] * (*rows[t].values[j] - centers[j]);
    }
    const auto& rec = data.tattoos[t];
    if (rec.colored.value_or(false)) eta += config.colored_log_odds;
    if (rec.professional.value_or(false)) eta += config.professional_log_odds;
    const double u = uniform(rng, 1e-12, 1.0 - 1e-12);
    score[t] = eta + std::log(u / (1.0 - u));
  }
  std::vector<int> order(config.tattoos);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  std::vector<bool> complicated(config.tattoos, false);
  for (int i = 0; i < config.complication_tattoos; ++i) complicated[order[i]] = true;

  // Record the complication and append post-complication visits.
  for (int t = 0; t < config.tattoos; ++t) {
    auto& series = data.series[t];
    if (complicated[t]) {
      series.events.back().complication_observed = true;
      const int extra = std::poisson_distribution<int>(config.mean_post_complication_visits)(rng);
      for (int k = 0; k < extra; ++k) {
        const int index = static_cast<int>(series.events.size());
        auto e = next_event(rng, config, plans[t], series.tattoo_id, &series.events.back(), index, start_fluence[t]);
        e.complication_observed = bernoulli(rng, 0.3);
        series.events.push_back(std::move(e));
      }
    }
    auto& rec = data.tattoos[t];
    rec.treatment_total = static_cast<int>(series.size());
    rec.any_complication = complicated[t];
  }

  for (int t = 0; t < config.tattoos; ++t) {
    auto& p = data.patients[owner[t]];
    p.total_tattoos = p.total_tattoos.value_or(0) + 1;
    p.treatment_total = p.treatment_total.value_or(0) + data.tattoos[t].treatment_total.value_or(0);
    p.any_complication = p.any_complication.value_or(false) || complicated[t];
  }
  return data;
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json effects = nlohmann::json::object();
  for (const Feature f : all_features()) effects[std::string(feature_name(f))] = c.feature_log_odds[static_cast<std::size_t>(f)];
  nlohmann::json shifts = nlohmann::json::object();
  for (const auto& [k, v] : c.category_fluence_shift) shifts[k] = v;
  return {
      {"patients", c.patients},
      {"tattoos", c.tattoos},
      {"complication_tattoos", c.complication_tattoos},
      {"mean_treatments", c.mean_treatments},
      {"mean_gap_days", c.mean_gap_days},
      {"base_fluence", c.base_fluence},
      {"fluence_ramp", c.fluence_ramp},
      {"fluence_ramp_sd", c.fluence_ramp_sd},
      {"fluence_noise", c.fluence_noise},
      {"base_spot", c.base_spot},
      {"spot_drift", c.spot_drift},
      {"spot_volatility_max", c.spot_volatility_max},
      {"mean_post_complication_visits", c.mean_post_complication_visits},
      {"missing_rate", c.missing_rate},
      {"feature_log_odds", effects},
      {"colored_log_odds", c.colored_log_odds},
      {"professional_log_odds", c.professional_log_odds},
      {"category_fluence_shift", shifts},
      {"fluence_per_tattoo_age_year", c.fluence_per_tattoo_age_year},
  };
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("synthetic config must be a JSON object");
  SynthConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "patients") c.patients = value.get<int>();
      else if (key == "tattoos") c.tattoos = value.get<int>();
      else if (key == "complication_tattoos") c.complication_tattoos = value.get<int>();
      else if (key == "mean_treatments") c.mean_treatments = value.get<double>();
      else if (key == "mean_gap_days") c.mean_gap_days = value.get<double>();
      else if (key == "base_fluence") c.base_fluence = value.get<double>();
      else if (key == "fluence_ramp") c.fluence_ramp = value.get<double>();
      else if (key == "fluence_ramp_sd") c.fluence_ramp_sd = value.get<double>();
      else if (key == "fluence_noise") c.fluence_noise = value.get<double>();
      else if (key == "base_spot") c.base_spot = value.get<double>();
      else if (key == "spot_drift") c.spot_drift = value.get<double>();
      else if (key == "spot_volatility_max") c.spot_volatility_max = value.get<double>();
      else if (key == "mean_post_complication_visits") c.mean_post_complication_visits = value.get<double>();
      else if (key == "missing_rate") c.missing_rate = value.get<double>();
      else if (key == "colored_log_odds") c.colored_log_odds = value.get<double>();
      else if (key == "professional_log_odds") c.professional_log_odds = value.get<double>();
      else if (key == "fluence_per_tattoo_age_year") c.fluence_per_tattoo_age_year = value.get<double>();
      else if (key == "category_fluence_shift") {
        c.category_fluence_shift.clear();
        for (const auto& [cat, shift] : value.items()) c.category_fluence_shift[cat] = shift.get<double>();
      } else if (key == "feature_log_odds") {
        for (const auto& [name, beta] : value.items()) {
          const auto f = parse_feature(name);
          if (!f) throw ParameterError(fmt::format("unknown feature '{}' in feature_log_odds", name));
          c.feature_log_odds[static_cast<std::size_t>(*f)] = beta.get<double>();
        }
      } else {
        throw ParameterError(fmt::format("unknown synthetic config key '{}'", key));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(fmt::format("malformed synthetic config: {}", e.what()));
  }
  validate(c);
  return c;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

nlohmann::json synth_manifest(const SynthConfig& config, std::uint64_t seed, const Dataset& data) {
  std::size_t events = 0;
  std::size_t complicated = 0;
  for (const auto& s : data.series) events += s.size();
  for (const auto& t : data.tattoos) complicated += t.any_complication.value_or(false) ? 1 : 0;
  const nlohmann::json cfg = to_json(config);
  return {
      {"seed", seed},
      {"config", cfg},
      {"config_hash", fnv1a_hex(cfg.dump())},
      {"rows", {{"patients", data.patients.size()},
                {"tattoos", data.tattoos.size()},
                {"treatments", events},
                {"complication_tattoos", complicated}}},
      {"generative_model",
       {"visits: N_t = 1 + NegBin(r=2, mean=mean_treatments-1); gaps max(14, Gamma(2.5, mean_gap_days/2.5)) days",
        "fluence: start = base_fluence + category shift + fluence_per_tattoo_age_year * tattoo_age + N(0, 0.25); "
        "each visit adds a per-tattoo ramp N(fluence_ramp, fluence_ramp_sd) plus N(0, fluence_noise)",
        "spot size: per-tattoo base N(base_spot, 0.35) + drift per visit + volatility U(0.05, spot_volatility_max) * N(0,1)",
        "wavelength 1064 w.p. U(0.55, 1) per tattoo, else 532",
        "frequency: 10 Hz w.p. U(0.7, 1) per tattoo, else 5 Hz; later visits keep the previous frequency unless "
        "re-drawn w.p. 0.5 + 0.25 * gap_scale + 0.25 * spot volatility (scaled to [0,1]), gap_scale ~ Gamma(2, 0.5) "
        "multiplying every gap",
        "label: top complication_tattoos by sum_j beta_j (x_j - mean_j) + colored/professional log-odds + Logistic(0,1)",
        "complication recorded at the last pre-complication visit, then Poisson(mean_post_complication_visits) "
        "further visits each flagged w.p. 0.3"}},
  };
}

}  // namespace inkstat
