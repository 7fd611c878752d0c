#include "inkstat/logit.hpp"

#include <cmath>
#include <fmt/format.h>

#include "inkstat/distributions.hpp"
#include "inkstat/error.hpp"

namespace inkstat {
namespace {

// log(1 + e^eta) without overflow.
double log1p_exp(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

std::size_t LogitFit::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ParameterError(fmt::format("no coefficient named '{}'", name));
}

double logit_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = design * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1p_exp(eta[i]);
  return ll;
}

Eigen::VectorXd logit_gradient(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = design * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = y[i] - sigmoid(eta[i]);
  return design.transpose() * resid;
}

LogitFit fit_logit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogitOptions& options,
                   std::vector<std::string> names) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) throw ParameterError("fit_logit: X and y differ in rows");
  if (p == 0 && !options.intercept) throw ParameterError("fit_logit: nothing to fit");
  if (options.max_iter < 1 || !(options.tol > 0.0)) throw ParameterError("fit_logit: invalid options");
  if (!x.allFinite() || !y.allFinite()) throw ParameterError("fit_logit: non-finite input");
  double positives = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw ParameterError("fit_logit: labels must be 0 or 1");
    positives += y[i];
  }
  if (positives == 0.0 || positives == static_cast<double>(n))
    throw DegenerateError("fit_logit: only one class present");
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j) names.push_back(fmt::format("x{}", j + 1));
  if (static_cast<Eigen::Index>(names.size()) != p) throw ParameterError("fit_logit: names and columns differ");

  // Standardize: z_j = (x_j - center_j) / scale_j. Without an intercept only
  // scaling is applied, by the root mean square.
  const Eigen::Index off = options.intercept ? 1 : 0;
  Eigen::VectorXd center = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = x.col(j);
    if (options.intercept) {
      center[j] = col.mean();
      scale[j] = std::sqrt((col.array() - center[j]).square().sum() / static_cast<double>(n));
    } else {
      scale[j] = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    }
    if (!(scale[j] > 0.0)) throw DegenerateError(fmt::format("fit_logit: column '{}' has no variation", names[j]));
  }
  Eigen::MatrixXd design(n, p + off);
  if (options.intercept) design.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) design.col(j + off) = (x.col(j).array() - center[j]) / scale[j];

  LogitFit fit;
  fit.intercept = options.intercept;
  fit.n_obs = static_cast<std::size_t>(n);
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p + off);
  if (options.intercept) gamma[0] = std::log(positives / (static_cast<double>(n) - positives));
  double ll = logit_log_likelihood(design, y, gamma);
  fit.log_likelihood_trace.push_back(ll);

  Eigen::MatrixXd info(p + off, p + off);
  const auto information = [&](const Eigen::VectorXd& g) {
    const Eigen::VectorXd eta = design * g;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = sigmoid(eta[i]);
      w[i] = pi * (1.0 - pi);
    }
    info = design.transpose() * w.asDiagonal() * design;
  };

  bool diverged = false;
  for (int iter = 0; iter <= options.max_iter; ++iter) {
    const Eigen::VectorXd grad = logit_gradient(design, y, gamma);
    if (grad.lpNorm<Eigen::Infinity>() < options.tol) {
      fit.converged = true;
      fit.iterations = iter;
      break;
    }
    if (iter == options.max_iter) {
      fit.iterations = iter;
      break;
    }
    information(gamma);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      fit.iterations = iter;
      fit.message = "information matrix is singular";
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = gamma + step;
    double ll_next = logit_log_likelihood(design, y, next);
    for (int halving = 0; halving < 50 && !(ll_next >= ll); ++halving) {
      t *= 0.5;
      next = gamma + t * step;
      ll_next = logit_log_likelihood(design, y, next);
    }
    if (!(ll_next >= ll)) {
      // No ascent possible at working precision.
      fit.iterations = iter + 1;
      fit.converged = grad.lpNorm<Eigen::Infinity>() < std::sqrt(options.tol);
      break;
    }
    gamma = next;
    ll = ll_next;
    fit.log_likelihood_trace.push_back(ll);
    if (gamma.tail(p).lpNorm<Eigen::Infinity>() > options.divergence_limit) {
      diverged = true;
      fit.iterations = iter + 1;
      break;
    }
  }
  if (diverged) {
    fit.converged = false;
    fit.message = "coefficients diverging: quasi-complete separation";
  } else if (!fit.converged && fit.message.empty()) {
    fit.message = fmt::format("no convergence within {} iterations", options.max_iter);
  }
  fit.log_likelihood = ll;

  // Map back: beta = T gamma with beta_j = gamma_j / s_j and
  // beta_0 = gamma_0 - sum_j gamma_j m_j / s_j.
  Eigen::MatrixXd transform = Eigen::MatrixXd::Zero(p + off, p + off);
  if (options.intercept) transform(0, 0) = 1.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    transform(j + off, j + off) = 1.0 / scale[j];
    if (options.intercept) transform(0, j + off) = -center[j] / scale[j];
  }
  const Eigen::VectorXd beta = transform * gamma;
  information(gamma);
  const Eigen::MatrixXd cov_std = info.ldlt().solve(Eigen::MatrixXd::Identity(p + off, p + off));
  const Eigen::MatrixXd cov = transform * cov_std * transform.transpose();

  if (options.intercept) fit.names.emplace_back("(intercept)");
  fit.names.insert(fit.names.end(), names.begin(), names.end());
  for (Eigen::Index j = 0; j < p + off; ++j) {
    const double se = std::sqrt(std::max(cov(j, j), 0.0));
    // Feature z taken on the standardized scale, where it is exactly
    // invariant to rescaling the column.
    const double z = j >= off ? gamma[j] / std::sqrt(cov_std(j, j)) : beta[j] / se;
    fit.coefficients.push_back(beta[j]);
    fit.standard_errors.push_back(se);
    fit.wald_z.push_back(z);
    fit.p_values.push_back(std::min(1.0, 2.0 * dist::normal_sf(std::abs(z))));
  }
  return fit;
}

LogitFit fit_logit(std::span<const FeatureRow> rows, std::span<const Feature> features, const LogitOptions& options) {
  if (features.empty() && !options.intercept) throw ParameterError("fit_logit: at least one feature is required");
  std::vector<const FeatureRow*> complete;
  for (const auto& r : rows)
    if (r.complete(features)) complete.push_back(&r);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(complete.size()), static_cast<Eigen::Index>(features.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(complete.size()));
  for (std::size_t i = 0; i < complete.size(); ++i) {
    for (std::size_t j = 0; j < features.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *(*complete[i])[features[j]];
    y[static_cast<Eigen::Index>(i)] = complete[i]->label ? 1.0 : 0.0;
  }
  std::vector<std::string> names;
  for (const Feature f : features) names.emplace_back(feature_name(f));
  return fit_logit(x, y, options, std::move(names));
}

double predict_prob(const LogitFit& fit, std::span<const double> x) {
  const std::size_t off = fit.intercept ? 1 : 0;
  if (x.size() + off != fit.coefficients.size()) throw ParameterError("predict_prob: feature count mismatch");
  double eta = fit.intercept ? fit.coefficients[0] : 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += fit.coefficients[j + off] * x[j];
  return sigmoid(eta);
}

double predict_prob(const LogitFit& fit, const FeatureRow& row, std::span<const Feature> features) {
  std::vector<double> x;
  for (const Feature f : features) {
    if (!row[f]) throw ParameterError(fmt::format("predict_prob: feature '{}' is missing", feature_name(f)));
    x.push_back(*row[f]);
  }
  return predict_prob(fit, x);
}

}  // namespace inkstat
