#pragma once

// Binary logistic regression by maximum likelihood with Wald inference.
//
// Newton's method on the log-likelihood with step-halving; columns are
// standardized internally and the estimates and covariance mapped back.
// Separation is reported through converged = false, never hidden.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inkstat/featurize.hpp"

namespace inkstat {

struct LogitOptions {
  int max_iter = 100;
  double tol = 1e-8;  // on the max-norm of the standardized gradient
  bool intercept = true;
  // Standardized coefficient magnitude taken as evidence of separation.
  double divergence_limit = 30.0;
};

struct LogitFit {
  std::vector<std::string> names;  // "(intercept)" first when fitted
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  std::vector<double> wald_z;
  std::vector<double> p_values;
  bool intercept = true;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // one entry per accepted iterate
  std::string message;
  std::size_t n_obs = 0;

  // Index of a named coefficient; throws ParameterError when absent.
  std::size_t index_of(std::string_view name) const;
};

// X holds one column per feature (no intercept column); y is 0/1.
LogitFit fit_logit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogitOptions& options = {},
                   std::vector<std::string> names = {});

// Complete rows on `features` only; label from the row.
LogitFit fit_logit(std::span<const FeatureRow> rows, std::span<const Feature> features,
                   const LogitOptions& options = {});

// Logistic transform of the linear predictor for one feature vector.
double predict_prob(const LogitFit& fit, std::span<const double> x);
// Throws ParameterError when a modeled feature is missing from the row.
double predict_prob(const LogitFit& fit, const FeatureRow& row, std::span<const Feature> features);

// Log-likelihood and its gradient at beta for a design matrix that already
// contains any intercept column.
double logit_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);
Eigen::VectorXd logit_gradient(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

}  // namespace inkstat
