#pragma once

// Small descriptive-statistics helpers shared across modules.

#include <span>
#include <vector>

namespace inkstat::stats {

double sum(std::span<const double> x);
double mean(std::span<const double> x);
// Sample variance with the n-1 denominator; requires x.size() >= 2.
double variance(std::span<const double> x);
double sd(std::span<const double> x);
double median(std::span<const double> x);
// Percentile by linear interpolation between order statistics
// (h = (n-1) p), p in [0, 1].
double percentile(std::span<const double> x, double p);
double pearson(std::span<const double> x, std::span<const double> y);

// Midranks (1-based) of x; tied values share the average of their ranks.
std::vector<double> midranks(std::span<const double> x);
// Sum over tie groups of (t^3 - t).
double tie_term(std::span<const double> x);

}  // namespace inkstat::stats
