#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace provmark::stats {

// Regularized incomplete gamma functions, evaluated with a series expansion
// for x < a+1 and a modified-Lentz continued fraction otherwise.
double gamma_p(double a, double x);  // lower, P(a,x)
double gamma_q(double a, double x);  // upper, Q(a,x) = 1 - P(a,x)

// Upper tail of the chi-squared distribution; df may be fractional.
double chi_squared_tail(double statistic, double df);

// Two-sided Fisher's exact test on a 2x2 table ((a,b),(c,d)): sums the
// hypergeometric probabilities of all tables with the observed margins whose
// probability does not exceed the observed table's.
double fisher_exact_2x2(int64_t a, int64_t b, int64_t c, int64_t d);

// log of the hypergeometric pmf used by fisher_exact_2x2 (exposed for tests).
double log_hypergeom_pmf(int64_t k, int64_t row1, int64_t row2, int64_t col1);

// Kolmogorov-Smirnov distance between a sample and the uniform distribution
// on [0,1].
double ks_distance_uniform(std::vector<double> sample);

// Spearman rank correlation with average ranks for ties. Undefined (nullopt)
// when either side has zero rank variance.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

// Softmax of a logit vector, computed in double with the max-shift trick.
std::vector<double> softmax(const std::vector<double>& logits);

// Formats a p-value, reporting extreme underflow as "<1e-300".
std::string format_p_value(double p);

}  // namespace provmark::stats
