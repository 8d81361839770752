#include "vbmerge/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vbmerge/errors.hpp"

namespace vbmerge::numerics {

namespace {

// Below this the argument is shifted upward before the asymptotic series.
constexpr double kAsymptoticThreshold = 10.0;

void require_positive(double x, const char* name) {
  if (!(x > 0.0)) {
    throw DomainError(std::string(name) + " requires a positive argument, got " +
                      std::to_string(x));
  }
}

}  // namespace

double digamma(double x) {
  require_positive(x, "digamma");
  if (std::isinf(x)) return x;

  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli tail: sum_k B_{2k} / (2k x^{2k}), Horner form in 1/x^2.
  const double tail =
      inv2 *
      (1.0 / 12 -
       inv2 * (1.0 / 120 -
               inv2 * (1.0 / 252 -
                       inv2 * (1.0 / 240 -
                               inv2 * (1.0 / 132 -
                                       inv2 * (691.0 / 32760 -
                                               inv2 * (1.0 / 12)))))));
  return (std::log(x) - 0.5 * inv - tail) - shift;
}

double trigamma(double x) {
  require_positive(x, "trigamma");
  if (std::isinf(x)) return 0.0;

  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv * inv2 *
      (1.0 / 6 -
       inv2 * (1.0 / 30 -
               inv2 * (1.0 / 42 -
                       inv2 * (1.0 / 30 -
                               inv2 * (5.0 / 66 -
                                       inv2 * (691.0 / 2730 -
                                               inv2 * (7.0 / 6)))))));
  return shift + (inv + 0.5 * inv2 + tail);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("log_sum_exp of an empty list");
  if (values.size() == 1) return values.front();
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isinf(top)) return top;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - top);
  return top + std::log(sum);
}

double log_multivariate_beta(std::span<const double> alpha) {
  double total = 0.0;
  double sum_lgamma = 0.0;
  for (double a : alpha) {
    total += a;
    sum_lgamma += std::lgamma(a);
  }
  return sum_lgamma - std::lgamma(total);
}

}  // namespace vbmerge::numerics
