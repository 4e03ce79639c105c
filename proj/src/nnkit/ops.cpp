#include "weedid/nnkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "weedid/error.hpp"

namespace weedid::nn {

std::vector<double> softmax_stable(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::EmptyInput, "softmax of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "logsumexp of an empty vector");
  const double m = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - m);
  return m + std::log(sum);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace weedid::nn
