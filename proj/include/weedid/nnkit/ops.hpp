#pragma once

#include <span>
#include <vector>

namespace weedid::nn {

/// Max-shifted softmax; throws Error(EmptyInput) on an empty vector.
std::vector<double> softmax_stable(std::span<const double> logits);

/// log(sum(exp(v))) computed as max + log(sum(exp(v - max))).
double logsumexp(std::span<const double> values);

double gelu(double x);
double gelu_derivative(double x);

}  // namespace weedid::nn
