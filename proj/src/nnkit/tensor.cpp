#include "weedid/nnkit/tensor.hpp"

#include <numeric>

#include "weedid/error.hpp"

namespace weedid::nn {

Tensor& ParameterSet::add(const std::string& name, std::vector<std::size_t> shape) {
  if (index_.count(name)) throw Error(ErrorCode::ShapeMismatch, "duplicate parameter " + name);
  if (shape.empty() || shape.size() > 2) throw Error(ErrorCode::ShapeMismatch, name + ": only 1-D and 2-D tensors");
  const auto count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(Tensor{std::move(shape), AlignedValues(count, 0.0)});
  return tensors_.back();
}

std::optional<std::size_t> ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterSet::require(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::ShapeMismatch, "no parameter named " + name);
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) { return tensors_[require(name)]; }
const Tensor& ParameterSet::at(const std::string& name) const { return tensors_[require(name)]; }

MatrixMap ParameterSet::matrix(std::size_t i) {
  auto& t = tensors_[i];
  return MatrixMap(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

ConstMatrixMap ParameterSet::matrix(std::size_t i) const {
  const auto& t = tensors_[i];
  return ConstMatrixMap(t.values.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (std::size_t i = 0; i < tensors_.size(); ++i) out.add(names_[i], tensors_[i].shape);
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
  return true;
}

std::size_t ParameterSet::total_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

void ParameterSet::remove_prefix(const std::string& prefix) {
  ParameterSet kept;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (names_[i].rfind(prefix, 0) == 0) continue;
    kept.add(names_[i], tensors_[i].shape).values = tensors_[i].values;
  }
  *this = std::move(kept);
}

}  // namespace weedid::nn
