#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace weedid::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

// Storage aligned to the widest SIMD packet so vectorised kernels take the same
// path on every run; malloc alignment alone varies between allocations.
using AlignedValues = std::vector<double, Eigen::aligned_allocator<double>>;

struct Tensor {
  std::vector<std::size_t> shape;
  AlignedValues values;

  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

  bool operator==(const Tensor&) const = default;
};

// Ordered, named collection of arrays. Used both for model parameters and for
// gradients / optimizer moments that mirror them.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, std::vector<std::size_t> shape);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

  std::optional<std::size_t> index_of(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  /// 2-D tensors map as rows x cols; 1-D tensors as a 1 x n row.
  MatrixMap matrix(std::size_t i);
  ConstMatrixMap matrix(std::size_t i) const;
  MatrixMap matrix(const std::string& name) { return matrix(require(name)); }
  ConstMatrixMap matrix(const std::string& name) const { return matrix(require(name)); }

  ParameterSet zeros_like() const;
  bool same_layout(const ParameterSet& other) const;
  std::size_t total_values() const;

  void remove_prefix(const std::string& prefix);

  bool operator==(const ParameterSet& other) const {
    return names_ == other.names_ && tensors_ == other.tensors_;
  }

 private:
  std::size_t require(const std::string& name) const;

  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace weedid::nn
