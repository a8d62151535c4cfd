#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgclep/errors.hpp"

namespace fgclep::numerics {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Tensor {
  std::string name;
  Mat value;
};

// Named 64-bit tensors with a fixed iteration order (creation order). Scalars
// are stored as 1x1 matrices.
class ParamStore {
 public:
  Mat& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) fail(errc::config_error, "duplicate parameter '" + name + "'");
    index_[name] = tensors_.size();
    tensors_.push_back({name, Mat::Zero(rows, cols)});
    return tensors_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Mat& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail(errc::config_error, "unknown parameter '" + name + "'");
    return tensors_[it->second].value;
  }
  const Mat& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(errc::config_error, "unknown parameter '" + name + "'");
    return tensors_[it->second].value;
  }

  double scalar(const std::string& name) const { return at(name)(0, 0); }
  double& scalar(const std::string& name) { return at(name)(0, 0); }

  std::size_t size() const { return tensors_.size(); }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }

  std::optional<std::string> first_nonfinite() const {
    for (const auto& t : tensors_) {
      if (!t.value.allFinite()) return t.name;
    }
    return std::nullopt;
  }

  std::size_t total_coefficients() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One gradient tensor per parameter, shape-matched by construction.
class GradStore {
 public:
  explicit GradStore(const ParamStore& params) {
    tensors_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = params.tensor(i);
      index_[t.name] = tensors_.size();
      tensors_.push_back({t.name, Mat::Zero(t.value.rows(), t.value.cols())});
    }
  }

  Mat& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail(errc::config_error, "unknown gradient '" + name + "'");
    return tensors_[it->second].value;
  }
  const Mat& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(errc::config_error, "unknown gradient '" + name + "'");
    return tensors_[it->second].value;
  }

  double& scalar(const std::string& name) { return at(name)(0, 0); }

  std::size_t size() const { return tensors_.size(); }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

  void set_zero() {
    for (auto& t : tensors_) t.value.setZero();
  }

  std::optional<std::string> first_nonfinite() const {
    for (const auto& t : tensors_) {
      if (!t.value.allFinite()) return t.name;
    }
    return std::nullopt;
  }

 private:
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace fgclep::numerics
