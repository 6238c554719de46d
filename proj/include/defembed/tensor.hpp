#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "defembed/error.hpp"

namespace defembed {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct NamedTensor {
  std::string name;
  Matrix<T> value;
};

/// Ordered collection of named matrices (vectors are n x 1). Order is the
/// insertion order and is what checkpoints and optimizers iterate over.
template <typename T>
class ParameterSet {
 public:
  Matrix<T>& add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (contains(name)) throw Error("duplicate parameter '" + name + "'");
    tensors_.push_back({std::move(name), Matrix<T>::Zero(rows, cols)});
    return tensors_.back().value;
  }

  bool contains(std::string_view name) const { return lookup(name) != nullptr; }

  Matrix<T>& at(std::string_view name) {
    auto* t = lookup(name);
    if (!t) throw Error("no parameter '" + std::string(name) + "'");
    return t->value;
  }
  const Matrix<T>& at(std::string_view name) const { return const_cast<ParameterSet*>(this)->at(name); }

  std::size_t size() const noexcept { return tensors_.size(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  NamedTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  ParameterSet zeros_like() const {
    ParameterSet out;
    for (const auto& t : tensors_) out.add(t.name, t.value.rows(), t.value.cols());
    return out;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& t : tensors_) out.add(t.name, t.value.rows(), t.value.cols()) = t.value.template cast<U>();
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) t.value.setZero();
  }

  bool operator==(const ParameterSet& other) const {
    if (tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const auto& a = tensors_[i];
      const auto& b = other.tensors_[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
      if (a.value != b.value) return false;
    }
    return true;
  }

 private:
  const NamedTensor<T>* lookup(std::string_view name) const {
    for (const auto& t : tensors_) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
  NamedTensor<T>* lookup(std::string_view name) {
    return const_cast<NamedTensor<T>*>(static_cast<const ParameterSet*>(this)->lookup(name));
  }

  std::vector<NamedTensor<T>> tensors_;
};

}  // namespace defembed
