#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "clnn/error.hpp"

namespace clnn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A trainable tensor with its gradient accumulator.
template <class T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  template <class U>
  Param<U> cast() const {
    Param<U> p;
    p.name = name;
    p.value = value.template cast<U>();
    p.grad = grad.template cast<U>();
    return p;
  }
};

/// Which positions of a stacked (B*T) x d activation are real characters.
struct SeqLayout {
  std::size_t batch = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;  // batch*width, row-major

  std::size_t rows() const { return batch * width; }
  bool valid(std::size_t b, std::size_t t) const { return mask[b * width + t] != 0; }

  static SeqLayout from_lengths(const std::vector<std::size_t>& lengths, std::size_t width) {
    SeqLayout l{lengths.size(), width, std::vector<std::uint8_t>(lengths.size() * width, 0)};
    for (std::size_t b = 0; b < lengths.size(); ++b)
      for (std::size_t t = 0; t < lengths[b] && t < width; ++t) l.mask[b * width + t] = 1;
    return l;
  }
  static SeqLayout single(std::size_t n) { return from_lengths({n}, n); }
};

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError("non-finite value in " + what);
}

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("shape mismatch: " + what);
}

}  // namespace clnn
