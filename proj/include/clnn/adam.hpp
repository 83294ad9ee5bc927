#pragma once

#include <cmath>
#include <vector>

#include "clnn/tensor.hpp"

namespace clnn {

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Mat<T>> m;
  std::vector<Mat<T>> v;
};

/// One bias-corrected Adam update of every parameter from its accumulated grad.
template <class T>
void adam_step(const std::vector<Param<T>*>& params, AdamState<T>& st, double lr) {
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.push_back(Mat<T>::Zero(p->rows(), p->cols()));
      st.v.push_back(Mat<T>::Zero(p->rows(), p->cols()));
    }
  }
  require_shape(st.m.size() == params.size(), "adam state does not match the parameter list");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(st.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    require_shape(m.rows() == p.rows() && m.cols() == p.cols(), "adam moment for " + p.name);
    m = b1 * m + (T(1) - b1) * p.grad;
    v = b2 * v + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

}  // namespace clnn
