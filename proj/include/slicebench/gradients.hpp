#pragma once

#include <cmath>
#include <vector>

#include "slicebench/core.hpp"

namespace slicebench {

// Shared loss/gradient kernels, templated on the scalar so training can run
// in float while gradient tests instantiate double against finite
// differences.

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  if (x > T(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename T>
T dot(const std::vector<T>& a, const std::vector<T>& b) {
  T s = T(0);
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Skip-gram with negative sampling, one center/context pair:
//   L = -log sigmoid(u . v) - sum_n log sigmoid(-u . n)
template <typename T>
T sgns_pair_loss(const std::vector<T>& u, const std::vector<T>& v,
                 const std::vector<std::vector<T>>& negatives) {
  T loss = softplus(-dot(u, v));
  for (const auto& n : negatives) loss += softplus(dot(u, n));
  return loss;
}

template <typename T>
void sgns_pair_grad(const std::vector<T>& u, const std::vector<T>& v,
                    const std::vector<std::vector<T>>& negatives, std::vector<T>& grad_u,
                    std::vector<T>& grad_v, std::vector<std::vector<T>>& grad_negatives) {
  size_t d = u.size();
  grad_u.assign(d, T(0));
  grad_v.assign(d, T(0));
  grad_negatives.assign(negatives.size(), std::vector<T>(d, T(0)));

  T g_pos = stable_sigmoid(dot(u, v)) - T(1);
  for (size_t i = 0; i < d; ++i) {
    grad_u[i] += g_pos * v[i];
    grad_v[i] += g_pos * u[i];
  }
  for (size_t k = 0; k < negatives.size(); ++k) {
    T g_neg = stable_sigmoid(dot(u, negatives[k]));
    for (size_t i = 0; i < d; ++i) {
      grad_u[i] += g_neg * negatives[k][i];
      grad_negatives[k][i] = g_neg * u[i];
    }
  }
}

// Logistic regression, one example: L = softplus(z) - y*z with z = w.x + b.
template <typename T>
T logistic_example_loss(const std::vector<T>& w, T b, const std::vector<T>& x, int y) {
  T z = dot(w, x) + b;
  return softplus(z) - T(y) * z;
}

// Accumulates into grad_w / grad_b.
template <typename T>
void logistic_example_grad(const std::vector<T>& w, T b, const std::vector<T>& x, int y,
                           std::vector<T>& grad_w, T& grad_b) {
  T g = stable_sigmoid(dot(w, x) + b) - T(y);
  for (size_t i = 0; i < w.size(); ++i) grad_w[i] += g * x[i];
  grad_b += g;
}

}  // namespace slicebench
