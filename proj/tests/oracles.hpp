#pragma once

// Independent reference computations for tests. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fedgreen/tensor.hpp"
#include "fedgreen/widthnet.hpp"

namespace oracle {

// Column-oriented matrix product plus rectifier, written without the
// library's affine helper.
inline fedgreen::Matrix forward(const fedgreen::widthnet::Model &m, const fedgreen::Matrix &x) {
  std::vector<std::vector<double>> a(x.rows(), std::vector<double>(x.cols()));
  for (std::size_t b = 0; b < x.rows(); ++b)
    for (std::size_t i = 0; i < x.cols(); ++i) a[b][i] = x(b, i);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto &l = m.layers[k];
    std::vector<std::vector<double>> z(a.size(), std::vector<double>(l.shape.out_dim, 0.0));
    for (std::size_t i = 0; i < l.shape.in_dim; ++i)
      for (std::size_t b = 0; b < a.size(); ++b)
        for (std::size_t o = 0; o < l.shape.out_dim; ++o) z[b][o] += a[b][i] * l.weight(o, i);
    for (std::size_t b = 0; b < a.size(); ++b)
      for (std::size_t o = 0; o < l.shape.out_dim; ++o) {
        z[b][o] += l.bias[o];
        if (k + 1 < m.layers.size()) z[b][o] = std::max(0.0, z[b][o]);
      }
    a = std::move(z);
  }
  fedgreen::Matrix out(x.rows(), m.class_count);
  for (std::size_t b = 0; b < a.size(); ++b)
    for (std::size_t c = 0; c < m.class_count; ++c) out(b, c) = a[b][c];
  return out;
}

inline double mean_cross_entropy(const fedgreen::widthnet::Model &m, const fedgreen::Matrix &x,
                                 std::span<const int> y) {
  const auto s = oracle::forward(m, x);
  double total = 0.0;
  for (std::size_t b = 0; b < s.rows(); ++b) {
    double mx = s(b, 0);
    for (std::size_t c = 1; c < s.cols(); ++c) mx = std::max(mx, s(b, c));
    double z = 0.0;
    for (std::size_t c = 0; c < s.cols(); ++c) z += std::exp(s(b, c) - mx);
    total += mx + std::log(z) - s(b, static_cast<std::size_t>(y[b]));
  }
  return total / static_cast<double>(s.rows());
}

inline double &scalar(fedgreen::widthnet::Model &m, std::size_t k) {
  for (auto &l : m.layers) {
    if (k < l.weight.size()) return l.weight.data()[k];
    k -= l.weight.size();
    if (k < l.bias.size()) return l.bias[k];
    k -= l.bias.size();
  }
  return m.layers.front().bias.front();
}

inline double central_difference(const fedgreen::widthnet::Model &m, const fedgreen::Matrix &x,
                                 std::span<const int> y, std::size_t k, double h) {
  auto plus = m, minus = m;
  scalar(plus, k) += h;
  scalar(minus, k) -= h;
  return (mean_cross_entropy(plus, x, y) - mean_cross_entropy(minus, x, y)) / (2.0 * h);
}

// Relative error with a floor so that near-zero gradients compare absolutely
// at the finite-difference noise level.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Hand arithmetic for the emission formulas, written straight from the
// definitions with no shared helpers.
struct Profile {
  double theta, f, e_cmp, e_idle, e_r, U, D, n;
};
struct Params {
  double S, W, E;
};

inline double c_cmp(double p, const Params &q, const Profile &c) {
  const double seconds = p * p * q.E * q.W * c.n / c.f;
  const double kwh = seconds * c.e_cmp / 3600.0 / 1000.0;
  return kwh * c.theta;
}

inline double c_com(double p, const Params &q, const Profile &c) {
  const double seconds = p * p * q.S / c.D + p * p * q.S / c.U;
  const double kwh = seconds * (c.e_r + c.e_idle) / 3600.0 / 1000.0;
  return kwh * c.theta;
}

inline double a_const(const Params &q, const Profile &c) {
  return q.S / c.D * (c.e_r + c.e_idle) + q.S / c.U * (c.e_r + c.e_idle) +
         q.E * q.W * c.n * c.e_cmp / c.f;
}

}  // namespace oracle
