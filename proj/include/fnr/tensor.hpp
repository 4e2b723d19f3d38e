#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "fnr/errors.hpp"

namespace fnr {

/// Dense row-major 2-D tensor. The scalar type is selectable: `double` for
/// training, `long double` for finite-difference gradient checking.
template <typename T>
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor2() = default;

  Tensor2(std::size_t r, std::size_t c, T fill = T(0))
      : rows(r), cols(c), data(r * c, fill) {}

  Tensor2(std::size_t r, std::size_t c, std::initializer_list<T> values)
      : rows(r), cols(c), data(values) {
    if (data.size() != r * c)
      throw ShapeError("initializer size " + std::to_string(data.size()) +
                       " does not match " + std::to_string(r) + "x" +
                       std::to_string(c));
  }

  static Tensor2 zeros(std::size_t r, std::size_t c) { return Tensor2(r, c); }

  static Tensor2 identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = T(1);
    return t;
  }

  T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }

  bool same_shape(const Tensor2& o) const {
    return rows == o.rows && cols == o.cols;
  }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor2<U> cast() const {
    Tensor2<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool operator==(const Tensor2& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

template <typename T>
inline void require_same_shape(const Tensor2<T>& a, const Tensor2<T>& b,
                               const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
}

/// Frobenius norm of the elementwise difference, relative to |a|.
template <typename T>
inline T rel_frobenius_diff(const Tensor2<T>& a, const Tensor2<T>& b) {
  require_same_shape(a, b, "rel_frobenius_diff");
  T num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    T d = a.data[i] - b.data[i];
    num += d * d;
    den += a.data[i] * a.data[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), T(1e-30));
}

}  // namespace fnr
