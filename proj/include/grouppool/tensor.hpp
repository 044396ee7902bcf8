#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace grouppool {

/// Argument violations: dimension mismatches, empty inputs, bad labels.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed files or records; message carries position where known.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite value encountered during training; names the offending tensor.
struct NumericError : std::runtime_error {
  std::string parameter;
  NumericError(std::string param, const std::string& what)
      : std::runtime_error(what), parameter(std::move(param)) {}
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Vector {
  std::vector<double> data;

  Vector() = default;
  explicit Vector(int dim, double fill = 0.0) : data(static_cast<std::size_t>(dim), fill) {}
  Vector(std::initializer_list<double> xs) : data(xs) {}

  int dim() const { return static_cast<int>(data.size()); }
  double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Vector& a, const Vector& b) { return a.data == b.data; }
};

/// Row-major dense matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows(rows), cols(cols), data(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

inline std::string shape_str(int rows, int cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

inline std::string shape_str(int dim) { return "[" + std::to_string(dim) + "]"; }

inline bool all_finite(const std::vector<double>& xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace grouppool
