#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "hopattn/errors.hpp"

namespace hopattn {

// Dense row-major matrix of 64-bit reals. Value type; all operations on it
// are pure functions.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols);
  Mat(int rows, int cols, std::vector<double> entries);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat zeros(int rows, int cols) { return Mat(rows, cols); }
  static Mat identity(int n);
  static Mat ones(int rows, int cols);
  static Mat gaussian(int rows, int cols, double stddev, std::mt19937_64& rng);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row_ptr(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row_ptr(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Row vector of 64-bit reals (the 1 x n case kept as its own type).
struct RowVec {
  std::vector<double> v;

  RowVec() = default;
  explicit RowVec(int cols) : v(static_cast<std::size_t>(cols), 0.0) {}
  RowVec(std::initializer_list<double> init) : v(init) {}

  int cols() const { return static_cast<int>(v.size()); }
  double& operator[](int j) { return v[static_cast<std::size_t>(j)]; }
  double operator[](int j) const { return v[static_cast<std::size_t>(j)]; }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  Mat as_mat() const;              // 1 x n view copy
  static RowVec from_mat(const Mat& m);  // requires m.rows() == 1
  bool all_finite() const;
};

enum class NormKind { One, Inf, OneInf };

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scale(double s, const Mat& a);
// sa*a + sb*b
Mat lerp(double sa, const Mat& a, double sb, const Mat& b);
Mat hadamard(const Mat& a, const Mat& b);
// a + 1 row^T / a - 1 row^T (broadcast over rows)
Mat add_row_broadcast(const Mat& a, const RowVec& row);
Mat sub_row_broadcast(const Mat& a, const RowVec& row);

// Row-wise softmax with per-row maximum subtraction. Total on finite input;
// each output row sums to 1.
Mat softmax_rows(const Mat& a);
// Softmax of a single row (used by the Hopfield dynamics).
RowVec softmax(const RowVec& a);

// Operator norms: One = max abs column sum, Inf = max abs row sum,
// OneInf = sqrt(norm_1 * norm_inf).
double operator_norm(const Mat& a, NormKind kind);

double frobenius_norm(const Mat& a);

// Rank-one decomposition about the column mean: x = 1 center^T + r.
// center minimizes ||x - 1 y^T||_F over y; columns of r sum to zero.
struct Residual {
  Mat r;
  RowVec center;
};
Residual residual(const Mat& x);

double logsumexp(const RowVec& a);

void check_shape(bool ok, const char* what);

}  // namespace hopattn
