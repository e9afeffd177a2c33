#include "hopattn/mat.hpp"

#include <algorithm>
#include <cmath>

#include "hopattn/kernels.hpp"

namespace hopattn {

Mat::Mat(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
  check_shape(rows >= 1 && cols >= 1, "Mat dimensions must be positive");
}

Mat::Mat(int rows, int cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  check_shape(rows >= 1 && cols >= 1, "Mat dimensions must be positive");
  check_shape(data_.size() == static_cast<std::size_t>(rows) * cols,
              "entry count does not match Mat dimensions");
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int>(rows.size());
  cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  check_shape(rows_ >= 1 && cols_ >= 1, "Mat dimensions must be positive");
  data_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (const auto& r : rows) {
    check_shape(static_cast<int>(r.size()) == cols_, "ragged initializer for Mat");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::ones(int rows, int cols) {
  Mat m(rows, cols);
  std::fill(m.data_.begin(), m.data_.end(), 1.0);
  return m;
}

Mat Mat::gaussian(int rows, int cols, double stddev, std::mt19937_64& rng) {
  Mat m(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : m.data_) x = dist(rng);
  return m;
}

bool Mat::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Mat RowVec::as_mat() const {
  return Mat(1, cols(), v);
}

RowVec RowVec::from_mat(const Mat& m) {
  check_shape(m.rows() == 1, "RowVec::from_mat expects a 1-row matrix");
  RowVec r(m.cols());
  std::copy(m.data(), m.data() + m.cols(), r.data());
  return r;
}

bool RowVec::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

Mat matmul(const Mat& a, const Mat& b) {
  check_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Mat c(a.rows(), b.cols());
  kernels().matmul(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Mat add(const Mat& a, const Mat& b) {
  check_shape(a.same_shape(b), "add: shapes differ");
  Mat c(a.rows(), a.cols());
  kernels().add(a.data(), b.data(), c.data(), a.size());
  return c;
}

Mat sub(const Mat& a, const Mat& b) {
  check_shape(a.same_shape(b), "sub: shapes differ");
  Mat c(a.rows(), a.cols());
  kernels().sub(a.data(), b.data(), c.data(), a.size());
  return c;
}

Mat scale(double s, const Mat& a) {
  Mat c(a.rows(), a.cols());
  kernels().scale(s, a.data(), c.data(), a.size());
  return c;
}

Mat lerp(double sa, const Mat& a, double sb, const Mat& b) {
  check_shape(a.same_shape(b), "lerp: shapes differ");
  Mat c(a.rows(), a.cols());
  kernels().lerp(sa, a.data(), sb, b.data(), c.data(), a.size());
  return c;
}

Mat hadamard(const Mat& a, const Mat& b) {
  check_shape(a.same_shape(b), "hadamard: shapes differ");
  Mat c(a.rows(), a.cols());
  kernels().hadamard(a.data(), b.data(), c.data(), a.size());
  return c;
}

Mat add_row_broadcast(const Mat& a, const RowVec& row) {
  check_shape(a.cols() == row.cols(), "add_row_broadcast: width mismatch");
  Mat c(a.rows(), a.cols());
  kernels().add_row(a.data(), row.data(), c.data(), a.rows(), a.cols());
  return c;
}

Mat sub_row_broadcast(const Mat& a, const RowVec& row) {
  check_shape(a.cols() == row.cols(), "sub_row_broadcast: width mismatch");
  Mat c(a.rows(), a.cols());
  kernels().sub_row(a.data(), row.data(), c.data(), a.rows(), a.cols());
  return c;
}

Mat softmax_rows(const Mat& a) {
  Mat p(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* in = a.row_ptr(i);
    double* out = p.row_ptr(i);
    double m = in[0];
    for (int j = 1; j < a.cols(); ++j) m = std::max(m, in[j]);
    double sum = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
      out[j] = std::exp(in[j] - m);
      sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < a.cols(); ++j) out[j] *= inv;
  }
  return p;
}

RowVec softmax(const RowVec& a) {
  return RowVec::from_mat(softmax_rows(a.as_mat()));
}

double operator_norm(const Mat& a, NormKind kind) {
  switch (kind) {
    case NormKind::One: {
      std::vector<double> colsum(static_cast<std::size_t>(a.cols()));
      kernels().abs_colsum(a.data(), colsum.data(), a.rows(), a.cols());
      return *std::max_element(colsum.begin(), colsum.end());
    }
    case NormKind::Inf: {
      double best = 0.0;
      for (int i = 0; i < a.rows(); ++i) {
        const double* r = a.row_ptr(i);
        double s = 0.0;
        for (int j = 0; j < a.cols(); ++j) s += std::fabs(r[j]);
        best = std::max(best, s);
      }
      return best;
    }
    case NormKind::OneInf:
      return std::sqrt(operator_norm(a, NormKind::One) * operator_norm(a, NormKind::Inf));
  }
  return 0.0;
}

double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

Residual residual(const Mat& x) {
  const double inv_n = 1.0 / x.rows();
  RowVec center(x.cols());
  std::vector<double> colsum(static_cast<std::size_t>(x.cols()), 0.0);
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row_ptr(i);
    for (int j = 0; j < x.cols(); ++j) colsum[static_cast<std::size_t>(j)] += r[j];
  }
  for (int j = 0; j < x.cols(); ++j) center[j] = colsum[static_cast<std::size_t>(j)] * inv_n;
  return Residual{sub_row_broadcast(x, center), std::move(center)};
}

double logsumexp(const RowVec& a) {
  double m = a[0];
  for (int j = 1; j < a.cols(); ++j) m = std::max(m, a[j]);
  double sum = 0.0;
  for (int j = 0; j < a.cols(); ++j) sum += std::exp(a[j] - m);
  return m + std::log(sum);
}

}  // namespace hopattn
