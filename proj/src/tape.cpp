#include "hopattn/tape.hpp"

#include <algorithm>
#include <cmath>

#include "hopattn/kernels.hpp"

namespace hopattn {

namespace {

constexpr double kLnEps = 1e-5;  // layer norm variance floor
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void accum(Mat& dst, const Mat& inc) {
  kernels().add(dst.data(), inc.data(), dst.data(), dst.size());
}

}  // namespace

Var Tape::emplace(Mat value, std::function<void(Tape&)> back) {
  Node n;
  n.grad = Mat::zeros(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

Var Tape::input(Mat value) { return emplace(std::move(value), nullptr); }

Var Tape::param(const std::string& name, Mat value) {
  Var v = emplace(std::move(value), nullptr);
  trainables_.emplace_back(name, v);
  return v;
}

const Mat& Tape::value(Var v) const { return node(v).value; }
const Mat& Tape::grad(Var v) const { return node(v).grad; }

void Tape::zero_grad() {
  for (auto& n : nodes_) {
    std::fill(n.grad.data(), n.grad.data() + n.grad.size(), 0.0);
  }
}

void Tape::backward(Var root) {
  Node& r = node(root);
  check_shape(r.value.rows() == 1 && r.value.cols() == 1, "backward: root must be 1x1");
  r.grad(0, 0) += 1.0;
  // Creation order is topological, so one reverse sweep suffices.
  for (int i = root.id; i >= 0; --i) {
    auto& back = nodes_[static_cast<std::size_t>(i)].back;
    if (back) back(*this);
  }
}

Var Tape::matmul(Var a, Var b) {
  Mat out = hopattn::matmul(value(a), value(b));
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [a, b, v](Tape& t) {
    const Mat& g = t.grad(v);
    Mat ga = hopattn::matmul(g, hopattn::transpose(t.value(b)));
    accum(t.node(a).grad, ga);
    Mat gb = hopattn::matmul(hopattn::transpose(t.value(a)), g);
    accum(t.node(b).grad, gb);
  };
  return v;
}

Var Tape::add(Var a, Var b) {
  Var v = emplace(hopattn::add(value(a), value(b)), nullptr);
  node(v).back = [a, b, v](Tape& t) {
    accum(t.node(a).grad, t.grad(v));
    accum(t.node(b).grad, t.grad(v));
  };
  return v;
}

Var Tape::sub(Var a, Var b) {
  Var v = emplace(hopattn::sub(value(a), value(b)), nullptr);
  node(v).back = [a, b, v](Tape& t) {
    const Mat& g = t.grad(v);
    accum(t.node(a).grad, g);
    Mat neg = hopattn::scale(-1.0, g);
    accum(t.node(b).grad, neg);
  };
  return v;
}

Var Tape::mul(Var a, Var b) {
  Var v = emplace(hopattn::hadamard(value(a), value(b)), nullptr);
  node(v).back = [a, b, v](Tape& t) {
    const Mat& g = t.grad(v);
    Mat ga = hopattn::hadamard(g, t.value(b));
    accum(t.node(a).grad, ga);
    Mat gb = hopattn::hadamard(g, t.value(a));
    accum(t.node(b).grad, gb);
  };
  return v;
}

Var Tape::scale(Var a, double s) {
  Var v = emplace(hopattn::scale(s, value(a)), nullptr);
  node(v).back = [a, s, v](Tape& t) {
    Mat ga = hopattn::scale(s, t.grad(v));
    accum(t.node(a).grad, ga);
  };
  return v;
}

Var Tape::add_scaled(double sa, Var a, double sb, Var b) {
  Var v = emplace(hopattn::lerp(sa, value(a), sb, value(b)), nullptr);
  node(v).back = [sa, a, sb, b, v](Tape& t) {
    const Mat& g = t.grad(v);
    Mat ga = hopattn::scale(sa, g);
    accum(t.node(a).grad, ga);
    Mat gb = hopattn::scale(sb, g);
    accum(t.node(b).grad, gb);
  };
  return v;
}

Var Tape::transpose(Var a) {
  Var v = emplace(hopattn::transpose(value(a)), nullptr);
  node(v).back = [a, v](Tape& t) {
    Mat ga = hopattn::transpose(t.grad(v));
    accum(t.node(a).grad, ga);
  };
  return v;
}

Var Tape::add_row(Var a, Var row) {
  const Mat& r = value(row);
  check_shape(r.rows() == 1 && r.cols() == value(a).cols(), "add_row: row must be 1 x cols");
  Var v = emplace(add_row_broadcast(value(a), RowVec::from_mat(r)), nullptr);
  node(v).back = [a, row, v](Tape& t) {
    const Mat& g = t.grad(v);
    accum(t.node(a).grad, g);
    Mat& gr = t.node(row).grad;
    for (int i = 0; i < g.rows(); ++i) {
      for (int j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    }
  };
  return v;
}

Var Tape::softmax_rows(Var a, bool causal) {
  const Mat& x = value(a);
  if (causal) check_shape(x.rows() == x.cols(), "causal softmax needs a square matrix");
  Mat p(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const int valid = causal ? i + 1 : x.cols();
    const double* in = x.row_ptr(i);
    double* out = p.row_ptr(i);
    double m = in[0];
    for (int j = 1; j < valid; ++j) m = std::max(m, in[j]);
    double s = 0.0;
    for (int j = 0; j < valid; ++j) {
      out[j] = std::exp(in[j] - m);
      s += out[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < valid; ++j) out[j] *= inv;
    for (int j = valid; j < x.cols(); ++j) out[j] = 0.0;
  }
  Var v = emplace(std::move(p), nullptr);
  node(v).back = [a, causal, v](Tape& t) {
    const Mat& pv = t.value(v);
    const Mat& g = t.grad(v);
    Mat& ga = t.node(a).grad;
    for (int i = 0; i < pv.rows(); ++i) {
      const int valid = causal ? i + 1 : pv.cols();
      double dot = 0.0;
      for (int j = 0; j < valid; ++j) dot += g(i, j) * pv(i, j);
      for (int j = 0; j < valid; ++j) ga(i, j) += pv(i, j) * (g(i, j) - dot);
    }
  };
  return v;
}

Var Tape::layer_norm_rows(Var a, Var gamma, Var beta) {
  const Mat& x = value(a);
  const Mat& gm = value(gamma);
  const Mat& bt = value(beta);
  check_shape(gm.rows() == 1 && gm.cols() == x.cols(), "layer_norm: gamma must be 1 x cols");
  check_shape(bt.rows() == 1 && bt.cols() == x.cols(), "layer_norm: beta must be 1 x cols");
  const int d = x.cols();
  Mat xhat(x.rows(), d);
  std::vector<double> inv_sigma(static_cast<std::size_t>(x.rows()));
  Mat out(x.rows(), d);
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row_ptr(i);
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += r[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + kLnEps);
    inv_sigma[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      xhat(i, j) = (r[j] - mu) * is;
      out(i, j) = gm(0, j) * xhat(i, j) + bt(0, j);
    }
  }
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [a, gamma, beta, v, xhat, inv_sigma](Tape& t) {
    const Mat& g = t.grad(v);
    const Mat& gm = t.value(gamma);
    Mat& ga = t.node(a).grad;
    Mat& ggm = t.node(gamma).grad;
    Mat& gbt = t.node(beta).grad;
    const int d = g.cols();
    for (int i = 0; i < g.rows(); ++i) {
      double mean_gh = 0.0, mean_ghx = 0.0;
      for (int j = 0; j < d; ++j) {
        const double gh = g(i, j) * gm(0, j);
        mean_gh += gh;
        mean_ghx += gh * xhat(i, j);
        ggm(0, j) += g(i, j) * xhat(i, j);
        gbt(0, j) += g(i, j);
      }
      mean_gh /= d;
      mean_ghx /= d;
      const double is = inv_sigma[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j) {
        const double gh = g(i, j) * gm(0, j);
        ga(i, j) += is * (gh - mean_gh - xhat(i, j) * mean_ghx);
      }
    }
  };
  return v;
}

Var Tape::gelu(Var a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    out.data()[i] = 0.5 * xi * (1.0 + std::erf(xi * kInvSqrt2));
  }
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [a, v](Tape& t) {
    const Mat& x = t.value(a);
    const Mat& g = t.grad(v);
    Mat& ga = t.node(a).grad;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
      ga.data()[i] += g.data()[i] * (cdf + xi * pdf);
    }
  };
  return v;
}

Var Tape::sum(Var a) {
  const Mat& x = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
  Mat out(1, 1);
  out(0, 0) = s;
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [a, v](Tape& t) {
    const double g = t.grad(v)(0, 0);
    Mat& ga = t.node(a).grad;
    for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
  };
  return v;
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
  const Mat& tb = value(table);
  Mat out(static_cast<int>(ids.size()), tb.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check_shape(ids[i] >= 0 && ids[i] < tb.rows(), "gather_rows: id out of range");
    std::copy(tb.row_ptr(ids[i]), tb.row_ptr(ids[i]) + tb.cols(), out.row_ptr(static_cast<int>(i)));
  }
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [table, ids = std::move(ids), v](Tape& t) {
    const Mat& g = t.grad(v);
    Mat& gt = t.node(table).grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (int j = 0; j < g.cols(); ++j) gt(ids[i], j) += g(static_cast<int>(i), j);
    }
  };
  return v;
}

Var Tape::concat_rows(Var a, Var b) {
  const Mat& xa = value(a);
  const Mat& xb = value(b);
  check_shape(xa.cols() == xb.cols(), "concat_rows: widths differ");
  Mat out(xa.rows() + xb.rows(), xa.cols());
  std::copy(xa.data(), xa.data() + xa.size(), out.data());
  std::copy(xb.data(), xb.data() + xb.size(), out.data() + xa.size());
  Var v = emplace(std::move(out), nullptr);
  const int na = xa.rows();
  node(v).back = [a, b, na, v](Tape& t) {
    const Mat& g = t.grad(v);
    Mat& ga = t.node(a).grad;
    Mat& gb = t.node(b).grad;
    for (int i = 0; i < ga.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j);
    for (int i = 0; i < gb.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) gb(i, j) += g(na + i, j);
  };
  return v;
}

Var Tape::slice_rows(Var a, int first, int count) {
  const Mat& x = value(a);
  check_shape(first >= 0 && count >= 1 && first + count <= x.rows(), "slice_rows: bad range");
  Mat out(count, x.cols());
  std::copy(x.row_ptr(first), x.row_ptr(first) + static_cast<std::size_t>(count) * x.cols(),
            out.data());
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [a, first, count, v](Tape& t) {
    const Mat& g = t.grad(v);
    Mat& ga = t.node(a).grad;
    for (int i = 0; i < count; ++i)
      for (int j = 0; j < g.cols(); ++j) ga(first + i, j) += g(i, j);
  };
  return v;
}

Var Tape::cross_entropy_mean(Var logits, std::vector<int> targets) {
  const Mat& z = value(logits);
  check_shape(static_cast<int>(targets.size()) == z.rows(),
              "cross_entropy_mean: one target per row");
  const int n = z.rows();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    check_shape(targets[static_cast<std::size_t>(i)] >= 0 &&
                    targets[static_cast<std::size_t>(i)] < z.cols(),
                "cross_entropy_mean: target out of range");
    RowVec row(z.cols());
    std::copy(z.row_ptr(i), z.row_ptr(i) + z.cols(), row.data());
    loss += logsumexp(row) - z(i, targets[static_cast<std::size_t>(i)]);
  }
  Mat out(1, 1);
  out(0, 0) = loss / n;
  Var v = emplace(std::move(out), nullptr);
  node(v).back = [logits, targets = std::move(targets), v](Tape& t) {
    const Mat& z = t.value(logits);
    const double g = t.grad(v)(0, 0) / z.rows();
    Mat p = hopattn::softmax_rows(z);
    Mat& gl = t.node(logits).grad;
    for (int i = 0; i < z.rows(); ++i) {
      for (int j = 0; j < z.cols(); ++j) {
        const double onehot = (j == targets[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
        gl(i, j) += g * (p(i, j) - onehot);
      }
    }
  };
  return v;
}

Var Tape::detach(Var a) { return emplace(value(a), nullptr); }

void ParamSet::add(const std::string& name, Mat value) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(value));
}

Mat& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return items_[it->second].second;
}

const Mat& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return items_[it->second].second;
}

bool ParamSet::contains(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParamSet::total_entries() const {
  std::size_t n = 0;
  for (const auto& [name, m] : items_) n += m.size();
  return n;
}

Var BoundParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw ConfigError("parameter not bound: " + name);
  return it->second;
}

BoundParams bind_params(Tape& tape, const ParamSet& params) {
  BoundParams bp;
  for (const auto& [name, m] : params.items()) bp.vars[name] = tape.param(name, m);
  return bp;
}

double grad_check(const ScalarFn& f, const ParamSet& params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  Tape tape;
  BoundParams bp = bind_params(tape, params);
  Var loss = f(tape, bp);
  tape.backward(loss);
  std::vector<Mat> analytic;
  analytic.reserve(params.items().size());
  for (const auto& [name, m] : params.items()) analytic.push_back(tape.grad(bp.at(name)));

  auto eval = [&](const ParamSet& p) {
    Tape t;
    BoundParams b = bind_params(t, p);
    return t.value(f(t, b))(0, 0);
  };

  double max_rel = 0.0;
  ParamSet probe = params;
  for (std::size_t pi = 0; pi < params.items().size(); ++pi) {
    Mat& m = probe.items()[pi].second;
    for (std::size_t e = 0; e < m.size(); ++e) {
      const double saved = m.data()[e];
      m.data()[e] = saved + step;
      const double up = eval(probe);
      m.data()[e] = saved - step;
      const double dn = eval(probe);
      m.data()[e] = saved;
      const double numeric = (up - dn) / (2.0 * step);
      const double a = analytic[pi].data()[e];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace hopattn
