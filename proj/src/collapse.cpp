#include "hopattn/collapse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hopattn {

namespace {

constexpr double kSpreadLimit = 1.256;
constexpr int kHistBins = 200;

double coeff_base(const BoundConstants& c, BoundVariant v) {
  const double scale = (v == BoundVariant::Appendix) ? 4.0 : 8.0;
  return scale * c.n_heads / std::sqrt(static_cast<double>(c.d_k));
}

// exponent * log(factor) with the 0 * log(0) = 0 convention
double log_pow(double factor, double exponent) {
  if (exponent == 0.0) return 0.0;
  if (factor <= 0.0) return -std::numeric_limits<double>::infinity();
  return exponent * std::log(factor);
}

}  // namespace

double BoundConstants::r() const { return 8.0 * n_heads / std::sqrt(static_cast<double>(d_k)); }

double residual_ratio(const FeatureMap& x) {
  const double out_norm = operator_norm(x, NormKind::OneInf);
  if (out_norm == 0.0) throw DegenerateInputError("residual_ratio: all-zero feature map");
  return operator_norm(residual(x).r, NormKind::OneInf) / out_norm;
}

double theorem1_log_bound(double res_norm_in, const BoundConstants& constants, double c,
                          BoundVariant variant) {
  if (res_norm_in < 0.0) throw std::invalid_argument("theorem1_bound: negative residual norm");
  const double pow3 = std::pow(3.0, constants.depth);
  return log_pow(coeff_base(constants, variant) * c, (pow3 - 1.0) / 2.0) +
         log_pow(res_norm_in, pow3);
}

double theorem1_bound(double res_norm_in, const BoundConstants& constants, double c,
                      BoundVariant variant) {
  return std::exp(theorem1_log_bound(res_norm_in, constants, c, variant));
}

double theorem1_bound(double res_norm_in, const BoundConstants& constants, BoundVariant variant) {
  return theorem1_bound(res_norm_in, constants, constants.c1, variant);
}

double single_layer_bound(double res_norm_in, double c1, double c2, int n_heads, int d_k,
                          double alpha_prime) {
  if (res_norm_in < 0.0 || c1 < 0.0 || c2 < 0.0)
    throw std::invalid_argument("single_layer_bound: inputs must be non-negative");
  const double base = 4.0 * n_heads / std::sqrt(static_cast<double>(d_k));
  return base * (1.0 - alpha_prime) * c1 * res_norm_in * res_norm_in * res_norm_in +
         base * alpha_prime * c2 * res_norm_in;
}

NetworkBound network_bound(double res_norm_in, const BoundConstants& constants,
                           BoundVariant variant) {
  if (res_norm_in < 0.0) throw std::invalid_argument("network_bound: negative residual norm");
  const double rv = coeff_base(constants, variant);
  const double cubic_factor = rv * (1.0 - constants.alpha_prime) * constants.c1;
  const double linear_factor = rv * constants.alpha_prime * constants.c2;
  const int depth = constants.depth;

  NetworkBound best;
  best.log_value = -std::numeric_limits<double>::infinity();
  best.argmax_m = 0;
  for (int m = 0; m <= depth; ++m) {
    const double pow3 = std::pow(3.0, m);
    const double lg = log_pow(cubic_factor, (pow3 - 1.0) / 2.0) +
                      log_pow(linear_factor, pow3 * (depth - m)) + log_pow(res_norm_in, pow3);
    if (lg > best.log_value) {
      best.log_value = lg;
      best.argmax_m = m;
    }
  }
  best.value = std::exp(best.log_value);
  return best;
}

AssumptionCheck assumption_check(const Mat& pre_softmax) {
  AssumptionCheck out;
  for (int i = 0; i < pre_softmax.rows(); ++i) {
    const double* r = pre_softmax.row_ptr(i);
    double lo = r[0], hi = r[0];
    for (int j = 1; j < pre_softmax.cols(); ++j) {
      lo = std::min(lo, r[j]);
      hi = std::max(hi, r[j]);
    }
    out.max_spread = std::max(out.max_spread, hi - lo);
  }
  out.ok = out.max_spread <= kSpreadLimit;
  return out;
}

Mat lemma_spread_matrix(const FeatureMap& x, const HeadParams& head, const Mat& h_prev,
                        double alpha_prime) {
  Mat r = residual(x).r;
  Mat w_qk = matmul(head.w_q, transpose(head.w_k));
  Mat e = matmul(matmul(r, w_qk), transpose(r));
  const double beta = (1.0 - alpha_prime) / std::sqrt(static_cast<double>(head.w_q.cols()));
  return lerp(beta, e, alpha_prime, h_prev);
}

BoundConstants gather_bound_constants(const std::vector<LayerParams>& layers,
                                      const NetTrace& trace) {
  if (layers.empty()) throw ConfigError("gather_bound_constants: no layers");
  check_shape(trace.hidden.size() >= layers.size(), "trace shorter than the layer stack");
  BoundConstants c;
  c.n_heads = layers.front().n_heads();
  c.d_k = layers.front().d_k();
  c.depth = static_cast<int>(layers.size());
  c.alpha_prime = layers.front().alpha_prime;
  const double sqrt_dk = std::sqrt(static_cast<double>(c.d_k));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (int h = 0; h < layers[l].n_heads(); ++h) {
      const HeadParams& head = layers[l].heads[static_cast<std::size_t>(h)];
      const double w_vo = operator_norm(matmul(head.w_v, head.w_o), NormKind::OneInf);
      const double w_qk = operator_norm(matmul(head.w_q, transpose(head.w_k)), NormKind::One);
      c.c1 = std::max(c.c1, w_vo * w_qk);
      // incoming accumulated scores, restored to pre-scaling units
      const double a_norm =
          sqrt_dk * operator_norm(trace.hidden[l].per_head[static_cast<std::size_t>(h)],
                                  NormKind::One);
      c.c2 = std::max(c.c2, w_vo * a_norm);
    }
  }
  return c;
}

double CosineStats::fraction_above(double theta) const {
  if (sims.empty()) return 0.0;
  std::size_t n = 0;
  for (double s : sims) {
    if (s > theta) ++n;
  }
  return static_cast<double>(n) / static_cast<double>(sims.size());
}

CosineStats cosine_similarity_stats(const FeatureMap& x) {
  check_shape(x.rows() >= 2, "cosine_similarity_stats: need at least 2 tokens");
  std::vector<double> norms(static_cast<std::size_t>(x.rows()));
  std::vector<int> live;
  for (int i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < x.cols(); ++j) s += x(i, j) * x(i, j);
    norms[static_cast<std::size_t>(i)] = std::sqrt(s);
    if (norms[static_cast<std::size_t>(i)] > 0.0) live.push_back(i);
  }
  CosineStats st;
  st.zero_rows = x.rows() - static_cast<int>(live.size());
  if (live.empty()) throw DegenerateInputError("cosine_similarity_stats: all token rows are zero");

  std::vector<int> counts(kHistBins, 0);
  double sum = 0.0;
  for (std::size_t a = 0; a < live.size(); ++a) {
    for (std::size_t b = a + 1; b < live.size(); ++b) {
      const int i = live[a], j = live[b];
      double dot = 0.0;
      for (int k = 0; k < x.cols(); ++k) dot += x(i, k) * x(j, k);
      double sim = dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      sim = std::clamp(sim, -1.0, 1.0);
      st.sims.push_back(sim);
      sum += sim;
      int bin = static_cast<int>((sim + 1.0) / 2.0 * kHistBins);
      bin = std::clamp(bin, 0, kHistBins - 1);
      ++counts[static_cast<std::size_t>(bin)];
    }
  }
  st.pairs = static_cast<int>(st.sims.size());
  st.mean = st.pairs > 0 ? sum / st.pairs : 0.0;

  const double width = 2.0 / kHistBins;
  int best_bin = 0;
  for (int b = 0; b < kHistBins; ++b) {
    st.bin_center.push_back(-1.0 + (b + 0.5) * width);
    st.density.push_back(st.pairs > 0 ? counts[static_cast<std::size_t>(b)] / (st.pairs * width)
                                      : 0.0);
    if (counts[static_cast<std::size_t>(b)] > counts[static_cast<std::size_t>(best_bin)])
      best_bin = b;
  }
  st.mode = st.bin_center[static_cast<std::size_t>(best_bin)];
  return st;
}

EntropyStats attention_entropy_stats(const Mat& p) {
  EntropyStats st;
  st.per_row.reserve(static_cast<std::size_t>(p.rows()));
  for (int i = 0; i < p.rows(); ++i) {
    double rowsum = 0.0;
    double h = 0.0;
    for (int j = 0; j < p.cols(); ++j) {
      const double v = p(i, j);
      if (v < -1e-12) throw ContractError("attention_entropy_stats: negative weight");
      rowsum += v;
      if (v > 0.0) h -= v * std::log(v);
    }
    if (std::fabs(rowsum - 1.0) > 1e-8)
      throw ContractError("attention_entropy_stats: row does not sum to 1");
    st.per_row.push_back(h);
  }
  st.min = *std::min_element(st.per_row.begin(), st.per_row.end());
  st.max = *std::max_element(st.per_row.begin(), st.per_row.end());
  double s = 0.0;
  for (double v : st.per_row) s += v;
  st.mean = s / static_cast<double>(st.per_row.size());
  return st;
}

CollapseReport collapse_report(const FeatureMap& x_in, const std::vector<LayerParams>& layers,
                               const HiddenState& h0, BoundVariant variant) {
  NetResult net = attn_only_net(x_in, layers, h0);
  CollapseReport rep;
  rep.alpha = 0.0;  // attention-only stacks run skip-free
  rep.alpha_prime = layers.front().alpha_prime;
  rep.depth = static_cast<int>(layers.size());
  rep.constants = gather_bound_constants(layers, net.trace);
  rep.input_residual_norm = operator_norm(residual(x_in).r, NormKind::OneInf);

  const double sqrt_dk = std::sqrt(static_cast<double>(rep.constants.d_k));
  double prev_res = rep.input_residual_norm;
  for (int l = 1; l <= rep.depth; ++l) {
    const FeatureMap& xl = net.trace.features[static_cast<std::size_t>(l)];
    LayerDiag diag;
    diag.layer = l;
    diag.residual_norm = operator_norm(residual(xl).r, NormKind::OneInf);
    diag.output_norm = operator_norm(xl, NormKind::OneInf);
    diag.ratio = diag.output_norm > 0.0 ? diag.residual_norm / diag.output_norm : 0.0;

    const LayerParams& lp = layers[static_cast<std::size_t>(l - 1)];
    double c1_l = 0.0, c2_l = 0.0, spread = 0.0;
    for (int h = 0; h < lp.n_heads(); ++h) {
      const HeadParams& head = lp.heads[static_cast<std::size_t>(h)];
      const Mat& h_prev = net.trace.hidden[static_cast<std::size_t>(l - 1)]
                              .per_head[static_cast<std::size_t>(h)];
      const double w_vo = operator_norm(matmul(head.w_v, head.w_o), NormKind::OneInf);
      c1_l = std::max(c1_l, w_vo * operator_norm(matmul(head.w_q, transpose(head.w_k)),
                                                 NormKind::One));
      c2_l = std::max(c2_l, w_vo * sqrt_dk * operator_norm(h_prev, NormKind::One));
      spread = std::max(
          spread,
          assumption_check(
              lemma_spread_matrix(net.trace.features[static_cast<std::size_t>(l - 1)], head,
                                  h_prev, lp.alpha_prime))
              .max_spread);
    }
    diag.assumption_spread = spread;
    diag.assumption_ok = spread <= kSpreadLimit;
    diag.lemma_bound = single_layer_bound(prev_res, c1_l, c2_l, lp.n_heads(), lp.d_k(),
                                          lp.alpha_prime);

    BoundConstants at_depth = rep.constants;
    at_depth.depth = l;
    diag.theorem1_value = theorem1_bound(rep.input_residual_norm, at_depth, variant);
    NetworkBound nb = network_bound(rep.input_residual_norm, at_depth, variant);
    diag.network_value = nb.value;
    diag.network_argmax_m = nb.argmax_m;

    double ent_sum = 0.0;
    int ent_n = 0;
    for (const Mat& w : net.trace.attn_weights[static_cast<std::size_t>(l - 1)]) {
      EntropyStats es = attention_entropy_stats(w);
      ent_sum += es.mean;
      ++ent_n;
    }
    diag.mean_entropy = ent_n > 0 ? ent_sum / ent_n : 0.0;

    CosineStats cs = cosine_similarity_stats(xl);
    diag.cosine_mode = cs.mode;
    diag.cosine_frac_above_099 = cs.fraction_above(0.99);

    rep.layers.push_back(diag);
    prev_res = diag.residual_norm;
  }
  return rep;
}

}  // namespace hopattn
