#include "hopattn/attention.hpp"

#include <cmath>

namespace hopattn {

namespace {

// Same loop as the non-causal path with the row truncated at the diagonal;
// masked entries are exactly zero.
Mat softmax_rows_causal(const Mat& a) {
  check_shape(a.rows() == a.cols(), "causal softmax needs a square matrix");
  Mat p(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const int valid = i + 1;
    const double* in = a.row_ptr(i);
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
    for (int j = valid; j < a.cols(); ++j) out[j] = 0.0;
  }
  return p;
}

void check_layer(const FeatureMap& x, const LayerParams& p) {
  check_shape(p.n_heads() >= 1, "layer has no heads");
  check_shape(p.d() == x.cols(), "layer width does not match feature map");
  check_shape(p.b_o.cols() == x.cols(), "b_o width does not match feature map");
  for (const auto& h : p.heads) {
    check_shape(h.w_q.rows() == p.d() && h.w_k.rows() == p.d() && h.w_v.rows() == p.d(),
                "head projection height mismatch");
    check_shape(h.w_q.cols() == p.d_k() && h.w_k.cols() == p.d_k() && h.w_v.cols() == p.d_k(),
                "head projection width mismatch");
    check_shape(h.w_o.rows() == p.d_k() && h.w_o.cols() == p.d(), "w_o shape mismatch");
    check_shape(h.b_q.cols() == p.d_k() && h.b_k.cols() == p.d_k(), "head bias width mismatch");
  }
}

}  // namespace

HiddenState HiddenState::zeros(int n_heads, int tokens) {
  HiddenState h;
  h.per_head.reserve(static_cast<std::size_t>(n_heads));
  for (int i = 0; i < n_heads; ++i) h.per_head.push_back(Mat::zeros(tokens, tokens));
  return h;
}

LayerParams init_layer(int d, int d_k, int n_heads, double alpha, double alpha_prime,
                       double stddev, std::mt19937_64& rng, bool causal,
                       bool use_internal_skip) {
  LayerParams p;
  p.alpha = alpha;
  p.alpha_prime = alpha_prime;
  p.causal = causal;
  p.use_internal_skip = use_internal_skip;
  p.b_o = RowVec(d);
  for (int h = 0; h < n_heads; ++h) {
    HeadParams hp;
    hp.w_q = Mat::gaussian(d, d_k, stddev, rng);
    hp.w_k = Mat::gaussian(d, d_k, stddev, rng);
    hp.w_v = Mat::gaussian(d, d_k, stddev, rng);
    hp.w_o = Mat::gaussian(d_k, d, stddev, rng);
    hp.b_q = RowVec(d_k);
    hp.b_k = RowVec(d_k);
    p.heads.push_back(std::move(hp));
  }
  return p;
}

Mat head_scores(const FeatureMap& x, const HeadParams& head) {
  check_shape(head.w_q.rows() == x.cols(), "head_scores: width mismatch");
  Mat q = add_row_broadcast(matmul(x, head.w_q), head.b_q);
  Mat k = add_row_broadcast(matmul(x, head.w_k), head.b_k);
  return scale(1.0 / std::sqrt(static_cast<double>(head.w_q.cols())), matmul(q, transpose(k)));
}

HiddenState hidden_update(const HiddenState& prev, const std::vector<Mat>& scores,
                          double alpha_prime) {
  check_shape(prev.n_heads() == static_cast<int>(scores.size()),
              "hidden_update: head count mismatch");
  HiddenState next;
  next.per_head.reserve(scores.size());
  for (std::size_t h = 0; h < scores.size(); ++h) {
    check_shape(prev.per_head[h].same_shape(scores[h]), "hidden_update: shape mismatch");
    next.per_head.push_back(lerp(alpha_prime, prev.per_head[h], 1.0 - alpha_prime, scores[h]));
  }
  return next;
}

LayerResult mha_layer(const FeatureMap& x, const HiddenState& h_prev, const LayerParams& params) {
  check_layer(x, params);
  check_shape(h_prev.n_heads() == params.n_heads(), "hidden state head count mismatch");
  check_shape(h_prev.tokens() == x.rows(), "hidden state token count mismatch");

  std::vector<Mat> scores;
  scores.reserve(params.heads.size());
  for (const auto& head : params.heads) scores.push_back(head_scores(x, head));

  LayerResult out{FeatureMap(), hidden_update(h_prev, scores, params.alpha_prime), {}};

  Mat attn = Mat::zeros(x.rows(), x.cols());
  for (int h = 0; h < params.n_heads(); ++h) {
    const Mat& hs = out.h.per_head[static_cast<std::size_t>(h)];
    Mat p = params.causal ? softmax_rows_causal(hs) : softmax_rows(hs);
    const HeadParams& head = params.heads[static_cast<std::size_t>(h)];
    attn = add(attn, matmul(matmul(p, matmul(x, head.w_v)), head.w_o));
    out.attn_weights.push_back(std::move(p));
  }
  attn = add_row_broadcast(attn, params.b_o);

  out.x = params.use_internal_skip ? lerp(params.alpha, x, 1.0 - params.alpha, attn)
                                   : std::move(attn);
  return out;
}

FeatureMap baseline_sa_layer(const FeatureMap& x, const LayerParams& params) {
  check_layer(x, params);
  Mat out = Mat::zeros(x.rows(), x.cols());
  for (const auto& head : params.heads) {
    Mat q = add_row_broadcast(matmul(x, head.w_q), head.b_q);
    Mat k = add_row_broadcast(matmul(x, head.w_k), head.b_k);
    Mat s = scale(1.0 / std::sqrt(static_cast<double>(head.w_q.cols())), matmul(q, transpose(k)));
    Mat p = params.causal ? softmax_rows_causal(s) : softmax_rows(s);
    out = add(out, matmul(matmul(p, matmul(x, head.w_v)), head.w_o));
  }
  return add_row_broadcast(out, params.b_o);
}

HiddenState first_score_hidden(const FeatureMap& x, const LayerParams& layer0) {
  HiddenState h;
  h.per_head.reserve(layer0.heads.size());
  for (const auto& head : layer0.heads) h.per_head.push_back(head_scores(x, head));
  return h;
}

NetResult attn_only_net(const FeatureMap& x, const std::vector<LayerParams>& layers,
                        const HiddenState& h0) {
  if (layers.empty()) throw ConfigError("attn_only_net: no layers");
  const int d = layers.front().d();
  const int dk = layers.front().d_k();
  const int nh = layers.front().n_heads();
  for (const auto& l : layers) {
    if (l.d() != d || l.d_k() != dk || l.n_heads() != nh)
      throw ConfigError("attn_only_net: layers disagree on dimensions");
  }

  NetResult res;
  res.trace.features.push_back(x);
  res.trace.hidden.push_back(h0);
  FeatureMap cur = x;
  HiddenState h = h0;
  for (const auto& layer : layers) {
    LayerParams lp = layer;
    lp.alpha = 0.0;
    lp.use_internal_skip = false;
    LayerResult lr = mha_layer(cur, h, lp);
    cur = lr.x;
    h = lr.h;
    res.trace.features.push_back(cur);
    res.trace.hidden.push_back(h);
    res.trace.attn_weights.push_back(std::move(lr.attn_weights));
  }
  res.x = std::move(cur);
  return res;
}

// ---- tape mirrors ---------------------------------------------------------

Var head_scores_t(Tape& tape, Var x, const HeadVars& head, int d_k) {
  Var q = tape.add_row(tape.matmul(x, head.w_q), head.b_q);
  Var k = tape.add_row(tape.matmul(x, head.w_k), head.b_k);
  return tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d_k)));
}

LayerResultT mha_layer_t(Tape& tape, Var x, const std::vector<Var>& h_prev,
                         const LayerVars& layer) {
  LayerResultT out;
  out.h.reserve(layer.heads.size());
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    Var s = head_scores_t(tape, x, layer.heads[h], layer.d_k);
    out.h.push_back(tape.add_scaled(layer.alpha_prime, h_prev[h], 1.0 - layer.alpha_prime, s));
  }
  Var attn;
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    Var p = tape.softmax_rows(out.h[h], layer.causal);
    out.attn_weights.push_back(p);
    Var head_out =
        tape.matmul(tape.matmul(p, tape.matmul(x, layer.heads[h].w_v)), layer.heads[h].w_o);
    attn = attn.valid() ? tape.add(attn, head_out) : head_out;
  }
  attn = tape.add_row(attn, layer.b_o);
  out.x = layer.use_internal_skip ? tape.add_scaled(layer.alpha, x, 1.0 - layer.alpha, attn)
                                  : attn;
  return out;
}

void add_layer_params(ParamSet& params, const std::string& prefix, const LayerParams& layer) {
  for (int h = 0; h < layer.n_heads(); ++h) {
    const auto& hp = layer.heads[static_cast<std::size_t>(h)];
    const std::string base = prefix + ".h" + std::to_string(h) + ".";
    params.add(base + "w_q", hp.w_q);
    params.add(base + "w_k", hp.w_k);
    params.add(base + "b_q", hp.b_q.as_mat());
    params.add(base + "b_k", hp.b_k.as_mat());
    params.add(base + "w_v", hp.w_v);
    params.add(base + "w_o", hp.w_o);
  }
  params.add(prefix + ".b_o", layer.b_o.as_mat());
}

LayerVars bind_layer(const BoundParams& bound, const std::string& prefix,
                     const LayerParams& shape) {
  LayerVars lv;
  lv.alpha = shape.alpha;
  lv.alpha_prime = shape.alpha_prime;
  lv.causal = shape.causal;
  lv.use_internal_skip = shape.use_internal_skip;
  lv.d_k = shape.d_k();
  for (int h = 0; h < shape.n_heads(); ++h) {
    const std::string base = prefix + ".h" + std::to_string(h) + ".";
    HeadVars hv;
    hv.w_q = bound.at(base + "w_q");
    hv.w_k = bound.at(base + "w_k");
    hv.b_q = bound.at(base + "b_q");
    hv.b_k = bound.at(base + "b_k");
    hv.w_v = bound.at(base + "w_v");
    hv.w_o = bound.at(base + "w_o");
    lv.heads.push_back(hv);
  }
  lv.b_o = bound.at(prefix + ".b_o");
  return lv;
}

LayerParams extract_layer(const ParamSet& params, const std::string& prefix, int n_heads,
                          double alpha, double alpha_prime, bool causal,
                          bool use_internal_skip) {
  LayerParams lp;
  lp.alpha = alpha;
  lp.alpha_prime = alpha_prime;
  lp.causal = causal;
  lp.use_internal_skip = use_internal_skip;
  for (int h = 0; h < n_heads; ++h) {
    const std::string base = prefix + ".h" + std::to_string(h) + ".";
    HeadParams hp;
    hp.w_q = params.at(base + "w_q");
    hp.w_k = params.at(base + "w_k");
    hp.b_q = RowVec::from_mat(params.at(base + "b_q"));
    hp.b_k = RowVec::from_mat(params.at(base + "b_k"));
    hp.w_v = params.at(base + "w_v");
    hp.w_o = params.at(base + "w_o");
    lp.heads.push_back(std::move(hp));
  }
  lp.b_o = RowVec::from_mat(params.at(prefix + ".b_o"));
  return lp;
}

}  // namespace hopattn
