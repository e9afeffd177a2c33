#pragma once

#include <random>
#include <string>
#include <vector>

#include "hopattn/mat.hpp"
#include "hopattn/tape.hpp"

namespace hopattn {

// Token embeddings, one row per token.
using FeatureMap = Mat;

struct HeadParams {
  Mat w_q, w_k;     // d x d_k
  RowVec b_q, b_k;  // d_k
  Mat w_v;          // d x d_k
  Mat w_o;          // d_k x d
};

struct LayerParams {
  std::vector<HeadParams> heads;
  RowVec b_o;  // d
  double alpha = 0.0;
  double alpha_prime = 0.0;
  bool causal = false;
  bool use_internal_skip = true;

  int n_heads() const { return static_cast<int>(heads.size()); }
  int d() const { return heads.empty() ? 0 : heads.front().w_q.rows(); }
  int d_k() const { return heads.empty() ? 0 : heads.front().w_q.cols(); }
};

// Per-head accumulated attention-score matrices threaded across layers.
struct HiddenState {
  std::vector<Mat> per_head;  // each T x T

  static HiddenState zeros(int n_heads, int tokens);
  int n_heads() const { return static_cast<int>(per_head.size()); }
  int tokens() const { return per_head.empty() ? 0 : per_head.front().rows(); }
};

LayerParams init_layer(int d, int d_k, int n_heads, double alpha, double alpha_prime,
                       double stddev, std::mt19937_64& rng, bool causal = false,
                       bool use_internal_skip = true);

// S = (X W_q + 1 b_q^T)(X W_k + 1 b_k^T)^T / sqrt(d_k)
Mat head_scores(const FeatureMap& x, const HeadParams& head);

// Per head: H = alpha' * H_prev + (1 - alpha') * S
HiddenState hidden_update(const HiddenState& prev, const std::vector<Mat>& scores,
                          double alpha_prime);

struct LayerResult {
  FeatureMap x;
  HiddenState h;
  std::vector<Mat> attn_weights;  // per-head row-stochastic P
};

// Attention layer with cross-layer hidden state. Scores are EMA-accumulated
// before the softmax; the causal mask is applied at softmax time while the
// hidden state keeps raw scores.
LayerResult mha_layer(const FeatureMap& x, const HiddenState& h_prev, const LayerParams& params);

// Standard multi-head self-attention, written out directly (independent of
// the mha_layer path; the two must agree when alpha = alpha' = 0).
FeatureMap baseline_sa_layer(const FeatureMap& x, const LayerParams& params);

// Incoming hidden state at network entry.
enum class HiddenInit { Zero, FirstScore };

// h0 choice that makes layer 1 see its scores un-attenuated (H_1 = S_1).
HiddenState first_score_hidden(const FeatureMap& x, const LayerParams& layer0);

struct NetTrace {
  std::vector<FeatureMap> features;           // [0] input, [l] after layer l
  std::vector<HiddenState> hidden;            // [0] = h0, [l] after layer l
  std::vector<std::vector<Mat>> attn_weights; // [l][h]
};

struct NetResult {
  FeatureMap x;
  NetTrace trace;
};

// Stack of mha_layers with no skip (alpha forced to 0, internal skip off),
// threading the hidden state through the stack.
NetResult attn_only_net(const FeatureMap& x, const std::vector<LayerParams>& layers,
                        const HiddenState& h0);

// ---- tape (trainable) mirrors -------------------------------------------

struct HeadVars {
  Var w_q, w_k, b_q, b_k, w_v, w_o;
};

struct LayerVars {
  std::vector<HeadVars> heads;
  Var b_o;
  double alpha = 0.0;
  double alpha_prime = 0.0;
  bool causal = false;
  bool use_internal_skip = true;
  int d_k = 0;
};

struct LayerResultT {
  Var x;
  std::vector<Var> h;
  std::vector<Var> attn_weights;
};

Var head_scores_t(Tape& tape, Var x, const HeadVars& head, int d_k);
LayerResultT mha_layer_t(Tape& tape, Var x, const std::vector<Var>& h_prev,
                         const LayerVars& layer);

// ParamSet flattening. Head k of a layer registers under
// "<prefix>.h<k>.{w_q,w_k,b_q,b_k,w_v,w_o}"; the output bias under
// "<prefix>.b_o".
void add_layer_params(ParamSet& params, const std::string& prefix, const LayerParams& layer);
LayerVars bind_layer(const BoundParams& bound, const std::string& prefix,
                     const LayerParams& shape);
LayerParams extract_layer(const ParamSet& params, const std::string& prefix, int n_heads,
                          double alpha, double alpha_prime, bool causal,
                          bool use_internal_skip);

}  // namespace hopattn
