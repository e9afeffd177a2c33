#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hopattn/attention.hpp"

namespace hopattn {

Mat layer_norm_rows(const Mat& x, const RowVec& gamma, const RowVec& beta);
Mat gelu(const Mat& x);

// Pre-norm transformer block. The attention sub-block applies the MHA
// internal alpha-skip to the normalized input; the hidden state threads
// through untouched by LN and MLP.
struct BlockParams {
  LayerParams attn;
  RowVec ln1_g, ln1_b, ln2_g, ln2_b;
  Mat w1;      // d x mlp_hidden
  RowVec b1;
  Mat w2;      // mlp_hidden x d
  RowVec b2;
};

struct BlockResult {
  FeatureMap x;
  HiddenState h;
  std::vector<Mat> attn_weights;
};

BlockResult transformer_block(const FeatureMap& x, const HiddenState& h_prev,
                              const BlockParams& params);

BlockParams init_block(int d, int d_k, int n_heads, int mlp_hidden, double alpha,
                       double alpha_prime, double stddev, std::mt19937_64& rng, bool causal);

void add_block_params(ParamSet& params, const std::string& prefix, const BlockParams& block);

struct BlockVars {
  LayerVars attn;
  Var ln1_g, ln1_b, ln2_g, ln2_b, w1, b1, w2, b2;
};

BlockVars bind_block(const BoundParams& bound, const std::string& prefix,
                     const BlockParams& shape);

struct BlockResultT {
  Var x;
  std::vector<Var> h;
  std::vector<Var> attn_weights;
};

BlockResultT transformer_block_t(Tape& tape, Var x, const std::vector<Var>& h_prev,
                                 const BlockVars& block);

enum class AttentionKind { Baseline, Mha };
enum class ModelKind { Encoder, Decoder };

std::string to_string(AttentionKind k);
AttentionKind attention_kind_from(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::Encoder;
  AttentionKind attention = AttentionKind::Baseline;
  double alpha = 0.5;
  double alpha_prime = 0.5;
  int d = 32;
  int d_k = 8;
  int n_heads = 4;
  int depth = 2;
  int mlp_hidden = 64;
  bool attn_only = false;  // bare attention stack: no LN, MLP or block residual
  HiddenInit hidden_init = HiddenInit::Zero;
  // encoder
  int img = 8;
  int patch = 4;
  int classes = 4;
  // decoder
  int vocab = 256;
  int context = 16;
  std::uint64_t init_seed = 1;
  double init_std = 0.02;

  int n_patches() const { return (img / patch) * (img / patch); }
  int tokens() const { return kind == ModelKind::Encoder ? n_patches() + 1 : context; }
  double eff_alpha() const { return attention == AttentionKind::Mha ? alpha : 0.0; }
  double eff_alpha_prime() const { return attention == AttentionKind::Mha ? alpha_prime : 0.0; }
  void validate() const;  // throws ConfigError
};

struct Model {
  ModelConfig cfg;
  ParamSet params;
};

Model build_encoder(const ModelConfig& cfg);
Model build_decoder(const ModelConfig& cfg);
Model build_model(const ModelConfig& cfg);

// Per-block token features and attention weights captured during a forward.
struct ForwardTrace {
  std::vector<Mat> features;
  std::vector<std::vector<Mat>> attn;
};

// Logits var for one 8-bit-gray image flattened row-major (img*img values);
// shape 1 x classes.
Var encoder_logits_t(Tape& tape, const ModelConfig& cfg, const BoundParams& bound,
                     const std::vector<double>& image, ForwardTrace* trace = nullptr);

// Next-token logits for a token sequence; shape len x vocab, len <= context.
Var decoder_logits_t(Tape& tape, const ModelConfig& cfg, const BoundParams& bound,
                     const std::vector<int>& tokens, ForwardTrace* trace = nullptr);

}  // namespace hopattn
