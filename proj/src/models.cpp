#include "hopattn/models.hpp"

#include <cmath>

namespace hopattn {

namespace {
constexpr double kLnEps = 1e-5;
}

Mat layer_norm_rows(const Mat& x, const RowVec& gamma, const RowVec& beta) {
  check_shape(gamma.cols() == x.cols() && beta.cols() == x.cols(),
              "layer_norm_rows: gamma/beta width mismatch");
  const int d = x.cols();
  Mat out(x.rows(), d);
  for (int i = 0; i < x.rows(); ++i) {
    const double* r = x.row_ptr(i);
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += r[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (int j = 0; j < d; ++j) out(i, j) = gamma[j] * ((r[j] - mu) * inv) + beta[j];
  }
  return out;
}

Mat gelu(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.data()[i];
    out.data()[i] = 0.5 * xi * (1.0 + std::erf(xi * 0.70710678118654752440));
  }
  return out;
}

BlockResult transformer_block(const FeatureMap& x, const HiddenState& h_prev,
                              const BlockParams& params) {
  Mat normed = layer_norm_rows(x, params.ln1_g, params.ln1_b);
  LayerResult attn = mha_layer(normed, h_prev, params.attn);
  Mat x1 = add(x, attn.x);
  Mat mlp_in = layer_norm_rows(x1, params.ln2_g, params.ln2_b);
  Mat hidden = gelu(add_row_broadcast(matmul(mlp_in, params.w1), params.b1));
  Mat x2 = add(x1, add_row_broadcast(matmul(hidden, params.w2), params.b2));
  return BlockResult{std::move(x2), std::move(attn.h), std::move(attn.attn_weights)};
}

BlockParams init_block(int d, int d_k, int n_heads, int mlp_hidden, double alpha,
                       double alpha_prime, double stddev, std::mt19937_64& rng, bool causal) {
  BlockParams b;
  b.attn = init_layer(d, d_k, n_heads, alpha, alpha_prime, stddev, rng, causal,
                      /*use_internal_skip=*/true);
  b.ln1_g = RowVec(d);
  b.ln1_b = RowVec(d);
  b.ln2_g = RowVec(d);
  b.ln2_b = RowVec(d);
  for (int j = 0; j < d; ++j) b.ln1_g[j] = b.ln2_g[j] = 1.0;
  b.w1 = Mat::gaussian(d, mlp_hidden, stddev, rng);
  b.b1 = RowVec(mlp_hidden);
  b.w2 = Mat::gaussian(mlp_hidden, d, stddev, rng);
  b.b2 = RowVec(d);
  return b;
}

void add_block_params(ParamSet& params, const std::string& prefix, const BlockParams& block) {
  add_layer_params(params, prefix + ".attn", block.attn);
  params.add(prefix + ".ln1_g", block.ln1_g.as_mat());
  params.add(prefix + ".ln1_b", block.ln1_b.as_mat());
  params.add(prefix + ".ln2_g", block.ln2_g.as_mat());
  params.add(prefix + ".ln2_b", block.ln2_b.as_mat());
  params.add(prefix + ".mlp_w1", block.w1);
  params.add(prefix + ".mlp_b1", block.b1.as_mat());
  params.add(prefix + ".mlp_w2", block.w2);
  params.add(prefix + ".mlp_b2", block.b2.as_mat());
}

BlockVars bind_block(const BoundParams& bound, const std::string& prefix,
                     const BlockParams& shape) {
  BlockVars bv;
  bv.attn = bind_layer(bound, prefix + ".attn", shape.attn);
  bv.ln1_g = bound.at(prefix + ".ln1_g");
  bv.ln1_b = bound.at(prefix + ".ln1_b");
  bv.ln2_g = bound.at(prefix + ".ln2_g");
  bv.ln2_b = bound.at(prefix + ".ln2_b");
  bv.w1 = bound.at(prefix + ".mlp_w1");
  bv.b1 = bound.at(prefix + ".mlp_b1");
  bv.w2 = bound.at(prefix + ".mlp_w2");
  bv.b2 = bound.at(prefix + ".mlp_b2");
  return bv;
}

BlockResultT transformer_block_t(Tape& tape, Var x, const std::vector<Var>& h_prev,
                                 const BlockVars& block) {
  Var normed = tape.layer_norm_rows(x, block.ln1_g, block.ln1_b);
  LayerResultT attn = mha_layer_t(tape, normed, h_prev, block.attn);
  Var x1 = tape.add(x, attn.x);
  Var mlp_in = tape.layer_norm_rows(x1, block.ln2_g, block.ln2_b);
  Var hidden = tape.gelu(tape.add_row(tape.matmul(mlp_in, block.w1), block.b1));
  Var x2 = tape.add(x1, tape.add_row(tape.matmul(hidden, block.w2), block.b2));
  return BlockResultT{x2, std::move(attn.h), std::move(attn.attn_weights)};
}

std::string to_string(AttentionKind k) {
  return k == AttentionKind::Mha ? "mha" : "baseline";
}

AttentionKind attention_kind_from(const std::string& s) {
  if (s == "mha") return AttentionKind::Mha;
  if (s == "baseline") return AttentionKind::Baseline;
  throw ConfigError("unknown attention kind: " + s);
}

void ModelConfig::validate() const {
  if (d < 1 || d_k < 1 || n_heads < 1 || depth < 1) throw ConfigError("model dims must be positive");
  if (alpha < 0.0 || alpha > 1.0 || alpha_prime < 0.0 || alpha_prime > 1.0)
    throw ConfigError("alpha and alpha' must lie in [0, 1]");
  if (kind == ModelKind::Encoder) {
    if (patch < 1 || img < patch || img % patch != 0)
      throw ConfigError("patch size must divide the image size");
    if (classes < 2) throw ConfigError("encoder needs at least 2 classes");
  } else {
    if (vocab < 2) throw ConfigError("decoder needs a vocabulary of at least 2");
    if (context < 1) throw ConfigError("decoder context must be positive");
  }
  if (!attn_only && mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
  if (hidden_init == HiddenInit::FirstScore && !attn_only)
    throw ConfigError("first_score hidden init is supported for attention-only stacks");
}

namespace {

BlockParams model_block_shape(const ModelConfig& cfg, std::mt19937_64& rng) {
  return init_block(cfg.d, cfg.d_k, cfg.n_heads, cfg.mlp_hidden, cfg.eff_alpha(),
                    cfg.eff_alpha_prime(), cfg.init_std, rng,
                    cfg.kind == ModelKind::Decoder);
}

LayerParams model_layer_shape(const ModelConfig& cfg, std::mt19937_64& rng) {
  // attention-only stacks: the baseline kind is a bare SA layer, the mha
  // kind keeps its internal alpha-skip
  return init_layer(cfg.d, cfg.d_k, cfg.n_heads, cfg.eff_alpha(), cfg.eff_alpha_prime(),
                    cfg.init_std, rng, cfg.kind == ModelKind::Decoder,
                    /*use_internal_skip=*/cfg.attention == AttentionKind::Mha);
}

void add_backbone(ParamSet& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string prefix = "block" + std::to_string(l);
    if (cfg.attn_only) {
      add_layer_params(ps, prefix + ".attn", model_layer_shape(cfg, rng));
    } else {
      add_block_params(ps, prefix, model_block_shape(cfg, rng));
    }
  }
}

// Shape templates passed to bind_*: only meta fields and head counts are
// read, so value matrices can stay empty.
LayerParams layer_meta(const ModelConfig& cfg) {
  LayerParams lp;
  lp.alpha = cfg.eff_alpha();
  lp.alpha_prime = cfg.eff_alpha_prime();
  lp.causal = cfg.kind == ModelKind::Decoder;
  lp.use_internal_skip = cfg.attn_only ? cfg.attention == AttentionKind::Mha : true;
  for (int h = 0; h < cfg.n_heads; ++h) {
    HeadParams hp;
    hp.w_q = Mat(cfg.d, cfg.d_k);
    lp.heads.push_back(std::move(hp));
  }
  return lp;
}

BlockParams block_meta(const ModelConfig& cfg) {
  BlockParams bp;
  bp.attn = layer_meta(cfg);
  return bp;
}

// Runs the backbone over embedded tokens; shared by encoder and decoder.
Var run_backbone(Tape& tape, const ModelConfig& cfg, const BoundParams& bound, Var x,
                 ForwardTrace* trace) {
  const int t = tape.value(x).rows();
  std::vector<Var> h;
  for (int i = 0; i < cfg.n_heads; ++i) h.push_back(tape.input(Mat::zeros(t, t)));
  if (cfg.hidden_init == HiddenInit::FirstScore && cfg.depth > 0) {
    LayerVars first = bind_layer(bound, "block0.attn", layer_meta(cfg));
    first.d_k = cfg.d_k;
    for (int i = 0; i < cfg.n_heads; ++i)
      h[static_cast<std::size_t>(i)] =
          head_scores_t(tape, x, first.heads[static_cast<std::size_t>(i)], cfg.d_k);
  }
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string prefix = "block" + std::to_string(l);
    std::vector<Var> attn_w;
    if (cfg.attn_only) {
      LayerVars lv = bind_layer(bound, prefix + ".attn", layer_meta(cfg));
      lv.d_k = cfg.d_k;
      LayerResultT r = mha_layer_t(tape, x, h, lv);
      x = r.x;
      h = std::move(r.h);
      attn_w = std::move(r.attn_weights);
    } else {
      BlockVars bv = bind_block(bound, prefix, block_meta(cfg));
      bv.attn.d_k = cfg.d_k;
      BlockResultT r = transformer_block_t(tape, x, h, bv);
      x = r.x;
      h = std::move(r.h);
      attn_w = std::move(r.attn_weights);
    }
    if (trace != nullptr) {
      trace->features.push_back(tape.value(x));
      std::vector<Mat> weights;
      for (Var w : attn_w) weights.push_back(tape.value(w));
      trace->attn.push_back(std::move(weights));
    }
  }
  return x;
}

}  // namespace

Model build_encoder(const ModelConfig& cfg_in) {
  ModelConfig cfg = cfg_in;
  cfg.kind = ModelKind::Encoder;
  cfg.validate();
  std::mt19937_64 rng(cfg.init_seed);
  Model m;
  m.cfg = cfg;
  m.params.add("embed.patch_w", Mat::gaussian(cfg.patch * cfg.patch, cfg.d, cfg.init_std, rng));
  m.params.add("embed.patch_b", Mat(1, cfg.d));
  m.params.add("embed.cls", Mat::gaussian(1, cfg.d, cfg.init_std, rng));
  m.params.add("embed.pos", Mat::gaussian(cfg.tokens(), cfg.d, cfg.init_std, rng));
  add_backbone(m.params, cfg, rng);
  if (!cfg.attn_only) {
    Mat g(1, cfg.d), b(1, cfg.d);
    for (int j = 0; j < cfg.d; ++j) g(0, j) = 1.0;
    m.params.add("final_ln.g", g);
    m.params.add("final_ln.b", b);
  }
  m.params.add("head.w", Mat::gaussian(cfg.d, cfg.classes, cfg.init_std, rng));
  m.params.add("head.b", Mat(1, cfg.classes));
  return m;
}

Model build_decoder(const ModelConfig& cfg_in) {
  ModelConfig cfg = cfg_in;
  cfg.kind = ModelKind::Decoder;
  cfg.validate();
  std::mt19937_64 rng(cfg.init_seed);
  Model m;
  m.cfg = cfg;
  m.params.add("embed.tok", Mat::gaussian(cfg.vocab, cfg.d, cfg.init_std, rng));
  m.params.add("embed.pos", Mat::gaussian(cfg.context, cfg.d, cfg.init_std, rng));
  add_backbone(m.params, cfg, rng);
  if (!cfg.attn_only) {
    Mat g(1, cfg.d), b(1, cfg.d);
    for (int j = 0; j < cfg.d; ++j) g(0, j) = 1.0;
    m.params.add("final_ln.g", g);
    m.params.add("final_ln.b", b);
  }
  m.params.add("head.w", Mat::gaussian(cfg.d, cfg.vocab, cfg.init_std, rng));
  m.params.add("head.b", Mat(1, cfg.vocab));
  return m;
}

Model build_model(const ModelConfig& cfg) {
  return cfg.kind == ModelKind::Encoder ? build_encoder(cfg) : build_decoder(cfg);
}

Var encoder_logits_t(Tape& tape, const ModelConfig& cfg, const BoundParams& bound,
                     const std::vector<double>& image, ForwardTrace* trace) {
  const int px = cfg.img;
  if (static_cast<int>(image.size()) != px * px)
    throw ShapeError("encoder_logits: image size does not match config");
  const int per_side = px / cfg.patch;
  Mat patches(cfg.n_patches(), cfg.patch * cfg.patch);
  for (int pi = 0; pi < per_side; ++pi) {
    for (int pj = 0; pj < per_side; ++pj) {
      const int row = pi * per_side + pj;
      int c = 0;
      for (int di = 0; di < cfg.patch; ++di) {
        for (int dj = 0; dj < cfg.patch; ++dj) {
          patches(row, c++) =
              image[static_cast<std::size_t>((pi * cfg.patch + di) * px + pj * cfg.patch + dj)];
        }
      }
    }
  }
  Var emb = tape.add_row(tape.matmul(tape.input(std::move(patches)), bound.at("embed.patch_w")),
                         bound.at("embed.patch_b"));
  Var x = tape.concat_rows(bound.at("embed.cls"), emb);
  x = tape.add(x, bound.at("embed.pos"));
  x = run_backbone(tape, cfg, bound, x, trace);
  Var cls = tape.slice_rows(x, 0, 1);
  if (!cfg.attn_only) cls = tape.layer_norm_rows(cls, bound.at("final_ln.g"), bound.at("final_ln.b"));
  return tape.add_row(tape.matmul(cls, bound.at("head.w")), bound.at("head.b"));
}

Var decoder_logits_t(Tape& tape, const ModelConfig& cfg, const BoundParams& bound,
                     const std::vector<int>& tokens, ForwardTrace* trace) {
  if (tokens.empty() || static_cast<int>(tokens.size()) > cfg.context)
    throw ShapeError("decoder_logits: sequence length must be in [1, context]");
  std::vector<int> pos_ids(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) pos_ids[i] = static_cast<int>(i);
  Var x = tape.add(tape.gather_rows(bound.at("embed.tok"), tokens),
                   tape.gather_rows(bound.at("embed.pos"), pos_ids));
  x = run_backbone(tape, cfg, bound, x, trace);
  if (!cfg.attn_only) x = tape.layer_norm_rows(x, bound.at("final_ln.g"), bound.at("final_ln.b"));
  return tape.add_row(tape.matmul(x, bound.at("head.w")), bound.at("head.b"));
}

}  // namespace hopattn
