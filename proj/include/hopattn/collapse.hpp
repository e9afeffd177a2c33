#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hopattn/attention.hpp"

namespace hopattn {

// Coefficient convention for the residual-decay bounds. The appendix form
// carries 4H/sqrt(d_k) per layer; the main-text form carries 8H/sqrt(d_k).
enum class BoundVariant { Appendix, MainText };

struct BoundConstants {
  int n_heads = 1;
  int d_k = 1;
  int depth = 0;  // L
  double alpha_prime = 0.0;
  // c1 = max_l max_h ||W_VO,h||_{1,inf} * ||W_QK,h||_1
  double c1 = 0.0;
  // c2 = max_l max_h ||W_VO,h||_{1,inf} * ||A_h^(l-1)||_1 where A is the
  // accumulated score matrix in pre-scaling units (sqrt(d_k) * H_(l-1,h)),
  // gathered from a forward trace
  double c2 = 0.0;

  double r() const;  // 8H / sqrt(d_k)
};

// ||Res(x)||_{1,inf} / ||x||_{1,inf}. Throws DegenerateInputError when x
// is all zero.
double residual_ratio(const FeatureMap& x);

// (rC)^((3^L - 1)/2) * res^(3^L), evaluated in log space. C defaults to
// constants.c1; the coefficient base r follows the variant so the
// network_bound identity at alpha' = 0 holds exactly.
double theorem1_bound(double res_norm_in, const BoundConstants& constants,
                      BoundVariant variant = BoundVariant::Appendix);
double theorem1_bound(double res_norm_in, const BoundConstants& constants, double c,
                      BoundVariant variant);
double theorem1_log_bound(double res_norm_in, const BoundConstants& constants, double c,
                          BoundVariant variant);

// Single-layer residual bound (appendix lemma; n_heads = 1 gives the
// single-head form):
//   (4 H (1-a') c1 / sqrt(d_k)) res^3 + (4 H a' c2 / sqrt(d_k)) res
double single_layer_bound(double res_norm_in, double c1, double c2, int n_heads, int d_k,
                          double alpha_prime);

struct NetworkBound {
  double value = 0.0;
  int argmax_m = 0;
  double log_value = 0.0;  // -inf when value is 0
};

// max over m = 0..L of
//   (rv (1-a') C1)^((3^m-1)/2) (rv a' C2)^(3^m (L-m)) res^(3^m)
// with rv = 4H/sqrt(d_k) (appendix) or 8H/sqrt(d_k) (main text).
NetworkBound network_bound(double res_norm_in, const BoundConstants& constants,
                           BoundVariant variant = BoundVariant::Appendix);

struct AssumptionCheck {
  bool ok = false;
  double max_spread = 0.0;  // max_i (row max - row min)
};

// Row-spread check against the 1.256 constant of the bound derivation.
AssumptionCheck assumption_check(const Mat& pre_softmax);

// The spread-relevant part of a layer's pre-softmax matrix for one head:
//   (1-a')/sqrt(d_k) * R W_QK R^T + a' * H_prev
// (row-constant score terms drop out of the row-wise softmax).
Mat lemma_spread_matrix(const FeatureMap& x, const HeadParams& head, const Mat& h_prev,
                        double alpha_prime);

BoundConstants gather_bound_constants(const std::vector<LayerParams>& layers,
                                      const NetTrace& trace);

struct CosineStats {
  std::vector<double> bin_center;  // 200 bins over [-1, 1]
  std::vector<double> density;    // normalized so the histogram integrates to 1
  std::vector<double> sims;       // all pairwise similarities
  double mode = 0.0;              // densest bin center
  double mean = 0.0;
  int pairs = 0;
  int zero_rows = 0;

  double fraction_above(double theta) const;
};

// Pairwise cosine similarities between token rows; zero rows are excluded
// and counted. Throws DegenerateInputError when every row is zero, and
// ShapeError for fewer than 2 tokens.
CosineStats cosine_similarity_stats(const FeatureMap& x);

struct EntropyStats {
  std::vector<double> per_row;  // -sum_j p ln p, with 0 ln 0 = 0
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Row entropies of a row-stochastic matrix. Rows must sum to 1 within 1e-8
// and be non-negative; otherwise throws ContractError.
EntropyStats attention_entropy_stats(const Mat& p);

struct LayerDiag {
  int layer = 0;  // 1-based
  double residual_norm = 0.0;
  double output_norm = 0.0;
  double ratio = 0.0;
  double lemma_bound = 0.0;     // predicted res_l from measured res_(l-1)
  double theorem1_value = 0.0;  // cumulative double-exp bound at this depth
  double network_value = 0.0;   // cumulative Theorem-3 style bound
  int network_argmax_m = 0;
  bool assumption_ok = false;
  double assumption_spread = 0.0;
  double mean_entropy = 0.0;
  double cosine_mode = 0.0;
  double cosine_frac_above_099 = 0.0;
};

struct CollapseReport {
  std::string model_kind;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double alpha_prime = 0.0;
  int depth = 0;
  BoundConstants constants;
  double input_residual_norm = 0.0;
  std::vector<LayerDiag> layers;
};

// Runs an attention-only forward at the given input and fills every
// per-layer diagnostic plus the theoretical bounds.
CollapseReport collapse_report(const FeatureMap& x_in, const std::vector<LayerParams>& layers,
                               const HiddenState& h0,
                               BoundVariant variant = BoundVariant::Appendix);

}  // namespace hopattn
