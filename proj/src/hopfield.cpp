#include "hopattn/hopfield.hpp"

#include <cmath>
#include <stdexcept>

#include "hopattn/attention.hpp"

namespace hopattn {

double MCHNParams::rho_prime() const {
  if (!(alpha_prime > 0.0))
    throw std::invalid_argument("rho_prime undefined at alpha' = 0 (adiabatic limit)");
  return (1.0 - alpha_prime) / alpha_prime;
}

std::pair<double, double> lagrangians(const MCHNState& state) {
  double l_v = 0.0;
  for (int i = 0; i < state.visible.cols(); ++i) l_v += state.visible[i] * state.visible[i];
  return {logsumexp(state.hidden), 0.5 * l_v};
}

std::pair<RowVec, RowVec> activations(const MCHNState& state) {
  return {softmax(state.hidden), state.visible};
}

namespace {

void check_params(const MCHNState& state, const MCHNParams& params) {
  check_shape(params.w1.rows() == state.visible.cols(), "w1 height must match visible dim");
  check_shape(params.w2.rows() == state.visible.cols(), "w2 height must match visible dim");
  check_shape(params.w1.cols() == state.hidden.cols(), "w1 width must match hidden dim");
  check_shape(params.w2.cols() == state.hidden.cols(), "w2 width must match hidden dim");
}

RowVec visible_update(const RowVec& x, const RowVec& h, const Mat& w1, double keep) {
  Mat fw = matmul(softmax(h).as_mat(), transpose(w1));  // 1 x d
  Mat next = lerp(keep, x.as_mat(), 1.0 - keep, fw);
  return RowVec::from_mat(next);
}

RowVec hidden_update_from(const RowVec& x, const RowVec& h, const Mat& w2, double keep) {
  Mat gw = matmul(x.as_mat(), w2);  // 1 x n_hidden
  Mat next = lerp(keep, h.as_mat(), 1.0 - keep, gw);
  return RowVec::from_mat(next);
}

}  // namespace

MCHNState step_fb(const MCHNState& state, const MCHNParams& params) {
  check_params(state, params);
  MCHNState next;
  next.visible = visible_update(state.visible, state.hidden, params.w1, params.alpha);
  next.hidden = hidden_update_from(next.visible, state.hidden, params.w2, params.alpha_prime);
  return next;
}

MCHNState step_ff(const MCHNState& state, const MCHNParams& params) {
  check_params(state, params);
  const double rho = params.rho();
  const double rho_prime = params.rho_prime();
  MCHNState next;
  next.visible = visible_update(state.visible, state.hidden, params.w1, 1.0 - rho);
  next.hidden = hidden_update_from(state.visible, state.hidden, params.w2, 1.0 - rho_prime);
  return next;
}

double attention_equivalence_oracle(const Mat& x_tokens, const MCHNParams& params,
                                    std::uint64_t seed) {
  if (params.alpha_prime != 0.0)
    throw std::invalid_argument("equivalence oracle requires alpha' = 0");

  const int t = x_tokens.rows();
  const int d = x_tokens.cols();
  std::mt19937_64 rng(seed);
  LayerParams layer = init_layer(d, d, /*n_heads=*/1, params.alpha, /*alpha_prime=*/0.0,
                                 /*stddev=*/0.5, rng);
  const HeadParams& head = layer.heads.front();

  // The single-step reference: the attention layer itself.
  LayerResult ref = mha_layer(x_tokens, HiddenState::zeros(1, t), layer);

  // Hopfield side. W1^T = X W_v W_o, W2 = W_q K^T / sqrt(d_k); the hidden
  // state of each token starts at its adiabatic value x W2 so that one
  // forward-backward step reproduces the attention update.
  Mat w1 = transpose(matmul(matmul(x_tokens, head.w_v), head.w_o));  // d x T
  Mat k = matmul(x_tokens, head.w_k);  // T x d_k (zero key bias at init)
  Mat w2 = scale(1.0 / std::sqrt(static_cast<double>(head.w_q.cols())),
                 matmul(head.w_q, transpose(k)));  // d x T

  MCHNParams hp;
  hp.w1 = w1;
  hp.w2 = w2;
  hp.alpha = params.alpha;
  hp.alpha_prime = 0.0;

  double max_diff = 0.0;
  for (int i = 0; i < t; ++i) {
    MCHNState s;
    s.visible = RowVec(d);
    for (int j = 0; j < d; ++j) s.visible[j] = x_tokens(i, j);
    s.hidden = RowVec::from_mat(matmul(s.visible.as_mat(), hp.w2));
    MCHNState next = step_fb(s, hp);
    for (int j = 0; j < d; ++j) {
      max_diff = std::max(max_diff, std::fabs(next.visible[j] - ref.x(i, j)));
    }
  }
  return max_diff;
}

}  // namespace hopattn
