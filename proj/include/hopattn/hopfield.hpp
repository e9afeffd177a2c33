#pragma once

#include <cstdint>
#include <utility>

#include "hopattn/mat.hpp"

namespace hopattn {

// Bipartite dynamical state: visible x (dimension d) and hidden h
// (dimension w2.cols()).
struct MCHNState {
  RowVec visible;
  RowVec hidden;
};

// w1, w2: d x n_hidden, untied. alpha = 1 - dt/tau_v. alpha' parameterizes
// the hidden time constant as dt/tau_h = (1 - alpha') / alpha'.
struct MCHNParams {
  Mat w1;
  Mat w2;
  double alpha = 0.0;
  double alpha_prime = 0.0;

  double rho() const { return 1.0 - alpha; }          // dt / tau_v
  double rho_prime() const;                           // dt / tau_h; requires alpha' > 0
  static double alpha_from_rho(double rho) { return 1.0 - rho; }
  static double alpha_prime_from_rho_prime(double rho_prime) {
    return 1.0 / (1.0 + rho_prime);
  }
};

// Log-sum-exp over the hidden state and half squared norm of the visible.
std::pair<double, double> lagrangians(const MCHNState& state);

// f = softmax(h), g = x.
std::pair<RowVec, RowVec> activations(const MCHNState& state);

// Forward step on the visible, backward step on the hidden:
//   x' = alpha*x + (1-alpha)*softmax(h)*W1^T
//   h' = alpha'*h + (1-alpha')*(x'*W2)
MCHNState step_fb(const MCHNState& state, const MCHNParams& params);

// Forward step on both states (hidden built from the old visible):
//   x' = (1-rho)*x + rho*softmax(h)*W1^T
//   h' = (1-rho')*h + rho'*(x*W2)
// Requires alpha' > 0 (rho' must be finite).
MCHNState step_ff(const MCHNState& state, const MCHNParams& params);

// Builds the attention layer equivalent of the Hopfield dynamics
// (W1^T = V, W2^T = K W_Q^T, with the 1/sqrt(d_k) score scaling folded
// into W2), runs one step_fb per token from the adiabatic hidden state,
// and returns the max abs difference against the attention layer output.
// Requires params.alpha_prime == 0; params.w1/w2 are ignored and rebuilt.
// The attention weights are drawn from `seed`.
double attention_equivalence_oracle(const Mat& x_tokens, const MCHNParams& params,
                                    std::uint64_t seed);

}  // namespace hopattn
