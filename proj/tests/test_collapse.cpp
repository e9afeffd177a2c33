#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hopattn/collapse.hpp"

using namespace hopattn;

TEST_CASE("residual_ratio") {
  // rank-one input: ratio 0
  Mat rank_one = add_row_broadcast(Mat::zeros(3, 2), RowVec{5, 7});
  CHECK(residual_ratio(rank_one) == 0.0);

  // identity: Res = [[.5,-.5],[-.5,.5]], both norms equal, ratio 1
  CHECK(residual_ratio(Mat::identity(2)) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(residual_ratio(Mat::zeros(2, 2)), DegenerateInputError);

  // invariance under rank-one shifts: Res(X + 1 y^T) == Res(X)
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    Mat x = Mat::gaussian(5, 4, 1.0, rng);
    RowVec y(4);
    std::normal_distribution<double> d;
    for (int j = 0; j < 4; ++j) y[j] = d(rng);
    Mat shifted = add_row_broadcast(x, y);
    Mat r0 = residual(x).r;
    Mat r1 = residual(shifted).r;
    double diff = 0.0;
    for (std::size_t i = 0; i < r0.size(); ++i)
      diff = std::max(diff, std::fabs(r0.data()[i] - r1.data()[i]));
    CHECK(diff <= 1e-12);
  }
}

TEST_CASE("theorem1_bound") {
  BoundConstants c;
  c.n_heads = 1;
  c.d_k = 1;
  c.depth = 2;
  c.c1 = 1.0;

  CHECK(theorem1_bound(0.0, c) == 0.0);

  c.depth = 0;
  CHECK(theorem1_bound(0.37, c) == doctest::Approx(0.37).epsilon(1e-14));

  // rC = 0.5, res = 0.5, L = 2 -> 0.5^4 * 0.5^9 = 2^-13
  c.depth = 2;
  c.c1 = 0.125;  // appendix base: 4*1/1 = 4, so 4*0.125 = 0.5
  CHECK(theorem1_bound(0.5, c) == doctest::Approx(std::pow(2.0, -13)).epsilon(1e-12));

  // monotone non-decreasing in the input residual norm
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.5);
  BoundConstants cm;
  cm.n_heads = 3;
  cm.d_k = 16;
  cm.depth = 3;
  cm.c1 = 0.8;
  for (int t = 0; t < 50; ++t) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    CHECK(theorem1_bound(a, cm) <= theorem1_bound(b, cm) + 1e-15);
  }
}

TEST_CASE("single_layer_bound") {
  // alpha' = 0: cubic term only
  CHECK(single_layer_bound(0.5, 2.0, 3.0, 2, 4, 0.0) ==
        doctest::Approx(4.0 * 2 * 2.0 / 2.0 * 0.125).epsilon(1e-14));
  // alpha' = 1: linear term only
  CHECK(single_layer_bound(0.5, 2.0, 3.0, 2, 4, 1.0) ==
        doctest::Approx(4.0 * 2 * 3.0 / 2.0 * 0.5).epsilon(1e-14));
  // H=1, d_k=1, c1=c2=1, alpha'=0.5, res=0.1 -> 0.202
  CHECK(single_layer_bound(0.1, 1.0, 1.0, 1, 1, 0.5) == doctest::Approx(0.202).epsilon(1e-14));
}

TEST_CASE("network_bound structure") {
  // alpha' = 0: only the m = L term survives and equals theorem1 with C = c1
  for (BoundVariant v : {BoundVariant::Appendix, BoundVariant::MainText}) {
    BoundConstants c;
    c.n_heads = 2;
    c.d_k = 9;
    c.depth = 4;
    c.alpha_prime = 0.0;
    c.c1 = 0.7;
    c.c2 = 1.3;
    NetworkBound nb = network_bound(0.4, c, v);
    CHECK(nb.argmax_m == 4);
    const double t1 = theorem1_log_bound(0.4, c, c.c1, v);
    CHECK(std::fabs(nb.log_value - t1) <= 1e-12 * std::max(1.0, std::fabs(t1)));
  }

  // Dominance region: with both bracketed factors below 1, res < 1 and the
  // cubic factor no larger than the linear one, the m = 0 (linear-decay)
  // term is the max.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 100; ++t) {
    BoundConstants c;
    c.n_heads = 1 + (t % 3);
    c.d_k = 4 + 4 * (t % 4);
    c.depth = 1 + (t % 6);
    c.alpha_prime = u(rng);
    const double base = 4.0 * c.n_heads / std::sqrt(static_cast<double>(c.d_k));
    const double linear_factor = u(rng);
    const double cubic_factor = linear_factor * u(rng);
    c.c1 = cubic_factor / (base * (1.0 - c.alpha_prime));
    c.c2 = linear_factor / (base * c.alpha_prime);
    const double res = u(rng);
    NetworkBound nb = network_bound(res, c);
    CHECK(nb.argmax_m == 0);
    const double linear = std::pow(base * c.alpha_prime * c.c2, c.depth) * res;
    CHECK(nb.value == doctest::Approx(linear).epsilon(1e-10));
  }

  // Outside that region the dominance claim breaks even with every factor
  // below 1: cubic factor 0.9, linear factor 0.3, res 0.9 at L = 1 puts the
  // max at m = 1 (0.9 * 0.9^3 > 0.3 * 0.9).
  {
    BoundConstants c;
    c.n_heads = 1;
    c.d_k = 16;
    c.depth = 1;
    c.alpha_prime = 0.5;
    c.c1 = 0.9 / (1.0 * 0.5);  // base = 4/4 = 1
    c.c2 = 0.3 / (1.0 * 0.5);
    NetworkBound nb = network_bound(0.9, c);
    CHECK(nb.argmax_m == 1);
    CHECK(nb.value == doctest::Approx(0.9 * std::pow(0.9, 3)).epsilon(1e-12));
  }

  // L = 1: the max of the two enumerated terms matches the max-form of the
  // single-layer bound pieces
  BoundConstants c1;
  c1.n_heads = 2;
  c1.d_k = 4;
  c1.depth = 1;
  c1.alpha_prime = 0.6;
  c1.c1 = 1.1;
  c1.c2 = 0.9;
  const double res = 0.8;
  const double base = 4.0 * 2 / 2.0;
  const double cubic = std::pow(base * 0.4 * 1.1, 1.0) * std::pow(res, 3);
  const double linear = std::pow(base * 0.6 * 0.9, 1.0) * res;
  NetworkBound nb = network_bound(res, c1);
  CHECK(nb.value == doctest::Approx(std::max(cubic, linear)).epsilon(1e-12));
}

TEST_CASE("assumption_check") {
  Mat constant = add_row_broadcast(Mat::zeros(3, 4), RowVec{2, 2, 2, 2});
  AssumptionCheck a = assumption_check(constant);
  CHECK(a.ok);
  CHECK(a.max_spread == 0.0);

  Mat bad{{0.0, 1.3}, {0.0, 0.1}};
  AssumptionCheck b = assumption_check(bad);
  CHECK(!b.ok);
  CHECK(b.max_spread == doctest::Approx(1.3).epsilon(1e-15));

  // small-scale init at T = 8 passes with room to spare
  std::mt19937_64 rng(4);
  LayerParams lp = init_layer(16, 8, 2, 0.0, 0.5, 0.02, rng);
  Mat x = Mat::gaussian(8, 16, 1.0, rng);
  for (const auto& head : lp.heads) {
    Mat spread = lemma_spread_matrix(x, head, Mat::zeros(8, 8), 0.5);
    AssumptionCheck chk = assumption_check(spread);
    CHECK(chk.ok);
    CHECK(chk.max_spread < 0.5);
  }
}

TEST_CASE("cosine similarity stats") {
  // identical non-zero tokens: every pair has similarity 1
  Mat same = add_row_broadcast(Mat::zeros(4, 3), RowVec{1, 2, 2});
  CosineStats s1 = cosine_similarity_stats(same);
  CHECK(s1.pairs == 6);
  for (double v : s1.sims) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s1.mode > 0.99);  // densest bin covers similarity 1
  CHECK(s1.fraction_above(0.99) == 1.0);

  // orthogonal pair
  Mat ortho{{1, 0}, {0, 1}};
  CosineStats s2 = cosine_similarity_stats(ortho);
  CHECK(s2.sims[0] == doctest::Approx(0.0).epsilon(1e-15));

  // identity rows plus [1,1]/sqrt(2): sims {0, rt2/2, rt2/2}
  Mat three{{1, 0}, {0, 1}, {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)}};
  CosineStats s3 = cosine_similarity_stats(three);
  REQUIRE(s3.pairs == 3);
  std::vector<double> sims = s3.sims;
  std::sort(sims.begin(), sims.end());
  CHECK(sims[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sims[1] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
  CHECK(sims[2] == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
  CHECK(s3.mean == doctest::Approx(std::sqrt(2.0) / 3).epsilon(1e-12));

  // zero rows are excluded with a count; all-zero input is degenerate
  Mat with_zero{{1, 1}, {0, 0}, {2, 2}};
  CosineStats s4 = cosine_similarity_stats(with_zero);
  CHECK(s4.zero_rows == 1);
  CHECK(s4.pairs == 1);
  CHECK_THROWS_AS(cosine_similarity_stats(Mat::zeros(3, 2)), DegenerateInputError);
  CHECK_THROWS_AS(cosine_similarity_stats(Mat::ones(1, 2)), ShapeError);

  // histogram integrates to 1
  std::mt19937_64 rng(5);
  CosineStats s5 = cosine_similarity_stats(Mat::gaussian(12, 6, 1.0, rng));
  double integral = 0.0;
  for (double d : s5.density) integral += d * (2.0 / 200);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("attention entropy stats") {
  Mat uniform(1, 4);
  for (int j = 0; j < 4; ++j) uniform(0, j) = 0.25;
  EntropyStats e1 = attention_entropy_stats(uniform);
  CHECK(e1.per_row[0] == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  Mat onehot{{0, 1, 0, 0}};
  EntropyStats e2 = attention_entropy_stats(onehot);
  CHECK(e2.per_row[0] == 0.0);

  Mat half{{0.5, 0.5, 0, 0}};
  EntropyStats e3 = attention_entropy_stats(half);
  CHECK(e3.per_row[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  CHECK_THROWS_AS(attention_entropy_stats(Mat{{0.5, 0.2}}), ContractError);
  CHECK_THROWS_AS(attention_entropy_stats(Mat{{1.5, -0.5}}), ContractError);

  // entropies of softmaxed random scores live in [0, ln T]
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    Mat p = softmax_rows(Mat::gaussian(6, 6, 2.0, rng));
    EntropyStats es = attention_entropy_stats(p);
    CHECK(es.min >= 0.0);
    CHECK(es.max <= std::log(6.0) + 1e-12);
  }
}

TEST_CASE("single-layer bound holds on random instances passing the assumption") {
  std::mt19937_64 rng(7);
  int tested = 0;
  for (int trial = 0; trial < 400 && tested < 120; ++trial) {
    const int t = 6 + (trial % 4), d = 8 + 2 * (trial % 3), heads = 1 + (trial % 2);
    const int dk = 4;
    const double ap = 0.1 + 0.2 * (trial % 5);
    LayerParams lp = init_layer(d, dk, heads, 0.0, ap, 0.05, rng, false, false);
    Mat x = Mat::gaussian(t, d, 1.0, rng);
    HiddenState h0 = HiddenState::zeros(heads, t);
    for (auto& h : h0.per_head) h = Mat::gaussian(t, t, 0.1, rng);

    bool ok = true;
    double c1 = 0.0, c2 = 0.0;
    for (int h = 0; h < heads; ++h) {
      const auto& head = lp.heads[static_cast<std::size_t>(h)];
      ok = ok && assumption_check(
                     lemma_spread_matrix(x, head, h0.per_head[static_cast<std::size_t>(h)], ap))
                     .ok;
      const double w_vo = operator_norm(matmul(head.w_v, head.w_o), NormKind::OneInf);
      c1 = std::max(c1, w_vo * operator_norm(matmul(head.w_q, transpose(head.w_k)),
                                             NormKind::One));
      c2 = std::max(c2, w_vo * std::sqrt(static_cast<double>(dk)) *
                            operator_norm(h0.per_head[static_cast<std::size_t>(h)],
                                          NormKind::One));
    }
    if (!ok) continue;
    ++tested;
    const double res_in = operator_norm(residual(x).r, NormKind::OneInf);
    const double measured =
        operator_norm(residual(mha_layer(x, h0, lp).x).r, NormKind::OneInf);
    CHECK(measured <= single_layer_bound(res_in, c1, c2, heads, dk, ap));
  }
  CHECK(tested >= 100);
}

TEST_CASE("collapse_report wires the diagnostics together") {
  std::mt19937_64 rng(8);
  const int t = 10, d = 12, dk = 4, heads = 2, depth = 3;
  std::vector<LayerParams> layers;
  for (int l = 0; l < depth; ++l) layers.push_back(init_layer(d, dk, heads, 0.0, 0.5, 0.02, rng));
  Mat x = Mat::gaussian(t, d, 0.5, rng);
  CollapseReport rep = collapse_report(x, layers, HiddenState::zeros(heads, t));
  REQUIRE(static_cast<int>(rep.layers.size()) == depth);
  for (const auto& diag : rep.layers) {
    CHECK(diag.ratio >= 0.0);
    CHECK(diag.output_norm > 0.0);
    CHECK(diag.mean_entropy >= 0.0);
    CHECK(diag.mean_entropy <= std::log(static_cast<double>(t)) + 1e-12);
    CHECK(diag.assumption_ok);  // std-0.02 init keeps spreads tiny
    // the lemma bound for this layer holds on the measured residuals
    const double prev =
        diag.layer == 1 ? rep.input_residual_norm
                        : rep.layers[static_cast<std::size_t>(diag.layer - 2)].residual_norm;
    (void)prev;
    CHECK(diag.residual_norm <= diag.lemma_bound * (1.0 + 1e-9));
  }
  CHECK(rep.constants.r() == doctest::Approx(8.0 * heads / 2.0).epsilon(1e-15));
}
