#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "hopattn/kernels.hpp"

using namespace hopattn;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("kernel selection") {
  auto names = available_kernel_names();
  REQUIRE(!names.empty());
  CHECK(names.front() == "scalar");
  for (const auto& n : names) {
    set_kernels(n);
    CHECK(std::string(kernels().name) == n);
  }
  CHECK_THROWS_AS(set_kernels("avx1024"), std::invalid_argument);
  set_kernels("scalar");
}

// Every SIMD variant must reproduce the scalar reference bit for bit,
// including ragged tail sizes.
TEST_CASE("simd variants match scalar exactly") {
  std::mt19937_64 rng(7);
  const Kernels& ref = scalar_kernels();
  for (const auto& name : available_kernel_names()) {
    if (name == "scalar") continue;
    set_kernels(name);
    const Kernels& k = kernels();

    for (int trial = 0; trial < 20; ++trial) {
      std::uniform_int_distribution<int> dim(1, 33);
      const int m = dim(rng), p = dim(rng), n = dim(rng);
      auto a = random_vec(static_cast<std::size_t>(m) * p, rng);
      auto b = random_vec(static_cast<std::size_t>(p) * n, rng);
      std::vector<double> c0(static_cast<std::size_t>(m) * n), c1(c0.size());
      ref.matmul(a.data(), b.data(), c0.data(), m, p, n);
      k.matmul(a.data(), b.data(), c1.data(), m, p, n);
      CHECK(bit_equal(c0, c1));

      const std::size_t len = static_cast<std::size_t>(m) * n;
      auto x = random_vec(len, rng);
      auto y = random_vec(len, rng);
      std::vector<double> o0(len), o1(len);

      ref.lerp(0.3, x.data(), 0.7, y.data(), o0.data(), len);
      k.lerp(0.3, x.data(), 0.7, y.data(), o1.data(), len);
      CHECK(bit_equal(o0, o1));

      ref.scale(-1.37, x.data(), o0.data(), len);
      k.scale(-1.37, x.data(), o1.data(), len);
      CHECK(bit_equal(o0, o1));

      ref.add(x.data(), y.data(), o0.data(), len);
      k.add(x.data(), y.data(), o1.data(), len);
      CHECK(bit_equal(o0, o1));

      ref.sub(x.data(), y.data(), o0.data(), len);
      k.sub(x.data(), y.data(), o1.data(), len);
      CHECK(bit_equal(o0, o1));

      ref.hadamard(x.data(), y.data(), o0.data(), len);
      k.hadamard(x.data(), y.data(), o1.data(), len);
      CHECK(bit_equal(o0, o1));

      auto row = random_vec(static_cast<std::size_t>(n), rng);
      ref.add_row(x.data(), row.data(), o0.data(), m, n);
      k.add_row(x.data(), row.data(), o1.data(), m, n);
      CHECK(bit_equal(o0, o1));

      ref.sub_row(x.data(), row.data(), o0.data(), m, n);
      k.sub_row(x.data(), row.data(), o1.data(), m, n);
      CHECK(bit_equal(o0, o1));

      std::vector<double> s0(static_cast<std::size_t>(n)), s1(s0.size());
      ref.abs_colsum(x.data(), s0.data(), m, n);
      k.abs_colsum(x.data(), s1.data(), m, n);
      CHECK(bit_equal(s0, s1));
    }
  }
  set_kernels("scalar");
}
