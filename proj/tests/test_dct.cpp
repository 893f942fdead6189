#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dctse/dct.hpp"
#include "dctse/errors.hpp"

using namespace dctse;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> randvec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double orthogonality_error(const DctPlan& p) {
  const std::size_t n = p.size();
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += p.basis_at(i, k) * p.basis_at(j, k);
      err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return err;
}

}  // namespace

TEST_CASE("basis at N=2 and N=1", "[dct]") {
  const auto p2 = build_dct_plan(2);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK_THAT(p2.basis_at(0, 0), WithinAbs(r, 1e-15));
  CHECK_THAT(p2.basis_at(0, 1), WithinAbs(r, 1e-15));
  CHECK_THAT(p2.basis_at(1, 0), WithinAbs(r, 1e-15));
  CHECK_THAT(p2.basis_at(1, 1), WithinAbs(-r, 1e-15));
  const auto p1 = build_dct_plan(1);
  CHECK_THAT(p1.basis_at(0, 0), WithinAbs(1.0, 1e-15));
}

TEST_CASE("zero size plan is rejected", "[dct]") { CHECK_THROWS_AS(build_dct_plan(0), InvalidArgument); }

TEST_CASE("basis rows are unit norm and orthogonal", "[dct]") {
  for (std::size_t n : {1u, 2u, 3u, 8u, 64u, 1024u}) {
    const auto p = build_dct_plan(n);
    INFO("N=" << n);
    CHECK(orthogonality_error(p) <= 1e-12);
  }
}

TEST_CASE("all-ones vector maps to sqrt(N) DC", "[dct]") {
  const auto p = build_dct_plan(8);
  const std::vector<double> ones(8, 1.0);
  const auto X = dct_forward(p, ones);
  CHECK_THAT(X[0], WithinAbs(std::sqrt(8.0), 1e-14));
  for (std::size_t k = 1; k < 8; ++k) CHECK_THAT(X[k], WithinAbs(0.0, 1e-14));
  const auto back = dct_inverse(p, X);
  for (double v : back) CHECK_THAT(v, WithinAbs(1.0, 1e-14));
}

TEST_CASE("forward matches an orthonormal DCT-II reference", "[dct]") {
  // Reference values from an independent orthonormal DCT-II implementation.
  const std::vector<double> x{0.25, -1.5, 3.0, 0.75, -0.125, 2.0, -2.5, 1.0};
  const std::vector<double> expected{1.016465997955662,   0.4110774583919184,  -1.4333630917331268,
                                     -1.1428008827692098, 0.3093592167691145,  -0.23741836119353832,
                                     4.277046468914881,   -0.3643027412909899};
  const auto X = dct_forward(build_dct_plan(8), x);
  for (std::size_t k = 0; k < 8; ++k) CHECK_THAT(X[k], WithinAbs(expected[k], 1e-13));
}

TEST_CASE("impulse selects a basis column, unit coefficient a basis row", "[dct]") {
  const auto p = build_dct_plan(4);
  const std::vector<double> delta{1, 0, 0, 0};
  const auto X = dct_forward(p, delta);
  for (std::size_t k = 0; k < 4; ++k) CHECK_THAT(X[k], WithinAbs(p.basis_at(k, 0), 1e-15));
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> e(4, 0.0);
    e[k] = 1.0;
    const auto x = dct_inverse(p, e);
    for (std::size_t n = 0; n < 4; ++n) CHECK_THAT(x[n], WithinAbs(p.basis_at(k, n), 1e-15));
  }
  const auto z = dct_inverse(p, std::vector<double>(4, 0.0));
  for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("length mismatch throws", "[dct]") {
  const auto p = build_dct_plan(8);
  CHECK_THROWS_AS(dct_forward(p, std::vector<double>(7)), InvalidArgument);
  CHECK_THROWS_AS(dct_inverse(p, std::vector<double>(9)), InvalidArgument);
}

TEST_CASE("perfect inversion, Parseval and linearity", "[dct][property]") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 3u, 8u, 64u, 100u, 1024u}) {
    const auto p = build_dct_plan(n);
    INFO("N=" << n);
    const int reps = n >= 1024 ? 100 : 1000;
    for (int r = 0; r < reps; ++r) {
      const auto x = randvec(n, rng);
      const auto X = dct_forward(p, x);
      const auto back = dct_inverse(p, X);
      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(back[i] - x[i]));
      REQUIRE(err <= 1e-10 * max_abs(x));
      double ex = 0.0, eX = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ex += x[i] * x[i];
        eX += X[i] * X[i];
      }
      REQUIRE(std::abs(std::sqrt(eX) - std::sqrt(ex)) <= 1e-10 * std::sqrt(ex));
    }
    const auto x = randvec(n, rng);
    const auto y = randvec(n, rng);
    const double a = 1.7, b = -0.3;
    std::vector<double> mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = a * x[i] + b * y[i];
    const auto Xm = dct_forward(p, mix);
    const auto Xx = dct_forward(p, x);
    const auto Xy = dct_forward(p, y);
    for (std::size_t k = 0; k < n; ++k) CHECK_THAT(Xm[k], WithinAbs(a * Xx[k] + b * Xy[k], 1e-10));
  }
}

TEST_CASE("fast path agrees with the matrix path", "[dct]") {
  const auto p = build_dct_plan(1024);
  REQUIRE(p.uses_fast_path());
  CHECK_FALSE(build_dct_plan(64).uses_fast_path());
  std::mt19937_64 rng(11);
  std::vector<double> a(1024), b(1024);
  for (int r = 0; r < 20; ++r) {
    const auto x = randvec(1024, rng);
    p.forward_matrix(x, a);
    p.forward_fast(x, b);
    for (std::size_t k = 0; k < 1024; ++k) REQUIRE(std::abs(a[k] - b[k]) <= 1e-10);
    p.inverse_matrix(x, a);
    p.inverse_fast(x, b);
    for (std::size_t k = 0; k < 1024; ++k) REQUIRE(std::abs(a[k] - b[k]) <= 1e-10);
  }
}

TEST_CASE("even symmetric extension mirrors the frame", "[dct]") {
  const auto e = even_symmetric_extend(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(e == std::vector<double>{1, 2, 3, 3, 2, 1});
  CHECK(even_symmetric_extend(std::vector<double>{4.0}) == std::vector<double>{4, 4});
  CHECK_THROWS_AS(even_symmetric_extend(std::vector<double>{}), InvalidArgument);
  std::mt19937_64 rng(3);
  const auto x = randvec(37, rng);
  const auto es = even_symmetric_extend(x);
  for (std::size_t n = 0; n < 37; ++n) CHECK(es[n] == es[2 * 37 - 1 - n]);
}

TEST_CASE("DFT of the extension relates to the DCT", "[dct]") {
  CHECK(verify_dft_dct_relation(std::vector<double>(4, 1.0)) <= 1e-12);
  CHECK(verify_dft_dct_relation(std::vector<double>(16, 0.0)) == 0.0);
  std::mt19937_64 rng(5);
  for (std::size_t n : {8u, 64u, 1024u}) {
    const auto x = randvec(n, rng);
    CHECK(verify_dft_dct_relation(x) <= 1e-9);
  }
  // a deliberately impossible tolerance must trip the check
  CHECK_THROWS_AS(verify_dft_dct_relation(randvec(64, rng), 1e-300), NumericalError);
}

TEST_CASE("conjugate symmetric part", "[dct]") {
  const auto odd = conjugate_symmetric_part(std::vector<double>{0, 1, 0, -1});
  for (double v : odd) CHECK(v == 0.0);
  const std::vector<double> even{3, 1, 2, 1};
  CHECK(conjugate_symmetric_part(even) == even);
  CHECK_THROWS_AS(conjugate_symmetric_part(std::vector<double>{}), InvalidArgument);

  std::mt19937_64 rng(9);
  const auto x = randvec(16, rng);
  const auto xe = conjugate_symmetric_part(x);
  const auto X = naive_dft(x);
  const auto Xe = naive_dft(xe);
  for (std::size_t k = 0; k < 16; ++k) {
    CHECK_THAT(Xe[k].real(), WithinAbs(X[k].real(), 1e-12));
    CHECK(std::abs(Xe[k].imag()) <= 1e-12);
  }
}

TEST_CASE("beta weights", "[dct]") {
  CHECK_THAT(dct_beta(0), WithinAbs(1.0 / std::sqrt(2.0), 1e-16));
  CHECK(dct_beta(1) == 1.0);
  CHECK(dct_beta(500) == 1.0);
}
