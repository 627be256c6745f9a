#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kpid/kernels.hpp"
#include "kpid/systems.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace kpid;

namespace {

// Independent re-evaluation of every matrix entry with raw loops; kept free
// of the assembly code under test.
double oracle_kernel(const KernelSpec& k, const VectorXd& x, const VectorXd& y) {
  if (k.kind == KernelKind::GaussianRBF) {
    double d2 = 0.0;
    for (Eigen::Index r = 0; r < x.size(); ++r) d2 += (x(r) - y(r)) * (x(r) - y(r));
    return std::exp(-d2 / k.width);
  }
  double dot = 0.0;
  for (Eigen::Index r = 0; r < x.size(); ++r) dot += x(r) * y(r);
  return std::exp(dot / k.width);
}

MatrixXd random_points(Eigen::Index dim, Eigen::Index count, std::uint64_t seed) {
  SplitMix64 rng(seed);
  MatrixXd X(dim, count);
  for (Eigen::Index j = 0; j < count; ++j)
    for (Eigen::Index r = 0; r < dim; ++r) X(r, j) = rng.uniform(-3.0, 3.0);
  return X;
}

void check_entrywise(const MatrixXd& got, const MatrixXd& want, double rel) {
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  for (Eigen::Index i = 0; i < got.rows(); ++i)
    for (Eigen::Index j = 0; j < got.cols(); ++j)
      CHECK(std::abs(got(i, j) - want(i, j)) <=
            rel * std::max(1.0, std::abs(want(i, j))));
}

}  // namespace

TEST_CASE("scalar kernel values") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};
  VectorXd x(3);
  x << 1, 2, 3;
  CHECK(eval_scalar(gauss, x, x) == doctest::Approx(1.0).epsilon(1e-15));

  VectorXd a(2), b(2);
  a << 0, 0;
  b << std::sqrt(20.0), 0;  // |a-b|^2 = 20
  CHECK(eval_scalar(gauss, a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

  const KernelSpec expdot{KernelKind::ExponentialDot, 2.0};
  VectorXd zero = VectorXd::Zero(3), any(3);
  any << 4, -5, 0.25;
  CHECK(eval_scalar(expdot, zero, any) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("scalar kernel is symmetric") {
  for (auto kind : {KernelKind::GaussianRBF, KernelKind::ExponentialDot}) {
    const KernelSpec k{kind, 3.5};
    SplitMix64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      VectorXd x(4), y(4);
      for (int r = 0; r < 4; ++r) {
        x(r) = rng.uniform(-2, 2);
        y(r) = rng.uniform(-2, 2);
      }
      CHECK(eval_scalar(k, x, y) == eval_scalar(k, y, x));
    }
  }
}

TEST_CASE("scalar kernel rejects bad input") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};
  CHECK_THROWS_WITH_AS(eval_scalar(gauss, VectorXd::Zero(3), VectorXd::Zero(2)),
                       doctest::Contains("3"), std::invalid_argument);
  CHECK_THROWS_AS(eval_scalar(KernelSpec{KernelKind::GaussianRBF, 0.0}, VectorXd::Zero(2),
                              VectorXd::Zero(2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(eval_scalar(KernelSpec{KernelKind::GaussianRBF, -1.0}, VectorXd::Zero(2),
                              VectorXd::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("control embedding leads with one") {
  VectorXd u(2);
  u << -0.5, 4;
  const ControlEmbedding e(u);
  REQUIRE(e.ubar.size() == 3);
  CHECK(e.ubar(0) == 1.0);
  CHECK(e.ubar(1) == -0.5);
  CHECK(e.ubar(2) == 4.0);
  CHECK(ControlEmbedding(VectorXd{}).ubar.size() == 1);
}

TEST_CASE("vv inner product closed form") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};
  VectorXd x(2);
  x << 0.3, -1;

  VectorXd u0(1);
  u0 << 0;
  CHECK(eval_vv_inner(gauss, x, ControlEmbedding(u0), x, ControlEmbedding(u0)) ==
        doctest::Approx(1.0).epsilon(1e-15));

  // Orthogonal embeddings (1,2) and (1,-0.5) cancel exactly.
  VectorXd u2(1), um(1);
  u2 << 2;
  um << -0.5;
  CHECK(eval_vv_inner(gauss, x, ControlEmbedding(u2), x, ControlEmbedding(um)) ==
        doctest::Approx(0.0));

  // |x_i - x_j|^2 = 20 and embeddings (1,1), (1,3): e^-1 * 4.
  VectorXd xi(2), xj(2), ua(1), ub(1);
  xi << 0, 0;
  xj << 2, 4;
  ua << 1;
  ub << 3;
  const double got = eval_vv_inner(gauss, xi, ControlEmbedding(ua), xj, ControlEmbedding(ub));
  CHECK(got == doctest::Approx(4.0 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(got == doctest::Approx(1.4715178).epsilon(1e-7));
}

TEST_CASE("gram_domain values and regularization") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};

  MatrixXd one = random_points(3, 1, 11);
  CHECK(gram_domain(gauss, one, 0.0)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  MatrixXd two(2, 2);
  two.col(0) << 0, 0;
  two.col(1) << 2, 4;  // distance^2 = 20
  const MatrixXd G = gram_domain(gauss, two, 0.0);
  CHECK(G(0, 0) == doctest::Approx(1.0));
  CHECK(G(1, 1) == doctest::Approx(1.0));
  CHECK(G(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(G(1, 0) == G(0, 1));
}

TEST_CASE("assembled matrices match the double-loop oracle") {
  for (auto kind : {KernelKind::GaussianRBF, KernelKind::ExponentialDot}) {
    const KernelSpec k{kind, kind == KernelKind::GaussianRBF ? 20.0 : 8.0};
    const MatrixXd X = random_points(4, 7, 21);
    const MatrixXd Y = random_points(4, 7, 22);
    const MatrixXd Uraw = random_points(2, 7, 23);
    const MatrixXd Ubar = embed_controls(Uraw);
    const double eps = 1e-6;

    MatrixXd Gd_want(7, 7), Gb_want(7, 7), I_want(7, 7);
    for (Eigen::Index i = 0; i < 7; ++i) {
      for (Eigen::Index j = 0; j < 7; ++j) {
        Gd_want(i, j) = oracle_kernel(k, X.col(i), X.col(j)) + (i == j ? eps : 0.0);
        double dot = 0.0;
        for (Eigen::Index r = 0; r < Ubar.rows(); ++r) dot += Ubar(r, i) * Ubar(r, j);
        Gb_want(i, j) = oracle_kernel(k, X.col(i), X.col(j)) * dot + (i == j ? eps : 0.0);
        I_want(i, j) = oracle_kernel(k, X.col(i), Y.col(j));
      }
    }
    check_entrywise(gram_domain(k, X, eps), Gd_want, 1e-15);
    check_entrywise(gram_range(k, X, Ubar, eps), Gb_want, 1e-15);
    check_entrywise(interaction(k, X, Y), I_want, 1e-15);
  }
}

TEST_CASE("gram_range values") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};
  MatrixXd X = random_points(2, 1, 31);

  MatrixXd U0(1, 1);
  U0 << 0;
  CHECK(gram_range(gauss, X, embed_controls(U0), 0.0)(0, 0) == doctest::Approx(1.0));

  MatrixXd U2(1, 1);
  U2 << 2;
  CHECK(gram_range(gauss, X, embed_controls(U2), 0.0)(0, 0) == doctest::Approx(5.0));

  MatrixXd bad = MatrixXd::Zero(2, 1);  // leading row not ones
  CHECK_THROWS_AS(gram_range(gauss, X, bad, 0.0), std::invalid_argument);
}

TEST_CASE("interaction at fixed points reduces to the Gram matrix") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};
  const MatrixXd X = random_points(3, 5, 41);
  const MatrixXd I = interaction(gauss, X, X);
  const MatrixXd G = gram_domain(gauss, X, 0.0);
  CHECK((I - G).lpNorm<Eigen::Infinity>() == 0.0);

  MatrixXd x1(2, 1), y1(2, 1);
  x1.col(0) << 0, 0;
  y1.col(0) << 2, 4;
  CHECK(interaction(gauss, x1, y1)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

  CHECK_THROWS_AS(interaction(gauss, random_points(2, 3, 1), random_points(2, 4, 2)),
                  std::invalid_argument);
}

TEST_CASE("gram matrices are exactly symmetric with unit diagonal") {
  const KernelSpec gauss{KernelKind::GaussianRBF, 20.0};
  const MatrixXd X = random_points(5, 40, 51);
  const MatrixXd Uraw = random_points(1, 40, 52);
  const MatrixXd Gd = gram_domain(gauss, X, 0.0);
  const MatrixXd Gb = gram_range(gauss, X, embed_controls(Uraw), 1e-6);
  CHECK((Gd - Gd.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((Gb - Gb.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((Gd.diagonal().array() == 1.0).all());
}

TEST_CASE("regularized gram matrices are positive definite") {
  const double eps = 1e-6;
  for (std::uint64_t seed : {61, 62, 63}) {
    const Eigen::Index M = 10 + 13 * static_cast<Eigen::Index>(seed % 4);
    const MatrixXd X = random_points(3, M, seed);
    const MatrixXd G = gram_domain(KernelSpec{KernelKind::GaussianRBF, 20.0}, X, eps);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
    CHECK(es.eigenvalues().minCoeff() >= eps - 1e-10);
  }
}
