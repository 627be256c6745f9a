#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "kpid/operator.hpp"
#include "kpid/paramid.hpp"
#include "kpid/systems.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace kpid;

namespace {

// Straight-line transcription of the training formulas with naive loops and
// a reference (Jacobi) SVD-based pseudoinverse. Shares no code with train().
struct OracleOperator {
  MatrixXd Gd, Gb, I, A;
};

double oracle_gauss(double width, const VectorXd& x, const VectorXd& y) {
  double d2 = 0.0;
  for (Eigen::Index r = 0; r < x.size(); ++r) d2 += (x(r) - y(r)) * (x(r) - y(r));
  return std::exp(-d2 / width);
}

MatrixXd oracle_pinv(const MatrixXd& G) {
  Eigen::JacobiSVD<MatrixXd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  VectorXd inv = VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-12 * s(0)) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

OracleOperator oracle_train(const SnapshotDataset& data, double width, double eps) {
  const Eigen::Index M = data.dims.M;
  OracleOperator o;
  o.Gd.resize(M, M);
  o.Gb.resize(M, M);
  o.I.resize(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (Eigen::Index j = 0; j < M; ++j) {
      const double k = oracle_gauss(width, data.X.col(i), data.X.col(j));
      double udot = 1.0;
      for (Eigen::Index r = 0; r < data.U.rows(); ++r) udot += data.U(r, i) * data.U(r, j);
      o.Gd(i, j) = k + (i == j ? eps : 0.0);
      o.Gb(i, j) = k * udot + (i == j ? eps : 0.0);
      o.I(i, j) = oracle_gauss(width, data.X.col(i), data.Y.col(j));
    }
  }
  if (eps > 0.0) {
    o.A = o.Gb.fullPivLu().inverse() * o.I.transpose() * o.Gd.fullPivLu().inverse();
  } else {
    o.A = oracle_pinv(o.Gb) * o.I.transpose() * oracle_pinv(o.Gd);
  }
  return o;
}

SnapshotDataset random_snapshots(Eigen::Index M, Eigen::Index n, Eigen::Index m,
                                 std::uint64_t seed) {
  SplitMix64 rng(seed);
  SnapshotDataset d;
  d.dims = DatasetDims{M, n, 0, m};
  d.X.resize(n, M);
  d.U.resize(m, M);
  d.Y.resize(n, M);
  for (Eigen::Index j = 0; j < M; ++j) {
    for (Eigen::Index r = 0; r < n; ++r) {
      d.X(r, j) = rng.uniform(-2, 2);
      d.Y(r, j) = rng.uniform(-2, 2);
    }
    for (Eigen::Index r = 0; r < m; ++r) d.U(r, j) = rng.uniform(-1, 1);
  }
  return d;
}

SnapshotDataset linear_scalar_data(Eigen::Index M, std::uint64_t seed) {
  // x+ = 0.9 x + 0.1 u sampled in the unit box.
  const DiscreteSystem sys = linear_system(MatrixXd::Identity(1, 1) * 0.9,
                                           MatrixXd::Constant(1, 1, 0.1));
  SamplingConfig cfg;
  cfg.samples = M;
  cfg.state_box = {{-1, 1}};
  cfg.control_box = {{-1, 1}};
  cfg.seed = seed;
  return generate_training(sys, cfg);
}

VectorXd vec1(double v) {
  VectorXd u(1);
  u << v;
  return u;
}

}  // namespace

TEST_CASE("M=1 fixed point reproduces itself") {
  SnapshotDataset d;
  d.dims = DatasetDims{1, 3, 0, 1};
  d.X = VectorXd::LinSpaced(3, 0.5, 1.5);
  d.U = MatrixXd::Zero(1, 1);
  d.Y = d.X;
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 0.0);
  CHECK(model.op_matrix(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(model.Sigma(0) == doctest::Approx(1.0).epsilon(1e-12));
  const VectorXd pred = predict_step(model, d.X.col(0), vec1(0));
  CHECK((pred - d.X.col(0)).norm() <= 1e-12);
}

TEST_CASE("M=1 projection semantics: prediction is x1 k(x1,y1), not y1") {
  const KernelSpec kernel{KernelKind::GaussianRBF, 20.0};
  SnapshotDataset d;
  d.dims = DatasetDims{1, 2, 0, 1};
  d.X.resize(2, 1);
  d.X << 0.3, -0.8;
  d.U = MatrixXd::Zero(1, 1);
  d.Y.resize(2, 1);
  d.Y << 1.1, 0.4;
  const FiniteRankModel model = train(d, kernel, 0.0);
  const double kxy = eval_scalar(kernel, d.X.col(0), d.Y.col(0));
  const VectorXd pred = predict_step(model, d.X.col(0), vec1(0));
  CHECK((pred - kxy * d.X.col(0)).norm() <= 1e-12);
  CHECK((pred - d.Y.col(0)).norm() > 0.1);
}

TEST_CASE("training matches the transcription oracle") {
  const KernelSpec kernel{KernelKind::GaussianRBF, 20.0};
  for (double eps : {1e-6, 0.0}) {
    const SnapshotDataset d = random_snapshots(3, 2, 1, 101);
    const FiniteRankModel model = train(d, kernel, eps);
    const OracleOperator o = oracle_train(d, kernel.width, eps);
    const double rel = (model.op_matrix - o.A).norm() / std::max(1.0, o.A.norm());
    CHECK(rel <= 1e-10);
  }
  // A couple of larger cases with controls of width 2.
  for (std::uint64_t seed : {7, 8}) {
    const SnapshotDataset d = random_snapshots(12, 3, 2, seed);
    const FiniteRankModel model = train(d, kernel, 1e-6);
    const OracleOperator o = oracle_train(d, kernel.width, 1e-6);
    CHECK((model.op_matrix - o.A).norm() / std::max(1.0, o.A.norm()) <= 1e-10);
  }
}

TEST_CASE("pseudo_svd basics") {
  const PseudoSvd id = pseudo_svd(MatrixXd::Identity(3, 3));
  CHECK((id.sigma - VectorXd::Ones(3)).norm() <= 1e-14);

  MatrixXd diag = MatrixXd::Zero(3, 3);
  diag.diagonal() << 3, 2, 1;
  const PseudoSvd ds = pseudo_svd(diag);
  CHECK(ds.sigma(0) == doctest::Approx(3.0));
  CHECK(ds.sigma(1) == doctest::Approx(2.0));
  CHECK(ds.sigma(2) == doctest::Approx(1.0));
  // Sign convention makes W and V the identity exactly here.
  CHECK((ds.W - MatrixXd::Identity(3, 3)).norm() <= 1e-14);
  CHECK((ds.V - MatrixXd::Identity(3, 3)).norm() <= 1e-14);

  SplitMix64 rng(5);
  MatrixXd A(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) A(i, j) = rng.uniform(-1, 1);
  const PseudoSvd s = pseudo_svd(A);
  CHECK((s.W * s.sigma.asDiagonal() * s.V.transpose() - A).norm() <= 1e-10 * A.norm());
  CHECK((s.W.transpose() * s.W - MatrixXd::Identity(4, 4)).norm() <= 1e-10);
  CHECK((s.V.transpose() * s.V - MatrixXd::Identity(4, 4)).norm() <= 1e-10);

  MatrixXd bad = A;
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pseudo_svd(bad), std::invalid_argument);
}

TEST_CASE("pseudo_svd sign convention is reproducible") {
  SplitMix64 rng(17);
  MatrixXd A(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) A(i, j) = rng.uniform(-1, 1);
  const PseudoSvd a = pseudo_svd(A);
  const PseudoSvd b = pseudo_svd(A);
  CHECK(a.W == b.W);
  CHECK(a.V == b.V);
  for (Eigen::Index i = 0; i < 5; ++i) {
    Eigen::Index j = 0;
    a.W.col(i).cwiseAbs().maxCoeff(&j);
    CHECK(a.W(j, i) > 0.0);
  }
}

TEST_CASE("modes equal D V") {
  const SnapshotDataset d = random_snapshots(3, 2, 1, 33);
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);
  const MatrixXd xi = modes(model);
  CHECK((xi - model.D * model.V).norm() <= 1e-14);
  // Naive triple-loop product oracle.
  MatrixXd want = MatrixXd::Zero(2, 3);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      for (Eigen::Index k = 0; k < 3; ++k) want(i, j) += model.D(i, k) * model.V(k, j);
  CHECK((xi - want).norm() <= 1e-14);
}

TEST_CASE("singular functions match direct summation") {
  const SnapshotDataset d = random_snapshots(2, 2, 1, 44);
  const KernelSpec kernel{KernelKind::GaussianRBF, 20.0};
  const FiniteRankModel model = train(d, kernel, 1e-6);
  SplitMix64 rng(45);
  VectorXd x(2);
  x << rng.uniform(-2, 2), rng.uniform(-2, 2);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const SingularFunctionValue sf = singular_functions(model, i, x);
    double phi = 0.0;
    VectorXd psi = VectorXd::Zero(2);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double kj = eval_scalar(kernel, x, model.centers.col(j));
      phi += model.V(j, i) * kj;
      psi += model.W(j, i) * kj * model.Ubar.col(j);
    }
    CHECK(std::abs(sf.phi - phi) <= 1e-14);
    CHECK((sf.psi - psi).norm() <= 1e-14);
  }
  CHECK_THROWS_AS(singular_functions(model, 2, x), std::out_of_range);
  CHECK_THROWS_AS(singular_functions(model, -1, x), std::out_of_range);
}

TEST_CASE("both predictor formulas agree") {
  const SnapshotDataset d = random_snapshots(20, 2, 1, 55);
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);
  const MatrixXd xi = modes(model);
  SplitMix64 rng(56);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd x(2), u(1);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    u << rng.uniform(-1, 1);
    const ControlEmbedding ub(u);

    // B(x): row j = k(x, x_j) ubar_j'.
    const VectorXd kx = kernel_vector(model, x);
    const MatrixXd B = kx.asDiagonal() * model.Ubar.transpose();

    const VectorXd via_svd = xi * model.Sigma.asDiagonal() * model.W.transpose() * B * ub.ubar;
    const VectorXd via_op = model.D * model.op_matrix.transpose() * B * ub.ubar;
    const VectorXd via_predict = predict_step(model, x, u);

    // Relative to the scale of the matrix products being compared; with
    // near-singular Grams the operator norm dwarfs the O(1) prediction.
    const double scale = std::max({1.0, via_svd.norm(),
                                   model.D.norm() * model.Sigma(0) * (B * ub.ubar).norm()});
    CHECK((via_svd - via_op).norm() <= 1e-10 * scale);
    CHECK((via_predict - via_svd).norm() <= 1e-10 * scale);
  }
}

TEST_CASE("linear system is recovered inside the box") {
  const SnapshotDataset d = linear_scalar_data(500, 7);
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);
  SplitMix64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double x = rng.uniform(-1, 1);
    const double u = rng.uniform(-1, 1);
    const double pred = predict_step(model, vec1(x), vec1(u))(0);
    worst = std::max(worst, std::abs(pred - (0.9 * x + 0.1 * u)));
  }
  CHECK(worst <= 5e-2);

  // 10-step rollout stays within 10x the one-step tolerance.
  MatrixXd controls(1, 10);
  for (int i = 0; i < 10; ++i) controls(0, i) = rng.uniform(-1, 1);
  const MatrixXd traj = predict_trajectory(model, vec1(0.5), controls);
  double z = 0.5;
  double worst_traj = 0.0;
  for (int i = 0; i < 10; ++i) {
    z = 0.9 * z + 0.1 * controls(0, i);
    worst_traj = std::max(worst_traj, std::abs(traj(0, i + 1) - z));
  }
  CHECK(worst_traj <= 0.5);
}

TEST_CASE("drift and control effectiveness") {
  const SnapshotDataset d = random_snapshots(15, 2, 1, 66);
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);
  SplitMix64 rng(67);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x(2), u(1);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    u << rng.uniform(-1, 1);
    const DriftControl dc = drift_and_control(model, x);
    const VectorXd recombined = dc.drift + dc.control * u;
    const VectorXd pred = predict_step(model, x, u);
    CHECK((recombined - pred).norm() <= 1e-14 * std::max(1.0, pred.norm()));
  }

  // Linear oracle: g(x) is close to B inside the box.
  const SnapshotDataset lin = linear_scalar_data(500, 9);
  const FiniteRankModel lmodel = train(lin, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);
  for (int trial = 0; trial < 10; ++trial) {
    const DriftControl dc = drift_and_control(lmodel, vec1(rng.uniform(-1, 1)));
    CHECK(std::abs(dc.control(0, 0) - 0.1) <= 1e-1);
  }
}

TEST_CASE("trajectory prediction basics") {
  const SnapshotDataset d = random_snapshots(10, 2, 1, 77);
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);
  VectorXd x0(2);
  x0 << 0.1, 0.2;
  const MatrixXd traj = predict_trajectory(model, x0, MatrixXd::Zero(1, 0));
  CHECK(traj.cols() == 1);
  CHECK(traj.col(0) == x0);
}

TEST_CASE("divergence is flagged with the step index") {
  // The exponential dot product kernel overflows far outside the data.
  SnapshotDataset d = random_snapshots(5, 1, 1, 88);
  d.X(0, 0) = 1.5;
  const FiniteRankModel model = train(d, KernelSpec{KernelKind::ExponentialDot, 1.0}, 1e-6);
  CHECK_THROWS_WITH_AS(predict_trajectory(model, vec1(800.0), MatrixXd::Ones(1, 3)),
                       doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("permutation invariance of the trained predictor") {
  const SnapshotDataset d = random_snapshots(30, 2, 1, 99);
  const FiniteRankModel base = train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);

  // Reverse the snapshot order.
  SnapshotDataset rev = d;
  for (Eigen::Index j = 0; j < d.dims.M; ++j) {
    rev.X.col(j) = d.X.col(d.dims.M - 1 - j);
    rev.U.col(j) = d.U.col(d.dims.M - 1 - j);
    rev.Y.col(j) = d.Y.col(d.dims.M - 1 - j);
  }
  const FiniteRankModel perm = train(rev, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6);

  SplitMix64 rng(100);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x(2), u(1);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    u << rng.uniform(-1, 1);
    const VectorXd a = predict_step(base, x, u);
    const VectorXd b = predict_step(perm, x, u);
    CHECK((a - b).norm() <= 1e-8 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("model persistence round trip") {
  const SnapshotDataset d = random_snapshots(12, 2, 1, 111);
  const KernelSpec kernel{KernelKind::GaussianRBF, 20.0};
  const FiniteRankModel model = train(d, kernel, 1e-6);

  const auto dir = std::filesystem::temp_directory_path() / "kpid_model_roundtrip";
  std::filesystem::remove_all(dir);
  save_model(dir, model);
  const FiniteRankModel loaded = load_model(dir);

  CHECK(loaded.dims.M == model.dims.M);
  CHECK(loaded.dims.n == model.dims.n);
  CHECK(loaded.kernel.kind == model.kernel.kind);
  CHECK(loaded.kernel.width == model.kernel.width);
  CHECK(loaded.eps == model.eps);

  SplitMix64 rng(112);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x(2), u(1);
    x << rng.uniform(-2, 2), rng.uniform(-2, 2);
    u << rng.uniform(-1, 1);
    const VectorXd a = predict_step(model, x, u);
    const VectorXd b = predict_step(loaded, x, u);
    CHECK((a - b).norm() <= 1e-12 * std::max(1.0, a.norm()));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("model loading validates its inputs") {
  const auto dir = std::filesystem::temp_directory_path() / "kpid_model_bad";
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_model(dir), std::runtime_error);

  std::filesystem::create_directories(dir);
  std::ofstream(dir / "meta") << "format_version=1\nkernel=gaussian_rbf\n";
  CHECK_THROWS_WITH_AS(load_model(dir), doctest::Contains("missing key"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training rejects invalid arguments") {
  const SnapshotDataset d = random_snapshots(3, 2, 1, 121);
  CHECK_THROWS_AS(train(d, KernelSpec{KernelKind::GaussianRBF, 20.0}, -1.0),
                  std::invalid_argument);
  SnapshotDataset bad = d;
  bad.dims.M = 4;
  CHECK_THROWS_AS(train(bad, KernelSpec{KernelKind::GaussianRBF, 20.0}, 1e-6),
                  std::invalid_argument);
}
