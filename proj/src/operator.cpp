#include "kpid/operator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kpid/text_io.hpp"

namespace kpid {

namespace {

constexpr double kPinvCutoff = 1e-12;      // relative singular value cutoff for G^+
constexpr double kReconTolerance = 1e-8;   // SVD reconstruction gate at training time

std::string kernel_kind_name(KernelKind kind) {
  return kind == KernelKind::GaussianRBF ? "gaussian_rbf" : "exponential_dot";
}

KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "gaussian_rbf") return KernelKind::GaussianRBF;
  if (name == "exponential_dot") return KernelKind::ExponentialDot;
  throw std::runtime_error("unknown kernel kind '" + name + "'");
}

}  // namespace

PseudoSvd pseudo_svd(const Eigen::MatrixXd& A) {
  if (!A.allFinite()) {
    throw std::invalid_argument("pseudo_svd: matrix has non-finite entries");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  PseudoSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Eigen::Index i = 0; i < out.W.cols(); ++i) {
    Eigen::Index j = 0;
    out.W.col(i).cwiseAbs().maxCoeff(&j);
    if (out.W(j, i) < 0.0) {
      out.W.col(i) = -out.W.col(i);
      if (i < out.V.cols()) out.V.col(i) = -out.V.col(i);
    }
  }
  return out;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel_cutoff,
                               Eigen::Index* rank_out) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_cutoff * s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      inv(i) = 1.0 / s(i);
      ++rank;
    }
  }
  if (rank_out) *rank_out = rank;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

void FiniteRankModel::finalize() {
  const Eigen::Index M = dims.M;
  const Eigen::Index n_aug = dims.n_aug();
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model: " + msg); };

  if (M < 1) fail("M must be >= 1");
  if (centers.rows() != n_aug || centers.cols() != M) fail("centers must be n_aug x M");
  if (D.rows() != n_aug || D.cols() != M) fail("D must be n_aug x M");
  if (Ubar.rows() != dims.m + 1 || Ubar.cols() != M) fail("Ubar must be (m+1) x M");
  if (!(Ubar.row(0).array() == 1.0).all()) fail("first row of Ubar must be all ones");
  if (W.rows() != M || W.cols() != M || V.rows() != M || V.cols() != M) {
    fail("W and V must be M x M");
  }
  if (Sigma.size() != M) fail("Sigma must have M entries");
  for (Eigen::Index i = 0; i < M; ++i) {
    if (!(Sigma(i) >= 0.0)) fail("Sigma must be nonnegative");
    if (i > 0 && Sigma(i) > Sigma(i - 1)) fail("Sigma must be nonincreasing");
  }
  if (op_matrix.rows() != M || op_matrix.cols() != M) fail("op_matrix must be M x M");

  prediction_map = ((D * V) * Sigma.asDiagonal()) * W.transpose();
}

FiniteRankModel train(const SnapshotDataset& data, const KernelSpec& kernel, double eps,
                      double truncation) {
  data.validate();
  if (eps < 0.0) throw std::invalid_argument("train: eps must be nonnegative");
  if (truncation < 0.0) throw std::invalid_argument("train: truncation must be nonnegative");

  FiniteRankModel model;
  model.kernel = kernel;
  model.eps = eps;
  model.dims = data.dims;
  model.centers = data.X;
  model.Ubar = embed_controls(data.U);
  model.D = data.X;

  const Eigen::Index M = data.dims.M;
  const Eigen::MatrixXd Gd = gram_domain(kernel, data.X, eps);
  const Eigen::MatrixXd Gb = gram_range(kernel, data.X, model.Ubar, eps);
  const Eigen::MatrixXd I = interaction(kernel, data.X, data.Y);

  // Matrix representation A = G_beta^+ I' G_d^+. The regularized Grams are
  // positive definite, so direct Cholesky solves replace the pseudoinverse.
  Eigen::Index rank_d = M;
  Eigen::Index rank_b = M;
  bool pinv_path = (eps == 0.0);
  Eigen::MatrixXd A;
  if (!pinv_path) {
    Eigen::LLT<Eigen::MatrixXd> llt_d(Gd);
    Eigen::LLT<Eigen::MatrixXd> llt_b(Gb);
    if (llt_d.info() == Eigen::Success && llt_b.info() == Eigen::Success) {
      // llt_d.solve(I) = G_d^{-1} I, so its transpose is I' G_d^{-1}.
      A = llt_b.solve(llt_d.solve(I).transpose());
    } else {
      pinv_path = true;  // regularized Gram still not numerically PD
    }
  }
  if (pinv_path) {
    const Eigen::MatrixXd Gd_pinv = pseudo_inverse(Gd, kPinvCutoff, &rank_d);
    const Eigen::MatrixXd Gb_pinv = pseudo_inverse(Gb, kPinvCutoff, &rank_b);
    A = Gb_pinv * I.transpose() * Gd_pinv;
  }
  model.used_pseudoinverse = pinv_path;
  model.op_matrix = A;

  PseudoSvd svd = pseudo_svd(A);
  model.W = std::move(svd.W);
  model.Sigma = std::move(svd.sigma);
  model.V = std::move(svd.V);

  model.recon_residual =
      (model.W * model.Sigma.asDiagonal() * model.V.transpose() - A).norm() /
      std::max(1.0, A.norm());
  if (model.recon_residual > kReconTolerance) {
    throw std::runtime_error("train: SVD reconstruction residual " +
                             std::to_string(model.recon_residual) + " exceeds tolerance");
  }

  if (truncation > 0.0 && M > 0) {
    const double cutoff = truncation * model.Sigma(0);
    for (Eigen::Index i = 0; i < M; ++i) {
      if (model.Sigma(i) < cutoff) model.Sigma(i) = 0.0;
    }
  }
  Eigen::Index nonzero = 0;
  for (Eigen::Index i = 0; i < M; ++i) {
    if (model.Sigma(i) > 0.0) ++nonzero;
  }
  model.effective_rank = std::min({rank_d, rank_b, nonzero});

  model.finalize();
  return model;
}

Eigen::VectorXd kernel_vector(const FiniteRankModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.dims.n_aug()) {
    throw std::invalid_argument("kernel_vector: state has " + std::to_string(x.size()) +
                                " components, model expects " +
                                std::to_string(model.dims.n_aug()));
  }
  const Eigen::Index M = model.dims.M;
  Eigen::VectorXd kx(M);
  for (Eigen::Index j = 0; j < M; ++j) {
    kx(j) = detail::kernel_eval(model.kernel, x, model.centers.col(j));
  }
  return kx;
}

Eigen::MatrixXd modes(const FiniteRankModel& model) { return model.D * model.V; }

SingularFunctionValue singular_functions(const FiniteRankModel& model, Eigen::Index i,
                                         const Eigen::VectorXd& x) {
  if (i < 0 || i >= model.dims.M) {
    throw std::out_of_range("singular_functions: index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(model.dims.M) + ")");
  }
  const Eigen::VectorXd kx = kernel_vector(model, x);
  SingularFunctionValue out;
  out.phi = model.V.col(i).dot(kx);
  out.psi = model.Ubar * model.W.col(i).cwiseProduct(kx);
  return out;
}

Eigen::MatrixXd output_matrix(const FiniteRankModel& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd kx = kernel_vector(model, x);
  return (model.prediction_map * kx.asDiagonal()) * model.Ubar.transpose();
}

Eigen::VectorXd predict_step(const FiniteRankModel& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u) {
  if (u.size() != model.dims.m) {
    throw std::invalid_argument("predict_step: control has " + std::to_string(u.size()) +
                                " components, model expects " + std::to_string(model.dims.m));
  }
  const ControlEmbedding ub(u);
  return output_matrix(model, x) * ub.ubar;
}

Eigen::MatrixXd predict_batch(const FiniteRankModel& model, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& U) {
  if (X.cols() != U.cols()) {
    throw std::invalid_argument("predict_batch: " + std::to_string(X.cols()) + " states vs " +
                                std::to_string(U.cols()) + " controls");
  }
  if (X.rows() != model.dims.n_aug() || U.rows() != model.dims.m) {
    throw std::invalid_argument("predict_batch: dimension mismatch with model");
  }
  const Eigen::Index M = model.dims.M;
  const Eigen::Index N = X.cols();
  Eigen::MatrixXd KX(M, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < M; ++j) {
      KX(j, i) = detail::kernel_eval(model.kernel, X.col(i), model.centers.col(j));
    }
  }
  // Column i of C is B(x_i) ubar_i, so predictions are prediction_map * C.
  const Eigen::MatrixXd C = KX.cwiseProduct(model.Ubar.transpose() * embed_controls(U));
  return model.prediction_map * C;
}

Eigen::MatrixXd predict_trajectory(const FiniteRankModel& model, const Eigen::VectorXd& x0,
                                   const Eigen::MatrixXd& controls) {
  if (x0.size() != model.dims.n_aug()) {
    throw std::invalid_argument("predict_trajectory: x0 has " + std::to_string(x0.size()) +
                                " components, model expects " +
                                std::to_string(model.dims.n_aug()));
  }
  const Eigen::Index N = controls.cols();
  Eigen::MatrixXd traj(model.dims.n_aug(), N + 1);
  traj.col(0) = x0;
  for (Eigen::Index k = 0; k < N; ++k) {
    traj.col(k + 1) = predict_step(model, traj.col(k), controls.col(k));
    if (!traj.col(k + 1).allFinite()) {
      throw std::runtime_error("predict_trajectory: non-finite state at step " +
                               std::to_string(k + 1));
    }
  }
  return traj;
}

DriftControl drift_and_control(const FiniteRankModel& model, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd out = output_matrix(model, x);
  return DriftControl{out.col(0), out.rightCols(model.dims.m)};
}

void save_model(const std::filesystem::path& dir, const FiniteRankModel& model) {
  std::filesystem::create_directories(dir);
  KeyValueMap meta;
  meta["format_version"] = "1";
  meta["kernel"] = kernel_kind_name(model.kernel.kind);
  meta["width"] = format_double(model.kernel.width);
  meta["eps"] = format_double(model.eps);
  meta["M"] = std::to_string(model.dims.M);
  meta["n"] = std::to_string(model.dims.n);
  meta["p"] = std::to_string(model.dims.p);
  meta["m"] = std::to_string(model.dims.m);
  write_key_value_file(dir / "meta", meta);
  save_matrix(dir / "X", model.centers, ',');
  save_matrix(dir / "U", model.Ubar, ',');
  save_matrix(dir / "D", model.D, ',');
  save_matrix(dir / "W", model.W, ',');
  save_matrix(dir / "V", model.V, ',');
  save_matrix(dir / "Sigma", model.Sigma, ',');
}

FiniteRankModel load_model(const std::filesystem::path& dir) {
  const KeyValueMap meta = read_key_value_file(dir / "meta");
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) {
      throw std::runtime_error((dir / "meta").string() + ": missing key '" + key + "'");
    }
    return it->second;
  };
  if (need("format_version") != "1") {
    throw std::runtime_error(dir.string() + ": unsupported model format version " +
                             need("format_version"));
  }

  FiniteRankModel model;
  model.kernel.kind = kernel_kind_from_name(need("kernel"));
  model.kernel.width = std::stod(need("width"));
  model.eps = std::stod(need("eps"));
  model.dims.M = std::stol(need("M"));
  model.dims.n = std::stol(need("n"));
  model.dims.p = std::stol(need("p"));
  model.dims.m = std::stol(need("m"));

  model.centers = read_matrix(dir / "X", ',');
  model.Ubar = read_matrix(dir / "U", ',');
  model.D = read_matrix(dir / "D", ',');
  model.W = read_matrix(dir / "W", ',');
  model.V = read_matrix(dir / "V", ',');
  const Eigen::MatrixXd sigma = read_matrix(dir / "Sigma", ',');
  if (sigma.cols() != 1) {
    throw std::runtime_error((dir / "Sigma").string() + ": expected a single column");
  }
  model.Sigma = sigma.col(0);

  model.op_matrix = model.W * model.Sigma.asDiagonal() * model.V.transpose();
  Eigen::Index nonzero = 0;
  for (Eigen::Index i = 0; i < model.Sigma.size(); ++i) {
    if (model.Sigma(i) > 0.0) ++nonzero;
  }
  model.effective_rank = nonzero;
  model.used_pseudoinverse = (model.eps == 0.0);

  model.finalize();
  return model;
}

}  // namespace kpid
