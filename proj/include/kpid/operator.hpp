#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <utility>

#include "kpid/dataset.hpp"
#include "kpid/kernels.hpp"

namespace kpid {

struct PseudoSvd {
  Eigen::MatrixXd W;      // left singular vectors, orthonormal columns
  Eigen::VectorXd sigma;  // nonincreasing, nonnegative
  Eigen::MatrixXd V;      // right singular vectors, orthonormal columns
};

// SVD with a deterministic sign convention: the largest-magnitude entry of
// each left singular vector is made positive (ties broken by lowest index).
// Reconstruction W * diag(sigma) * V' = A is unaffected.
PseudoSvd pseudo_svd(const Eigen::MatrixXd& A);

// Moore-Penrose pseudoinverse through an SVD, dropping singular values below
// rel_cutoff * sigma_max. Reports the retained rank through rank_out.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel_cutoff,
                               Eigen::Index* rank_out = nullptr);

// Finite-rank kernel model of a control-affine discrete-time system. Holds
// everything needed to evaluate the one-step predictor
//   F(x, u) = D V diag(Sigma) W' B(x) (1, u')',
// where B(x) is the M x (m+1) matrix with row j = k(x, x_j) * ubar_j'.
struct FiniteRankModel {
  KernelSpec kernel;
  double eps = 0.0;
  DatasetDims dims;
  Eigen::MatrixXd centers;  // n_aug x M training states
  Eigen::MatrixXd Ubar;     // (m+1) x M control embeddings, first row all ones
  Eigen::MatrixXd D;        // n_aug x M, column j = x_j
  Eigen::MatrixXd W;        // M x M
  Eigen::MatrixXd V;        // M x M
  Eigen::VectorXd Sigma;    // M, nonincreasing

  // Matrix representation G_beta^+ I' G_d^+ of the projected operator. Set
  // from the Gram computation by train(); reconstructed as W diag(Sigma) V'
  // after loading from disk.
  Eigen::MatrixXd op_matrix;

  Eigen::Index effective_rank = 0;
  double recon_residual = 0.0;       // |W diag(Sigma) V' - op_matrix|_F, relative
  bool used_pseudoinverse = false;   // true when the Grams were inverted via SVD cutoff

  // Cached D V diag(Sigma) W' (n_aug x M); all prediction paths use it.
  Eigen::MatrixXd prediction_map;

  // Validates the invariants above and recomputes prediction_map. Must be
  // called after any direct mutation of the factor matrices.
  void finalize();
};

// Fits the finite-rank representation from snapshot data.
//
// With eps > 0 the regularized Gram matrices are positive definite and are
// inverted by Cholesky solves; with eps = 0 the Moore-Penrose pseudoinverse
// with relative cutoff 1e-12 is used instead. An optional truncation drops
// singular values below truncation * sigma_max (off by default).
FiniteRankModel train(const SnapshotDataset& data, const KernelSpec& kernel, double eps,
                      double truncation = 0.0);

// Kernel section values k(x, x_j) against every training center.
Eigen::VectorXd kernel_vector(const FiniteRankModel& model, const Eigen::VectorXd& x);

// Modes xi = D V (n_aug x M).
Eigen::MatrixXd modes(const FiniteRankModel& model);

struct SingularFunctionValue {
  double phi = 0.0;      // left pseudo-singular function value at x
  Eigen::VectorXd psi;   // right pseudo-singular function value at x, length m+1
};

// phi_i(x) = sum_j V(j,i) k(x, x_j); psi_i(x) = sum_j W(j,i) k(x, x_j) ubar_j.
// The index i is zero-based.
SingularFunctionValue singular_functions(const FiniteRankModel& model, Eigen::Index i,
                                         const Eigen::VectorXd& x);

// The n_aug x (m+1) map D V diag(Sigma) W' B(x); first column is the drift
// estimate, the remaining m columns the control effectiveness.
Eigen::MatrixXd output_matrix(const FiniteRankModel& model, const Eigen::VectorXd& x);

Eigen::VectorXd predict_step(const FiniteRankModel& model, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u);

// One-step predictions for many (state, control) columns at once.
Eigen::MatrixXd predict_batch(const FiniteRankModel& model, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& U);

// Rolls the predictor for controls.cols() steps; column 0 of the result is
// x0. Throws with the step index if a state goes non-finite.
Eigen::MatrixXd predict_trajectory(const FiniteRankModel& model, const Eigen::VectorXd& x0,
                                   const Eigen::MatrixXd& controls);

struct DriftControl {
  Eigen::VectorXd drift;    // f(x) estimate, n_aug
  Eigen::MatrixXd control;  // g(x) estimate, n_aug x m
};

DriftControl drift_and_control(const FiniteRankModel& model, const Eigen::VectorXd& x);

// Model directory layout: `meta` (key=value: format version, kernel kind,
// width, eps, M, n, p, m) plus CSV matrices `X`, `U`, `D`, `W`, `V` and the
// vector `Sigma`, all with 17 significant digits. Loading reproduces
// predict_step bit for bit.
void save_model(const std::filesystem::path& dir, const FiniteRankModel& model);
FiniteRankModel load_model(const std::filesystem::path& dir);

}  // namespace kpid
