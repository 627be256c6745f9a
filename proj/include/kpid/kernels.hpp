#pragma once

#include <Eigen/Core>
#include <cmath>

namespace kpid {

enum class KernelKind { GaussianRBF, ExponentialDot };

// Scalar kernel selection. `width` is the Gaussian width sigma in
// k(x,y) = exp(-|x-y|^2 / sigma), or the scale rho in
// k(x,y) = exp(x'y / rho) for the exponential dot product kernel.
struct KernelSpec {
  KernelKind kind = KernelKind::GaussianRBF;
  double width = 20.0;
};

// Control embedding ubar = (1, u')'. The leading 1 carries the drift term of
// a control-affine map, so the first component is always exactly one.
struct ControlEmbedding {
  Eigen::VectorXd ubar;

  explicit ControlEmbedding(const Eigen::VectorXd& u);
};

namespace detail {

// Kernel evaluation on arbitrary Eigen expressions (no temporaries for
// matrix columns). All assemblers below route through this so that a matrix
// entry is bitwise identical to the corresponding eval_scalar call.
template <class A, class B>
inline double kernel_eval(const KernelSpec& k, const Eigen::MatrixBase<A>& x,
                          const Eigen::MatrixBase<B>& y) {
  if (k.kind == KernelKind::GaussianRBF) {
    return std::exp(-(x - y).squaredNorm() / k.width);
  }
  return std::exp(x.dot(y) / k.width);
}

}  // namespace detail

double eval_scalar(const KernelSpec& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Inner product of two vector-valued kernel sections,
// <K_{x_i,ubar_i}, K_{x_j,ubar_j}>_H = k(x_i, x_j) * (ubar_i' ubar_j).
// The factorization holds because the operator-valued kernel is a diagonal of
// identical scalar kernels.
double eval_vv_inner(const KernelSpec& k, const Eigen::VectorXd& x_i, const ControlEmbedding& u_i,
                     const Eigen::VectorXd& x_j, const ControlEmbedding& u_j);

// Stack raw controls (m x M) into embeddings (m+1 x M) with a leading row of ones.
Eigen::MatrixXd embed_controls(const Eigen::MatrixXd& U);

// Gram matrix of the domain kernel sections, (k(x_i, x_j))_ij + eps * Id.
// Columns of X are the points. Assembled by symmetry, so the result is
// exactly symmetric.
Eigen::MatrixXd gram_domain(const KernelSpec& k, const Eigen::MatrixXd& X, double eps);

// Gram matrix of the range (vector-valued) kernel sections,
// (k(x_i, x_j) * ubar_i' ubar_j)_ij + eps * Id. Ubar is (m+1) x M with unit
// first row.
Eigen::MatrixXd gram_range(const KernelSpec& k, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Ubar, double eps);

// Interaction matrix between centers and successor states,
// I(i, j) = k(x_i, y_j). Never regularized.
Eigen::MatrixXd interaction(const KernelSpec& k, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y);

}  // namespace kpid
