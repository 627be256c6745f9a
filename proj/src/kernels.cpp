#include "kpid/kernels.hpp"

#include <stdexcept>
#include <string>

namespace kpid {

namespace {

void check_width(const KernelSpec& k) {
  if (!(k.width > 0.0)) {
    throw std::invalid_argument("kernel width must be positive, got " + std::to_string(k.width));
  }
}

void check_same_length(const char* where, Eigen::Index a, Eigen::Index b) {
  if (a != b) {
    throw std::invalid_argument(std::string(where) + ": dimension mismatch: " +
                                std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

ControlEmbedding::ControlEmbedding(const Eigen::VectorXd& u) : ubar(u.size() + 1) {
  ubar(0) = 1.0;
  ubar.tail(u.size()) = u;
}

double eval_scalar(const KernelSpec& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  check_width(k);
  check_same_length("eval_scalar", x.size(), y.size());
  return detail::kernel_eval(k, x, y);
}

double eval_vv_inner(const KernelSpec& k, const Eigen::VectorXd& x_i, const ControlEmbedding& u_i,
                     const Eigen::VectorXd& x_j, const ControlEmbedding& u_j) {
  check_width(k);
  check_same_length("eval_vv_inner (state)", x_i.size(), x_j.size());
  check_same_length("eval_vv_inner (embedding)", u_i.ubar.size(), u_j.ubar.size());
  return detail::kernel_eval(k, x_i, x_j) * u_i.ubar.dot(u_j.ubar);
}

Eigen::MatrixXd embed_controls(const Eigen::MatrixXd& U) {
  Eigen::MatrixXd ubar(U.rows() + 1, U.cols());
  ubar.row(0).setOnes();
  ubar.bottomRows(U.rows()) = U;
  return ubar;
}

Eigen::MatrixXd gram_domain(const KernelSpec& k, const Eigen::MatrixXd& X, double eps) {
  check_width(k);
  if (eps < 0.0) throw std::invalid_argument("gram_domain: eps must be nonnegative");
  const Eigen::Index M = X.cols();
  Eigen::MatrixXd G(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (Eigen::Index j = i; j < M; ++j) {
      const double v = detail::kernel_eval(k, X.col(i), X.col(j));
      G(i, j) = v;
      G(j, i) = v;
    }
  }
  G.diagonal().array() += eps;
  return G;
}

Eigen::MatrixXd gram_range(const KernelSpec& k, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Ubar, double eps) {
  check_width(k);
  if (eps < 0.0) throw std::invalid_argument("gram_range: eps must be nonnegative");
  check_same_length("gram_range (columns)", X.cols(), Ubar.cols());
  if (Ubar.rows() < 1 || !(Ubar.row(0).array() == 1.0).all()) {
    throw std::invalid_argument("gram_range: first row of the control embeddings must be all ones");
  }
  const Eigen::Index M = X.cols();
  Eigen::MatrixXd G(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (Eigen::Index j = i; j < M; ++j) {
      const double v = detail::kernel_eval(k, X.col(i), X.col(j)) * Ubar.col(i).dot(Ubar.col(j));
      G(i, j) = v;
      G(j, i) = v;
    }
  }
  G.diagonal().array() += eps;
  return G;
}

Eigen::MatrixXd interaction(const KernelSpec& k, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y) {
  check_width(k);
  check_same_length("interaction (columns)", X.cols(), Y.cols());
  check_same_length("interaction (state dimension)", X.rows(), Y.rows());
  const Eigen::Index M = X.cols();
  Eigen::MatrixXd I(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    for (Eigen::Index j = 0; j < M; ++j) {
      I(i, j) = detail::kernel_eval(k, X.col(i), Y.col(j));
    }
  }
  return I;
}

}  // namespace kpid
