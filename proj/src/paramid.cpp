#include "kpid/paramid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kpid {

namespace {

// Lexicographic comparison of mesh nodes, used for deterministic tie-breaks.
bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

}  // namespace

Eigen::VectorXd augment(const Eigen::VectorXd& z, const Eigen::VectorXd& eta) {
  Eigen::VectorXd x(z.size() + eta.size());
  x.head(z.size()) = z;
  x.tail(eta.size()) = eta;
  return x;
}

ParameterMesh::ParameterMesh(std::vector<MeshAxis> axes) : axes_(std::move(axes)) {
  counts_.reserve(axes_.size());
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    const MeshAxis& ax = axes_[k];
    if (!(ax.spacing > 0.0) || !std::isfinite(ax.spacing)) {
      throw std::invalid_argument("mesh axis " + std::to_string(k) + ": spacing must be positive");
    }
    if (!(ax.lower <= ax.upper)) {
      throw std::invalid_argument("mesh axis " + std::to_string(k) + ": lower " +
                                  std::to_string(ax.lower) + " exceeds upper " +
                                  std::to_string(ax.upper));
    }
    // The 1e-9 forgives one-ulp shortfalls of (upper-lower)/spacing so that
    // real-arithmetic-exact endpoints stay in the mesh.
    Eigen::Index count =
        static_cast<Eigen::Index>(std::floor((ax.upper - ax.lower) / ax.spacing + 1e-9)) + 1;
    const double tol =
        1e-12 * std::max({1.0, std::abs(ax.lower), std::abs(ax.upper)});
    while (count > 1 && ax.lower + static_cast<double>(count - 1) * ax.spacing > ax.upper + tol) {
      --count;
    }
    counts_.push_back(count);
    size_ *= count;
  }
}

Eigen::VectorXd ParameterMesh::node(Eigen::Index flat) const {
  if (flat < 0 || flat >= size_) {
    throw std::out_of_range("mesh node " + std::to_string(flat) + " out of range [0, " +
                            std::to_string(size_) + ")");
  }
  Eigen::VectorXd v(dim());
  for (Eigen::Index k = dim() - 1; k >= 0; --k) {
    const Eigen::Index count = counts_[static_cast<std::size_t>(k)];
    const Eigen::Index idx = flat % count;
    flat /= count;
    const MeshAxis& ax = axes_[static_cast<std::size_t>(k)];
    v(k) = ax.lower + static_cast<double>(idx) * ax.spacing;
  }
  return v;
}

double query_mse(const FiniteRankModel& model, const QueryDataset& q, const Eigen::VectorXd& eta) {
  q.validate();
  const Eigen::Index n = q.Z.rows();
  const Eigen::Index N = q.size();
  if (n != model.dims.n || eta.size() != model.dims.p) {
    throw std::invalid_argument("query_mse: query dimension " + std::to_string(n) +
                                " + candidate dimension " + std::to_string(eta.size()) +
                                " does not match model (n=" + std::to_string(model.dims.n) +
                                ", p=" + std::to_string(model.dims.p) + ")");
  }
  Eigen::MatrixXd XA(model.dims.n_aug(), N);
  XA.topRows(n) = q.Z;
  XA.bottomRows(eta.size()).colwise() = eta;
  const Eigen::MatrixXd pred = predict_batch(model, XA, q.U);
  if (!pred.allFinite()) return std::numeric_limits<double>::infinity();
  return (q.W - pred.topRows(n)).squaredNorm() / static_cast<double>(N);
}

IdentificationResult identify(const FiniteRankModel& model, const QueryDataset& q,
                              const ParameterMesh& mesh,
                              const std::optional<Eigen::VectorXd>& reference) {
  if (mesh.dim() != model.dims.p) {
    throw std::invalid_argument("identify: mesh dimension " + std::to_string(mesh.dim()) +
                                " does not match model parameter dimension " +
                                std::to_string(model.dims.p));
  }
  if (reference && reference->size() != mesh.dim()) {
    throw std::invalid_argument("identify: reference parameter has wrong dimension");
  }

  IdentificationResult result;
  result.table.resize(static_cast<std::size_t>(mesh.size()));
  for (Eigen::Index i = 0; i < mesh.size(); ++i) {
    MeshScore& score = result.table[static_cast<std::size_t>(i)];
    score.node = mesh.node(i);
    score.mse = query_mse(model, q, score.node);
    score.distance = reference ? (score.node - *reference).norm()
                               : std::numeric_limits<double>::quiet_NaN();
  }

  // Deterministic reduction: minimum MSE, ties to the lexicographically
  // smallest node, independent of evaluation order.
  const MeshScore* best = nullptr;
  for (const MeshScore& s : result.table) {
    if (std::isinf(s.mse)) continue;
    if (!best || s.mse < best->mse || (s.mse == best->mse && lex_less(s.node, best->node))) {
      best = &s;
    }
  }
  if (!best) throw std::runtime_error("model diverges on all candidates");
  result.best_node = best->node;
  result.best_mse = best->mse;
  return result;
}

std::vector<std::pair<double, double>> mse_distance_table(const IdentificationResult& result,
                                                          const Eigen::VectorXd& truth) {
  std::vector<std::pair<double, double>> rows;
  rows.reserve(result.table.size());
  for (const MeshScore& s : result.table) {
    if (s.node.size() != truth.size()) {
      throw std::invalid_argument("mse_distance_table: truth dimension mismatch");
    }
    rows.emplace_back((s.node - truth).norm(), s.mse);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace kpid
