#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>
#include <vector>

#include "kpid/dataset.hpp"
#include "kpid/operator.hpp"

namespace kpid {

// Concatenation (z', eta')': state first, candidate parameters last.
Eigen::VectorXd augment(const Eigen::VectorXd& z, const Eigen::VectorXd& eta);

struct MeshAxis {
  double lower = 0.0;
  double upper = 0.0;
  double spacing = 1.0;
};

// Axis-aligned grid of candidate parameter vectors. Nodes are enumerated in
// lexicographic order (first axis slowest); node values are computed as
// lower + index * spacing, never by repeated addition.
class ParameterMesh {
 public:
  explicit ParameterMesh(std::vector<MeshAxis> axes);

  Eigen::Index dim() const { return static_cast<Eigen::Index>(axes_.size()); }
  Eigen::Index size() const { return size_; }
  Eigen::Index axis_count(Eigen::Index axis) const { return counts_.at(static_cast<std::size_t>(axis)); }
  const std::vector<MeshAxis>& axes() const { return axes_; }

  Eigen::VectorXd node(Eigen::Index flat) const;

 private:
  std::vector<MeshAxis> axes_;
  std::vector<Eigen::Index> counts_;
  Eigen::Index size_ = 1;
};

// Mean squared one-step prediction error of the candidate eta over the query
// set: (1/N) sum_i |w_i - Fhat_(1..n)([z_i; eta], u_i)|^2. Predictions start
// from the measured states (teacher forcing), and only the first n output
// components are scored. Returns +infinity if any prediction is non-finite.
double query_mse(const FiniteRankModel& model, const QueryDataset& q, const Eigen::VectorXd& eta);

struct MeshScore {
  Eigen::VectorXd node;
  double mse = 0.0;       // +infinity marks a diverged candidate
  double distance = 0.0;  // Euclidean distance to the reference; NaN when none given
};

struct IdentificationResult {
  Eigen::VectorXd best_node;
  double best_mse = 0.0;
  std::vector<MeshScore> table;  // mesh enumeration order
};

// Brute-force scan of the mesh. The returned node attains the minimum MSE;
// ties go to the lexicographically smallest node. The optional reference
// parameter is used only to fill in the distance column of the table.
IdentificationResult identify(const FiniteRankModel& model, const QueryDataset& q,
                              const ParameterMesh& mesh,
                              const std::optional<Eigen::VectorXd>& reference = std::nullopt);

// (distance to truth, mse) pairs sorted by distance, ties by mse.
std::vector<std::pair<double, double>> mse_distance_table(const IdentificationResult& result,
                                                          const Eigen::VectorXd& truth);

}  // namespace kpid
