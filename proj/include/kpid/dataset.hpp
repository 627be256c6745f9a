#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace kpid {

struct DatasetDims {
  Eigen::Index M = 0;  // number of snapshots
  Eigen::Index n = 0;  // physical state dimension
  Eigen::Index p = 0;  // parameter (constant state) dimension
  Eigen::Index m = 0;  // control dimension

  Eigen::Index n_aug() const { return n + p; }
};

// Training corpus: one-step transitions (x_i, u_i, y_i) of the augmented
// system, one triple per column. Parameter components ride along as the
// last p entries of x and y.
struct SnapshotDataset {
  Eigen::MatrixXd X;  // n_aug x M
  Eigen::MatrixXd U;  // m x M
  Eigen::MatrixXd Y;  // n_aug x M
  DatasetDims dims;

  void validate() const;
};

// Query trajectory (z_i, u_i, w_i = z_{i+1}) recorded under the unknown
// parameter. States here are plain (not augmented).
struct QueryDataset {
  Eigen::MatrixXd Z;  // n x N
  Eigen::MatrixXd U;  // m x N
  Eigen::MatrixXd W;  // n x N

  Eigen::Index size() const { return Z.cols(); }
  void validate() const;
};

// CSV layout: a header line `# kpid-dataset v1, n=<n>, p=<p>, m=<m>`,
// optional further '#' comment lines, then one row per snapshot holding the
// x, u and y components in order, comma separated, 17 significant digits.
void save_dataset_csv(const std::filesystem::path& path, const SnapshotDataset& data,
                      const std::vector<std::string>& comments = {});
SnapshotDataset load_dataset_csv(const std::filesystem::path& path);

// Query datasets share the layout with p=0.
void save_query_csv(const std::filesystem::path& path, const QueryDataset& data,
                    const std::vector<std::string>& comments = {});
QueryDataset load_query_csv(const std::filesystem::path& path);

}  // namespace kpid
