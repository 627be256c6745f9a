#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "kpid/dataset.hpp"

namespace kpid {

// splitmix64 (Steele, Lea, Flood): fully specified 64-bit generator, so
// datasets reproduce bit for bit on any platform. Uniform doubles are built
// from the top 53 bits.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

 private:
  std::uint64_t state_;
};

// Seed of the decorrelated stream for sample `index`; samples can be drawn
// independently of each other in any order.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

struct DuffingParams {
  double alpha = 1.0;    // cubic stiffness
  double beta_c = -1.0;  // linear stiffness
  double delta_c = 0.0;  // damping
};

struct ContinuousSystem {
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  Eigen::Index param_dim = 0;  // trailing state components that are constant parameters
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> rhs;
};

struct DiscreteSystem {
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  Eigen::Index param_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> step;
};

// Controlled Duffing oscillator:
//   x1' = x2
//   x2' = -delta_c x2 - beta_c x1 - alpha x1^3 + (2 + sin x1) u
Eigen::Vector2d duffing_rhs(const Eigen::Vector2d& x, double u, const DuffingParams& p);

// Duffing with (alpha, beta_c, delta_c) carried as states 3..5; the
// parameter components have zero drift and zero control effectiveness.
Eigen::VectorXd augmented_duffing_rhs(const Eigen::VectorXd& x, double u);

ContinuousSystem duffing_system(const DuffingParams& p);
ContinuousSystem augmented_duffing_system();

// One classical RK4 step with the control held constant across substeps.
Eigen::VectorXd rk4_step(const ContinuousSystem& sys, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt);

DiscreteSystem discretize_rk4(const ContinuousSystem& sys, double dt);

// Exact discrete map x+ = A x + B u, used as a ground-truth oracle.
DiscreteSystem linear_system(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct SamplingConfig {
  Eigen::Index samples = 0;
  std::vector<Interval> state_box;    // one interval per (augmented) state component
  std::vector<Interval> control_box;  // one interval per control component
  double dt = 0.1;
  std::uint64_t seed = 0;
};

// Draws `samples` i.i.d. uniform states and controls from the boxes and maps
// each through one step of the system. Deterministic given the seed.
SnapshotDataset generate_training(const DiscreteSystem& sys, const SamplingConfig& cfg);
SnapshotDataset generate_training(const ContinuousSystem& sys, const SamplingConfig& cfg);

// Per-step i.i.d. uniform control sequence (m x steps).
Eigen::MatrixXd sample_controls(Eigen::Index steps, const std::vector<Interval>& box,
                                std::uint64_t seed);

// Rolls the system from x0 under the given control columns and records the
// trajectory as (z_i, u_i, w_i = z_{i+1}) triples.
QueryDataset generate_query(const DiscreteSystem& sys, const Eigen::VectorXd& x0,
                            const Eigen::MatrixXd& controls);
QueryDataset generate_query(const ContinuousSystem& sys, const Eigen::VectorXd& x0,
                            const Eigen::MatrixXd& controls, double dt);

}  // namespace kpid
