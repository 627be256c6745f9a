#include "kpid/systems.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kpid {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_box(const std::vector<Interval>& box, Eigen::Index want, const char* what) {
  if (static_cast<Eigen::Index>(box.size()) != want) {
    throw std::invalid_argument(std::string(what) + " box has " + std::to_string(box.size()) +
                                " intervals, system needs " + std::to_string(want));
  }
  for (const auto& iv : box) {
    if (!(iv.lo <= iv.hi)) {
      throw std::invalid_argument(std::string(what) + " box interval is empty: [" +
                                  std::to_string(iv.lo) + ", " + std::to_string(iv.hi) + "]");
    }
  }
}

std::string echo_state(const Eigen::VectorXd& x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  return os.str();
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index * 0x9E3779B97F4A7C15ULL + 0x243F6A8885A308D3ULL));
}

Eigen::Vector2d duffing_rhs(const Eigen::Vector2d& x, double u, const DuffingParams& p) {
  Eigen::Vector2d dx;
  dx(0) = x(1);
  dx(1) = -p.delta_c * x(1) - p.beta_c * x(0) - p.alpha * x(0) * x(0) * x(0) +
          (2.0 + std::sin(x(0))) * u;
  return dx;
}

Eigen::VectorXd augmented_duffing_rhs(const Eigen::VectorXd& x, double u) {
  if (x.size() != 5) {
    throw std::invalid_argument("augmented Duffing state must have 5 components, got " +
                                std::to_string(x.size()));
  }
  const DuffingParams p{x(2), x(3), x(4)};
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(5);
  dx.head<2>() = duffing_rhs(x.head<2>(), u, p);
  return dx;
}

ContinuousSystem duffing_system(const DuffingParams& p) {
  ContinuousSystem sys;
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.rhs = [p](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return duffing_rhs(x.head<2>(), u(0), p);
  };
  return sys;
}

ContinuousSystem augmented_duffing_system() {
  ContinuousSystem sys;
  sys.state_dim = 5;
  sys.input_dim = 1;
  sys.param_dim = 3;
  sys.rhs = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return augmented_duffing_rhs(x, u(0));
  };
  return sys;
}

Eigen::VectorXd rk4_step(const ContinuousSystem& sys, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
  const Eigen::VectorXd k1 = sys.rhs(x, u);
  const Eigen::VectorXd k2 = sys.rhs(x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = sys.rhs(x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = sys.rhs(x + dt * k3, u);
  Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) {
    throw std::runtime_error("rk4_step: non-finite result from state " + echo_state(x));
  }
  return next;
}

DiscreteSystem discretize_rk4(const ContinuousSystem& sys, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize_rk4: dt must be positive");
  DiscreteSystem d;
  d.state_dim = sys.state_dim;
  d.input_dim = sys.input_dim;
  d.param_dim = sys.param_dim;
  d.step = [sys, dt](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return rk4_step(sys, x, u, dt);
  };
  return d;
}

DiscreteSystem linear_system(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != A.cols()) throw std::invalid_argument("linear_system: A must be square");
  if (B.rows() != A.rows()) {
    throw std::invalid_argument("linear_system: B has " + std::to_string(B.rows()) +
                                " rows, A has " + std::to_string(A.rows()));
  }
  DiscreteSystem sys;
  sys.state_dim = A.rows();
  sys.input_dim = B.cols();
  sys.step = [A, B](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return A * x + B * u;
  };
  return sys;
}

SnapshotDataset generate_training(const DiscreteSystem& sys, const SamplingConfig& cfg) {
  if (cfg.samples < 1) throw std::invalid_argument("generate_training: need samples >= 1");
  check_box(cfg.state_box, sys.state_dim, "state");
  check_box(cfg.control_box, sys.input_dim, "control");

  SnapshotDataset data;
  data.dims = DatasetDims{cfg.samples, sys.state_dim - sys.param_dim, sys.param_dim,
                          sys.input_dim};
  data.X.resize(sys.state_dim, cfg.samples);
  data.U.resize(sys.input_dim, cfg.samples);
  data.Y.resize(sys.state_dim, cfg.samples);

  for (Eigen::Index i = 0; i < cfg.samples; ++i) {
    SplitMix64 rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    for (Eigen::Index r = 0; r < sys.state_dim; ++r) {
      const auto& iv = cfg.state_box[static_cast<std::size_t>(r)];
      data.X(r, i) = rng.uniform(iv.lo, iv.hi);
    }
    for (Eigen::Index r = 0; r < sys.input_dim; ++r) {
      const auto& iv = cfg.control_box[static_cast<std::size_t>(r)];
      data.U(r, i) = rng.uniform(iv.lo, iv.hi);
    }
    data.Y.col(i) = sys.step(data.X.col(i), data.U.col(i));
  }
  return data;
}

SnapshotDataset generate_training(const ContinuousSystem& sys, const SamplingConfig& cfg) {
  return generate_training(discretize_rk4(sys, cfg.dt), cfg);
}

Eigen::MatrixXd sample_controls(Eigen::Index steps, const std::vector<Interval>& box,
                                std::uint64_t seed) {
  if (steps < 0) throw std::invalid_argument("sample_controls: steps must be nonnegative");
  Eigen::MatrixXd U(static_cast<Eigen::Index>(box.size()), steps);
  for (Eigen::Index i = 0; i < steps; ++i) {
    SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
      const auto& iv = box[static_cast<std::size_t>(r)];
      U(r, i) = rng.uniform(iv.lo, iv.hi);
    }
  }
  return U;
}

QueryDataset generate_query(const DiscreteSystem& sys, const Eigen::VectorXd& x0,
                            const Eigen::MatrixXd& controls) {
  if (x0.size() != sys.state_dim) {
    throw std::invalid_argument("generate_query: x0 has " + std::to_string(x0.size()) +
                                " components, system needs " + std::to_string(sys.state_dim));
  }
  if (controls.rows() != sys.input_dim) {
    throw std::invalid_argument("generate_query: control rows " + std::to_string(controls.rows()) +
                                " != input dimension " + std::to_string(sys.input_dim));
  }
  const Eigen::Index N = controls.cols();
  QueryDataset q;
  q.Z.resize(sys.state_dim, N);
  q.U = controls;
  q.W.resize(sys.state_dim, N);
  Eigen::VectorXd z = x0;
  for (Eigen::Index i = 0; i < N; ++i) {
    q.Z.col(i) = z;
    Eigen::VectorXd w = sys.step(z, controls.col(i));
    if (!w.allFinite()) {
      throw std::runtime_error("generate_query: trajectory diverged at step " + std::to_string(i));
    }
    q.W.col(i) = w;
    z = w;
  }
  return q;
}

QueryDataset generate_query(const ContinuousSystem& sys, const Eigen::VectorXd& x0,
                            const Eigen::MatrixXd& controls, double dt) {
  return generate_query(discretize_rk4(sys, dt), x0, controls);
}

}  // namespace kpid
