// kpid command line front end: dataset generation, training, identification,
// rollouts, and the end-to-end experiment sweep.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kpid/dataset.hpp"
#include "kpid/operator.hpp"
#include "kpid/paramid.hpp"
#include "kpid/systems.hpp"
#include "kpid/text_io.hpp"

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LockError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Advisory per-directory lock; one kpid command per output directory.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".kpid-lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f) {
      throw LockError("output directory is locked by another run (remove " + path_.string() +
                      " if stale)");
    }
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

// Fully resolved run configuration. Defaults reproduce the reference Duffing
// experiment at desk scale.
struct RunConfig {
  std::string training_data;
  std::string query_data;
  std::string model_dir;
  std::string output_dir;

  std::string kernel = "gaussian";
  double width = 20.0;
  double eps = 1e-6;
  double truncation = 0.0;

  long samples = 2000;
  std::uint64_t seed = 1;
  double dt = 0.1;
  std::string state_box = "-3:3,-3:3,-3:3,-3:3,-3:3";
  std::string control_box = "-2:2";

  long query_steps = 50;
  std::uint64_t query_seed = 2;
  std::string query_x0 = "1,0";
  std::string truth = "1,-1,0";

  std::string mesh = "-3:3:0.5,-3:3:0.5,-3:3:0.5";
  std::string mesh_offgrid = "-3.3:2.7:0.5,-3.3:2.7:0.5,-3.3:2.7:0.5";
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(sep, pos);
    if (end == std::string::npos) end = text.size();
    parts.push_back(text.substr(pos, end - pos));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return parts;
}

double parse_num(const std::string& tok, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse number '" + tok + "' in " + what);
  }
}

VectorXd parse_vector(const std::string& text, const std::string& what) {
  if (text.empty()) return VectorXd{};
  const auto parts = split(text, ',');
  VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = parse_num(parts[i], what);
  return v;
}

std::vector<kpid::Interval> parse_box(const std::string& text, const std::string& what) {
  std::vector<kpid::Interval> box;
  for (const auto& part : split(text, ',')) {
    const auto bounds = split(part, ':');
    if (bounds.size() != 2) {
      throw std::invalid_argument(what + ": expected lo:hi, got '" + part + "'");
    }
    box.push_back({parse_num(bounds[0], what), parse_num(bounds[1], what)});
  }
  return box;
}

std::vector<kpid::MeshAxis> parse_mesh(const std::string& text) {
  std::vector<kpid::MeshAxis> axes;
  for (const auto& part : split(text, ',')) {
    const auto fields = split(part, ':');
    if (fields.size() != 3) {
      throw std::invalid_argument("mesh: expected lo:hi:step, got '" + part + "'");
    }
    axes.push_back({parse_num(fields[0], "mesh"), parse_num(fields[1], "mesh"),
                    parse_num(fields[2], "mesh")});
  }
  return axes;
}

kpid::KernelSpec kernel_from(const RunConfig& cfg) {
  kpid::KernelSpec spec;
  if (cfg.kernel == "gaussian") {
    spec.kind = kpid::KernelKind::GaussianRBF;
  } else if (cfg.kernel == "expdot") {
    spec.kind = kpid::KernelKind::ExponentialDot;
  } else {
    throw std::invalid_argument("unknown kernel '" + cfg.kernel + "' (gaussian or expdot)");
  }
  spec.width = cfg.width;
  return spec;
}

kpid::KeyValueMap to_key_values(const RunConfig& c) {
  kpid::KeyValueMap kv;
  kv["training_data"] = c.training_data;
  kv["query_data"] = c.query_data;
  kv["model_dir"] = c.model_dir;
  kv["output_dir"] = c.output_dir;
  kv["kernel"] = c.kernel;
  kv["width"] = kpid::format_double(c.width);
  kv["eps"] = kpid::format_double(c.eps);
  kv["truncation"] = kpid::format_double(c.truncation);
  kv["samples"] = std::to_string(c.samples);
  kv["seed"] = std::to_string(c.seed);
  kv["dt"] = kpid::format_double(c.dt);
  kv["state_box"] = c.state_box;
  kv["control_box"] = c.control_box;
  kv["query_steps"] = std::to_string(c.query_steps);
  kv["query_seed"] = std::to_string(c.query_seed);
  kv["query_x0"] = c.query_x0;
  kv["truth"] = c.truth;
  kv["mesh"] = c.mesh;
  kv["mesh_offgrid"] = c.mesh_offgrid;
  return kv;
}

void apply_file_config(RunConfig& c, const fs::path& path) {
  const kpid::KeyValueMap kv = kpid::read_key_value_file(path);
  auto str = [&](const char* key, std::string& out) {
    if (auto it = kv.find(key); it != kv.end()) out = it->second;
  };
  auto num = [&](const char* key, double& out) {
    if (auto it = kv.find(key); it != kv.end()) out = parse_num(it->second, key);
  };
  auto integer = [&](const char* key, auto& out) {
    if (auto it = kv.find(key); it != kv.end())
      out = static_cast<std::decay_t<decltype(out)>>(std::stoll(it->second));
  };
  str("training_data", c.training_data);
  str("query_data", c.query_data);
  str("model_dir", c.model_dir);
  str("output_dir", c.output_dir);
  str("kernel", c.kernel);
  num("width", c.width);
  num("eps", c.eps);
  num("truncation", c.truncation);
  integer("samples", c.samples);
  integer("seed", c.seed);
  num("dt", c.dt);
  str("state_box", c.state_box);
  str("control_box", c.control_box);
  integer("query_steps", c.query_steps);
  integer("query_seed", c.query_seed);
  str("query_x0", c.query_x0);
  str("truth", c.truth);
  str("mesh", c.mesh);
  str("mesh_offgrid", c.mesh_offgrid);
  for (const auto& [key, value] : kv) {
    static const kpid::KeyValueMap known = to_key_values(RunConfig{});
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

void write_resolved_config(const fs::path& dir, const RunConfig& cfg) {
  kpid::write_key_value_file(dir / "config_resolved", to_key_values(cfg),
                             {"kpid resolved configuration"});
}

void write_dat(const fs::path& path, const MatrixXd& columns,
               const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  for (const auto& c : comments) out << "# " << c << '\n';
  kpid::write_matrix(out, columns, ' ');
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MatrixXd with_time_column(const MatrixXd& traj, double dt) {
  MatrixXd table(traj.cols(), traj.rows() + 1);
  for (Eigen::Index k = 0; k < traj.cols(); ++k) {
    table(k, 0) = static_cast<double>(k) * dt;
    table.row(k).tail(traj.rows()) = traj.col(k).transpose();
  }
  return table;
}

// Shared pieces ------------------------------------------------------------

kpid::QueryDataset make_query(const RunConfig& cfg) {
  const VectorXd truth = parse_vector(cfg.truth, "truth");
  if (truth.size() != 3) throw std::invalid_argument("truth must have 3 components");
  const VectorXd x0 = parse_vector(cfg.query_x0, "query_x0");
  if (x0.size() != 2) throw std::invalid_argument("query_x0 must have 2 components");
  const kpid::DuffingParams params{truth(0), truth(1), truth(2)};
  const MatrixXd controls = kpid::sample_controls(
      cfg.query_steps, parse_box(cfg.control_box, "control_box"), cfg.query_seed);
  return kpid::generate_query(kpid::duffing_system(params), x0, controls, cfg.dt);
}

void run_identify(const kpid::FiniteRankModel& model, const kpid::QueryDataset& query,
                  const std::vector<kpid::MeshAxis>& axes,
                  const std::optional<VectorXd>& truth, const fs::path& out_dir,
                  const std::string& suffix) {
  const kpid::ParameterMesh mesh(axes);
  const kpid::IdentificationResult result = kpid::identify(model, query, mesh, truth);

  kpid::KeyValueMap kv;
  std::string node_text;
  for (Eigen::Index i = 0; i < result.best_node.size(); ++i) {
    if (i) node_text += ',';
    node_text += kpid::format_double(result.best_node(i));
  }
  kv["best_node"] = node_text;
  kv["best_mse"] = kpid::format_double(result.best_mse);
  kv["node_count"] = std::to_string(mesh.size());
  long finite = 0;
  for (const auto& s : result.table) finite += std::isfinite(s.mse) ? 1 : 0;
  kv["finite_count"] = std::to_string(finite);
  kpid::write_key_value_file(out_dir / ("result" + suffix), kv);

  if (truth) {
    const auto rows = kpid::mse_distance_table(result, *truth);
    MatrixXd table(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      table(static_cast<Eigen::Index>(i), 0) = rows[i].first;
      table(static_cast<Eigen::Index>(i), 1) = rows[i].second;
    }
    write_dat(out_dir / ("mse_vs_distance" + suffix + ".dat"), table,
              {"columns: distance mse"});
  }
  std::cout << "identified" << suffix << ": best_node=" << node_text
            << " best_mse=" << kpid::format_double(result.best_mse) << "\n";
}

void run_rollout(const kpid::FiniteRankModel& model, const RunConfig& cfg,
                 const VectorXd& param_init, const MatrixXd& controls,
                 const fs::path& out_dir) {
  const VectorXd truth = parse_vector(cfg.truth, "truth");
  const VectorXd x0 = parse_vector(cfg.query_x0, "query_x0");
  const kpid::DuffingParams params{truth(0), truth(1), truth(2)};
  const kpid::ContinuousSystem sys = kpid::duffing_system(params);
  const Eigen::Index steps = controls.cols();

  MatrixXd true_traj(5, steps + 1);
  true_traj.col(0).head(2) = x0;
  true_traj.col(0).tail(3) = truth;
  for (Eigen::Index k = 0; k < steps; ++k) {
    true_traj.col(k + 1).head(2) =
        kpid::rk4_step(sys, true_traj.col(k).head(2), controls.col(k), cfg.dt);
    true_traj.col(k + 1).tail(3) = truth;
  }

  const MatrixXd pred = kpid::predict_trajectory(model, kpid::augment(x0, param_init), controls);

  const std::vector<std::string> cols = {"columns: time x1 x2 alpha beta delta"};
  write_dat(out_dir / "trajectory_true.dat", with_time_column(true_traj, cfg.dt), cols);
  write_dat(out_dir / "trajectory_pred.dat", with_time_column(pred, cfg.dt), cols);
  write_dat(out_dir / "trajectory_error.dat", with_time_column(true_traj - pred, cfg.dt), cols);

  const double worst = (true_traj - pred).topRows(2).cwiseAbs().maxCoeff();
  std::cout << "rollout: steps=" << steps
            << " max_state_error=" << kpid::format_double(worst) << "\n";
}

// Commands ------------------------------------------------------------------

void cmd_generate(const RunConfig& cfg, bool want_training, bool want_query) {
  if (!want_training && !want_query) {
    throw std::invalid_argument("generate: set training_data and/or query_data");
  }
  if (want_training) {
    const fs::path path = cfg.training_data;
    DirLock lock(path.parent_path().empty() ? "." : path.parent_path());
    kpid::SamplingConfig scfg;
    scfg.samples = cfg.samples;
    scfg.seed = cfg.seed;
    scfg.dt = cfg.dt;
    scfg.state_box = parse_box(cfg.state_box, "state_box");
    scfg.control_box = parse_box(cfg.control_box, "control_box");
    const kpid::SnapshotDataset data =
        kpid::generate_training(kpid::augmented_duffing_system(), scfg);
    kpid::save_dataset_csv(path, data,
                           {"system=duffing_augmented rng=splitmix64 seed=" +
                            std::to_string(cfg.seed) +
                            " dt=" + kpid::format_double(cfg.dt)});
    write_resolved_config(path.parent_path().empty() ? "." : path.parent_path(), cfg);
    std::cout << "wrote " << path.string() << " (" << cfg.samples << " snapshots)\n";
  }
  if (want_query) {
    const fs::path path = cfg.query_data;
    DirLock lock(path.parent_path().empty() ? "." : path.parent_path());
    const kpid::QueryDataset q = make_query(cfg);
    kpid::save_query_csv(path, q,
                         {"system=duffing truth=" + cfg.truth + " x0=" + cfg.query_x0 +
                          " rng=splitmix64 query_seed=" + std::to_string(cfg.query_seed) +
                          " dt=" + kpid::format_double(cfg.dt)});
    write_resolved_config(path.parent_path().empty() ? "." : path.parent_path(), cfg);
    std::cout << "wrote " << path.string() << " (" << cfg.query_steps << " steps)\n";
  }
}

void cmd_train(const RunConfig& cfg) {
  if (cfg.training_data.empty()) throw std::invalid_argument("train: training_data is required");
  if (cfg.model_dir.empty()) throw std::invalid_argument("train: model_dir is required");
  DirLock lock(cfg.model_dir);

  const kpid::SnapshotDataset data = kpid::load_dataset_csv(cfg.training_data);
  const auto start = std::chrono::steady_clock::now();
  const kpid::FiniteRankModel model = kpid::train(data, kernel_from(cfg), cfg.eps,
                                                  cfg.truncation);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
  kpid::save_model(cfg.model_dir, model);

  kpid::KeyValueMap report;
  report["M"] = std::to_string(model.dims.M);
  report["n"] = std::to_string(model.dims.n);
  report["p"] = std::to_string(model.dims.p);
  report["m"] = std::to_string(model.dims.m);
  report["effective_rank"] = std::to_string(model.effective_rank);
  report["recon_residual"] = kpid::format_double(model.recon_residual);
  report["pseudoinverse_path"] = model.used_pseudoinverse ? "1" : "0";
  kpid::write_key_value_file(fs::path(cfg.model_dir) / "report", report,
                             {"kpid training report",
                              "wall_seconds=" + kpid::format_double(wall)});
  write_resolved_config(cfg.model_dir, cfg);
  std::cout << "trained M=" << model.dims.M << " rank=" << model.effective_rank
            << " recon_residual=" << kpid::format_double(model.recon_residual) << "\n";
}

void cmd_identify(const RunConfig& cfg, bool offgrid) {
  if (cfg.model_dir.empty()) throw std::invalid_argument("identify: model_dir is required");
  if (cfg.query_data.empty()) throw std::invalid_argument("identify: query_data is required");
  if (cfg.output_dir.empty()) throw std::invalid_argument("identify: output_dir is required");
  DirLock lock(cfg.output_dir);

  const kpid::FiniteRankModel model = kpid::load_model(cfg.model_dir);
  const kpid::QueryDataset query = kpid::load_query_csv(cfg.query_data);
  std::optional<VectorXd> truth;
  if (!cfg.truth.empty()) truth = parse_vector(cfg.truth, "truth");
  run_identify(model, query, parse_mesh(offgrid ? cfg.mesh_offgrid : cfg.mesh), truth,
               cfg.output_dir, offgrid ? "_offgrid" : "");
  write_resolved_config(cfg.output_dir, cfg);
}

void cmd_rollout(const RunConfig& cfg, const std::string& params_text) {
  if (cfg.model_dir.empty()) throw std::invalid_argument("rollout: model_dir is required");
  if (cfg.output_dir.empty()) throw std::invalid_argument("rollout: output_dir is required");
  DirLock lock(cfg.output_dir);

  const kpid::FiniteRankModel model = kpid::load_model(cfg.model_dir);
  MatrixXd controls;
  if (!cfg.query_data.empty()) {
    controls = kpid::load_query_csv(cfg.query_data).U;
  } else {
    controls = kpid::sample_controls(cfg.query_steps, parse_box(cfg.control_box, "control_box"),
                                     cfg.query_seed);
  }
  const VectorXd params = parse_vector(params_text.empty() ? cfg.truth : params_text, "params");
  if (params.size() != model.dims.p) {
    throw std::invalid_argument("rollout: parameter initializer needs " +
                                std::to_string(model.dims.p) + " components");
  }
  run_rollout(model, cfg, params, controls, cfg.output_dir);
  write_resolved_config(cfg.output_dir, cfg);
}

void cmd_sweep(const RunConfig& base) {
  if (base.output_dir.empty()) throw std::invalid_argument("sweep: output_dir is required");
  RunConfig cfg = base;
  const fs::path out = cfg.output_dir;
  DirLock lock(out);

  cfg.training_data = (out / "training.csv").string();
  cfg.query_data = (out / "query.csv").string();
  cfg.model_dir = (out / "model").string();

  // Generate.
  kpid::SamplingConfig scfg;
  scfg.samples = cfg.samples;
  scfg.seed = cfg.seed;
  scfg.dt = cfg.dt;
  scfg.state_box = parse_box(cfg.state_box, "state_box");
  scfg.control_box = parse_box(cfg.control_box, "control_box");
  const kpid::SnapshotDataset data =
      kpid::generate_training(kpid::augmented_duffing_system(), scfg);
  kpid::save_dataset_csv(cfg.training_data, data,
                         {"system=duffing_augmented rng=splitmix64 seed=" +
                          std::to_string(cfg.seed)});
  const kpid::QueryDataset query = make_query(cfg);
  kpid::save_query_csv(cfg.query_data, query,
                       {"system=duffing truth=" + cfg.truth + " x0=" + cfg.query_x0 +
                        " rng=splitmix64 query_seed=" + std::to_string(cfg.query_seed)});

  // Train.
  const kpid::FiniteRankModel model = kpid::train(data, kernel_from(cfg), cfg.eps,
                                                  cfg.truncation);
  kpid::save_model(cfg.model_dir, model);
  std::cout << "trained M=" << model.dims.M
            << " recon_residual=" << kpid::format_double(model.recon_residual) << "\n";

  // Identify on the reference mesh and on the shifted mesh.
  const VectorXd truth = parse_vector(cfg.truth, "truth");
  run_identify(model, query, parse_mesh(cfg.mesh), truth, out, "");
  run_identify(model, query, parse_mesh(cfg.mesh_offgrid), truth, out, "_offgrid");

  // Trajectory comparison, parameters initialized at the identified node.
  const kpid::KeyValueMap result = kpid::read_key_value_file(out / "result");
  const VectorXd pihat = parse_vector(result.at("best_node"), "best_node");
  run_rollout(model, cfg, pihat, query.U, out);

  write_resolved_config(out, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel-based identification of control-affine systems with unknown parameters"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file")
      ->check(CLI::ExistingFile);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--kernel", cfg.kernel, "scalar kernel: gaussian or expdot");
    sub->add_option("--width", cfg.width, "kernel width");
    sub->add_option("--eps", cfg.eps, "Gram regularization");
    sub->add_option("--truncation", cfg.truncation, "relative singular value truncation");
    sub->add_option("--samples", cfg.samples, "training snapshot count");
    sub->add_option("--seed", cfg.seed, "training sampling seed");
    sub->add_option("--dt", cfg.dt, "integration time step");
    sub->add_option("--state-box", cfg.state_box, "per-axis lo:hi, comma separated");
    sub->add_option("--control-box", cfg.control_box, "per-axis lo:hi, comma separated");
    sub->add_option("--steps", cfg.query_steps, "query trajectory length");
    sub->add_option("--query-seed", cfg.query_seed, "query excitation seed");
    sub->add_option("--x0", cfg.query_x0, "query initial state, comma separated");
    sub->add_option("--truth", cfg.truth, "true parameters (reporting and truth rollouts)");
    sub->add_option("--mesh", cfg.mesh, "per-axis lo:hi:step, comma separated");
    sub->add_option("--mesh-offgrid", cfg.mesh_offgrid, "shifted mesh, lo:hi:step per axis");
  };

  CLI::App* generate = app.add_subcommand("generate", "sample training and/or query datasets");
  generate->add_option("--training", cfg.training_data, "training CSV to write");
  generate->add_option("--query", cfg.query_data, "query CSV to write");
  add_common(generate);

  CLI::App* train_cmd = app.add_subcommand("train", "fit a model from a training CSV");
  train_cmd->add_option("--data", cfg.training_data, "training CSV");
  train_cmd->add_option("--model-dir", cfg.model_dir, "model directory to write");
  add_common(train_cmd);

  CLI::App* identify_cmd = app.add_subcommand("identify", "brute-force parameter search");
  identify_cmd->add_option("--model-dir", cfg.model_dir, "model directory");
  identify_cmd->add_option("--query", cfg.query_data, "query CSV");
  identify_cmd->add_option("--out", cfg.output_dir, "output directory");
  bool offgrid = false;
  identify_cmd->add_flag("--offgrid", offgrid, "use the shifted mesh");
  add_common(identify_cmd);

  CLI::App* rollout_cmd = app.add_subcommand("rollout", "true vs predicted trajectory tables");
  rollout_cmd->add_option("--model-dir", cfg.model_dir, "model directory");
  rollout_cmd->add_option("--query", cfg.query_data, "query CSV supplying the controls");
  rollout_cmd->add_option("--out", cfg.output_dir, "output directory");
  std::string params_text;
  rollout_cmd->add_option("--params", params_text,
                          "initial parameter states (default: --truth)");
  add_common(rollout_cmd);

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "full experiment: generate, train, "
                                           "identify on- and off-grid, rollout");
  sweep_cmd->add_option("--out", cfg.output_dir, "output directory");
  add_common(sweep_cmd);

  // Parse once to capture --config, apply the file, then reparse so that
  // command line flags win over file values.
  try {
    app.parse(argc, argv);
    if (!config_path.empty()) {
      RunConfig from_file;
      apply_file_config(from_file, config_path);
      cfg = from_file;
      app.clear();
      app.parse(argc, argv);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid_argument: " << e.what() << "\n";
    return 2;
  }

  try {
    if (generate->parsed()) {
      cmd_generate(cfg, !cfg.training_data.empty(), !cfg.query_data.empty());
    } else if (train_cmd->parsed()) {
      cmd_train(cfg);
    } else if (identify_cmd->parsed()) {
      cmd_identify(cfg, offgrid);
    } else if (rollout_cmd->parsed()) {
      cmd_rollout(cfg, params_text);
    } else if (sweep_cmd->parsed()) {
      cmd_sweep(cfg);
    }
  } catch (const LockError& e) {
    std::cerr << "error: locked: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid_argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime_error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
