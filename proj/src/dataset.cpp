#include "kpid/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include "kpid/text_io.hpp"

namespace kpid {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

struct DatasetHeader {
  Eigen::Index n = 0, p = 0, m = 0;
};

DatasetHeader parse_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path.string());
  DatasetHeader h;
  long n = -1, p = -1, m = -1;
  if (std::sscanf(line.c_str(), "# kpid-dataset v1, n=%ld, p=%ld, m=%ld", &n, &p, &m) != 3 ||
      n < 0 || p < 0 || m < 0) {
    throw std::runtime_error(path.string() + ": bad dataset header: '" + line + "'");
  }
  h.n = n;
  h.p = p;
  h.m = m;
  return h;
}

std::string header_line(Eigen::Index n, Eigen::Index p, Eigen::Index m) {
  return "# kpid-dataset v1, n=" + std::to_string(n) + ", p=" + std::to_string(p) +
         ", m=" + std::to_string(m);
}

void write_triples(std::ostream& out, const Eigen::MatrixXd& X, const Eigen::MatrixXd& U,
                   const Eigen::MatrixXd& Y) {
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (Eigen::Index r = 0; r < X.rows(); ++r) out << format_double(X(r, i)) << ',';
    for (Eigen::Index r = 0; r < U.rows(); ++r) out << format_double(U(r, i)) << ',';
    for (Eigen::Index r = 0; r < Y.rows(); ++r) {
      out << format_double(Y(r, i));
      if (r + 1 < Y.rows()) out << ',';
    }
    out << '\n';
  }
}

}  // namespace

void SnapshotDataset::validate() const {
  require(dims.M >= 1, "snapshot dataset: need at least one snapshot");
  require(dims.n >= 1, "snapshot dataset: state dimension must be >= 1");
  require(dims.p >= 0 && dims.m >= 0, "snapshot dataset: negative dimension");
  require(X.cols() == dims.M && U.cols() == dims.M && Y.cols() == dims.M,
          "snapshot dataset: X, U, Y must all have M = " + std::to_string(dims.M) + " columns");
  require(X.rows() == dims.n_aug() && Y.rows() == dims.n_aug(),
          "snapshot dataset: state rows must equal n+p = " + std::to_string(dims.n_aug()));
  require(U.rows() == dims.m,
          "snapshot dataset: control rows must equal m = " + std::to_string(dims.m));
}

void QueryDataset::validate() const {
  require(Z.cols() >= 1, "query dataset: need at least one sample");
  require(U.cols() == Z.cols() && W.cols() == Z.cols(),
          "query dataset: Z, U, W must have equal lengths");
  require(W.rows() == Z.rows(), "query dataset: Z and W must have the same state dimension");
}

void save_dataset_csv(const std::filesystem::path& path, const SnapshotDataset& data,
                      const std::vector<std::string>& comments) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out << header_line(data.dims.n, data.dims.p, data.dims.m) << '\n';
  for (const auto& c : comments) out << "# " << c << '\n';
  write_triples(out, data.X, data.U, data.Y);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

SnapshotDataset load_dataset_csv(const std::filesystem::path& path) {
  const DatasetHeader h = parse_header(path);
  const Eigen::MatrixXd table = read_matrix(path, ',');
  const Eigen::Index n_aug = h.n + h.p;
  const Eigen::Index want = 2 * n_aug + h.m;
  if (table.cols() != want) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(want) +
                             " columns per row, got " + std::to_string(table.cols()));
  }
  SnapshotDataset data;
  data.dims = DatasetDims{table.rows(), h.n, h.p, h.m};
  data.X = table.leftCols(n_aug).transpose();
  data.U = table.middleCols(n_aug, h.m).transpose();
  data.Y = table.rightCols(n_aug).transpose();
  data.validate();
  return data;
}

void save_query_csv(const std::filesystem::path& path, const QueryDataset& data,
                    const std::vector<std::string>& comments) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out << header_line(data.Z.rows(), 0, data.U.rows()) << '\n';
  for (const auto& c : comments) out << "# " << c << '\n';
  write_triples(out, data.Z, data.U, data.W);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

QueryDataset load_query_csv(const std::filesystem::path& path) {
  const DatasetHeader h = parse_header(path);
  if (h.p != 0) {
    throw std::runtime_error(path.string() + ": query dataset must have p=0, got p=" +
                             std::to_string(h.p));
  }
  const Eigen::MatrixXd table = read_matrix(path, ',');
  const Eigen::Index want = 2 * h.n + h.m;
  if (table.cols() != want) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(want) +
                             " columns per row, got " + std::to_string(table.cols()));
  }
  QueryDataset q;
  q.Z = table.leftCols(h.n).transpose();
  q.U = table.middleCols(h.n, h.m).transpose();
  q.W = table.rightCols(h.n).transpose();
  q.validate();
  return q;
}

}  // namespace kpid
