#include "kpid/text_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kpid {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& mat, char sep) {
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      if (j > 0) out << sep;
      out << format_double(mat(i, j));
    }
    out << '\n';
  }
}

namespace {

std::vector<double> parse_row(const std::string& line, char sep, const std::filesystem::path& path,
                              std::size_t lineno) {
  std::vector<double> row;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t end = sep == ' ' ? line.find_first_of(" \t", pos) : line.find(sep, pos);
    if (end == std::string::npos) end = line.size();
    const std::string tok = line.substr(pos, end - pos);
    if (!tok.empty() || sep != ' ') {
      const char* begin = tok.c_str();
      char* stop = nullptr;
      const double v = std::strtod(begin, &stop);
      if (stop == begin) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": cannot parse number from '" + tok + "'");
      }
      row.push_back(v);
    }
    if (end == line.size()) break;
    pos = end + 1;
  }
  return row;
}

}  // namespace

Eigen::MatrixXd read_matrix(const std::filesystem::path& path, char sep) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(parse_row(line, sep, path, lineno));
    if (rows.size() > 1 && rows.back().size() != rows.front().size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": ragged row: expected " + std::to_string(rows.front().size()) +
                               " values, got " + std::to_string(rows.back().size()));
    }
  }
  Eigen::MatrixXd mat(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < mat.rows(); ++i)
    for (Eigen::Index j = 0; j < mat.cols(); ++j)
      mat(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return mat;
}

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& mat, char sep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  write_matrix(out, mat, sep);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

KeyValueMap read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  KeyValueMap kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_key_value_file(const std::filesystem::path& path, const KeyValueMap& kv,
                          const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  for (const auto& c : comments) out << "# " << c << '\n';
  for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace kpid
