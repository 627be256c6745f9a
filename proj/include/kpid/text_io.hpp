#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace kpid {

// 17 significant digits: enough for a lossless double round trip.
std::string format_double(double v);

void write_matrix(std::ostream& out, const Eigen::MatrixXd& mat, char sep);

// Reads a rectangular table of doubles. Lines starting with '#' are skipped.
// `sep` entries are split on that character; whitespace-separated otherwise.
Eigen::MatrixXd read_matrix(const std::filesystem::path& path, char sep);

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& mat, char sep);

using KeyValueMap = std::map<std::string, std::string>;

// Plain key=value text, one pair per line, '#' comments skipped.
KeyValueMap read_key_value_file(const std::filesystem::path& path);
void write_key_value_file(const std::filesystem::path& path, const KeyValueMap& kv,
                          const std::vector<std::string>& comments = {});

}  // namespace kpid
