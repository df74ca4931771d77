#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfgcn/diagnostics.hpp"

namespace mfgcn {

/// CSV: `# config_hash=<hash>` line, `t,value` header, rows in %.17g.
void write_series(const std::filesystem::path& file, const std::string& hash, const Series& s);
/// Same layout with an `x,value` header for grid functions.
void write_field(const std::filesystem::path& file, const std::string& hash, std::span<const double> values, double h);

struct SeriesFile {
  std::string hash;
  Series series;
};
SeriesFile read_series(const std::filesystem::path& file);

/// One JSON object per line; every record carries `task` and `metrics`.
class NdjsonWriter {
 public:
  NdjsonWriter(const std::filesystem::path& file, std::string hash);
  void write(const std::string& task, const nlohmann::ordered_json& metrics, const nlohmann::ordered_json& extra = nullptr);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::string hash_;
  std::ofstream out_;
};

struct RunRecord {
  std::string config_hash;
  std::string task;
  double wall_seconds = 0.0;
  std::vector<std::filesystem::path> manifest;
  std::vector<double> residuals;
  int exit_code = 0;
  std::string message;
};

}  // namespace mfgcn
