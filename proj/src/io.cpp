#include "mfgcn/io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace mfgcn {

namespace {

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  return out;
}

void write_rows(std::ofstream& out, const std::string& hash, const char* header, std::size_t rows, auto&& row) {
  out << "# config_hash=" << hash << "\n" << header << "\n";
  char buf[64];
  for (std::size_t i = 0; i < rows; ++i) {
    auto [a, b] = row(i);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a, b);
    out << buf;
  }
  if (!out) throw Error("write failed");
}

}  // namespace

void write_series(const std::filesystem::path& file, const std::string& hash, const Series& s) {
  auto out = open_out(file);
  write_rows(out, hash, "t,value", s.size(), [&](std::size_t i) { return std::pair{s.t[i], s.value[i]}; });
}

void write_field(const std::filesystem::path& file, const std::string& hash, std::span<const double> values, double h) {
  auto out = open_out(file);
  write_rows(out, hash, "x,value", values.size(), [&](std::size_t i) { return std::pair{static_cast<double>(i) * h, values[i]}; });
}

SeriesFile read_series(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read " + file.string());
  SeriesFile out;
  std::string line;
  const std::string tag = "# config_hash=";
  if (!std::getline(in, line) || line.rfind(tag, 0) != 0) throw Error(file.string() + ": missing config_hash header");
  out.hash = line.substr(tag.size());
  if (!std::getline(in, line)) throw Error(file.string() + ": missing column header");
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(file.string() + ":" + std::to_string(lineno) + ": expected two columns");
    // from_chars, unlike stod, accepts subnormals
    double t = 0, v = 0;
    const char* end = line.data() + line.size();
    auto a = std::from_chars(line.data(), line.data() + comma, t);
    auto b = std::from_chars(line.data() + comma + 1, end, v);
    if (a.ec != std::errc() || a.ptr != line.data() + comma || b.ec != std::errc() || b.ptr != end)
      throw Error(file.string() + ":" + std::to_string(lineno) + ": not a number");
    out.series.push(t, v);
  }
  return out;
}

NdjsonWriter::NdjsonWriter(const std::filesystem::path& file, std::string hash) : path_(file), hash_(std::move(hash)), out_(open_out(file)) {}

void NdjsonWriter::write(const std::string& task, const nlohmann::ordered_json& metrics, const nlohmann::ordered_json& extra) {
  nlohmann::ordered_json rec;
  rec["task"] = task;
  rec["config_hash"] = hash_;
  rec["metrics"] = metrics;
  if (!extra.is_null())
    for (auto it = extra.begin(); it != extra.end(); ++it) rec[it.key()] = it.value();
  out_ << rec.dump() << "\n";
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
}

}  // namespace mfgcn
