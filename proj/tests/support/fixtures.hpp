#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fixtures {

inline std::filesystem::path published_dir() { return std::filesystem::path(ESLD_FIXTURES_DIR) / "published"; }

// Header-keyed rows of a plain comma-separated file (no quoting).
struct Csv {
  std::vector<std::map<std::string, std::string>> rows;

  double num(std::size_t i, const std::string& col) const { return std::stod(rows.at(i).at(col)); }
  const std::string& str(std::size_t i, const std::string& col) const { return rows.at(i).at(col); }
  std::size_t size() const { return rows.size(); }
};

inline Csv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
  };
  std::string line;
  std::getline(in, line);
  const auto header = split(line);
  Csv csv;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::runtime_error("ragged fixture row in " + path.string());
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

inline std::map<std::string, std::uint32_t> host_layers() {
  const auto csv = read_csv(published_dir() / "host_layers.csv");
  std::map<std::string, std::uint32_t> out;
  for (std::size_t i = 0; i < csv.size(); ++i) out[csv.str(i, "host")] = static_cast<std::uint32_t>(csv.num(i, "n_layers"));
  return out;
}

inline std::vector<std::filesystem::path> loso_reports() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(published_dir())) {
    if (e.path().string().ends_with(".loso.json")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fixtures
