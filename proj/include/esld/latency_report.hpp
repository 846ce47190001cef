#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esld/errors.hpp"
#include "esld/types.hpp"

namespace esld {

inline constexpr std::size_t kTimedIterations = 20;
inline constexpr int kWarmupIterations = 3;

enum class Variant { guard, esld };

inline std::string_view to_string(Variant v) { return v == Variant::guard ? "guard" : "esld"; }

inline Variant parse_variant(std::string_view s) {
  if (s == "guard") return Variant::guard;
  if (s == "esld") return Variant::esld;
  throw FormatError("unknown timing variant '" + std::string(s) + "'");
}

struct TimingRecord {
  std::string host;
  PoolKind task = PoolKind::upia;
  Variant variant = Variant::guard;
  int warmup_count = kWarmupIterations;
  std::vector<double> timed_iterations;  // milliseconds, warmup excluded
  std::optional<LayerIndex> layer;       // esld only
  std::uint32_t sequence_length = 1024;
  std::uint32_t batch_size = 1;
};

struct CellSummary {
  std::string host;
  PoolKind task = PoolKind::upia;
  double guard_ms = 0.0;
  double esld_ms = 0.0;
  double speedup = 0.0;  // unrounded
  LayerIndex layer = 0;
  double depth_fraction = 0.0;
};

struct AggregateSummary {
  double geometric_mean_speedup = 0.0;
  double mean_delta_pp = 0.0;
  double min_speedup = 0.0;
  double max_speedup = 0.0;
};

// Mean as t0 + mean(t_i - t0): returns t exactly when every sample equals t.
inline double mean_ms(std::span<const double> samples) {
  if (samples.empty()) throw MetricError("mean of an empty timing sample");
  const double t0 = samples.front();
  double acc = 0.0;
  for (double t : samples) acc += t - t0;
  return t0 + acc / static_cast<double>(samples.size());
}

inline double depth_fraction(LayerIndex layer, std::uint32_t n_layers) {
  if (n_layers == 0 || layer >= n_layers) {
    throw UsageError("layer " + std::to_string(layer) + " is outside a " + std::to_string(n_layers) + "-layer host");
  }
  return static_cast<double>(layer + 1) / static_cast<double>(n_layers);
}

inline void validate_timing(const TimingRecord& r, std::size_t expected_iterations) {
  if (r.timed_iterations.size() != expected_iterations) {
    throw FormatError(r.host + "/" + std::string(to_string(r.task)) + "/" + std::string(to_string(r.variant)) +
                      ": expected " + std::to_string(expected_iterations) + " timed iterations, got " +
                      std::to_string(r.timed_iterations.size()));
  }
  for (double t : r.timed_iterations) {
    if (!(t > 0.0) || !std::isfinite(t)) throw FormatError(r.host + ": timing values must be positive");
  }
}

inline CellSummary summarize_cell(const TimingRecord& guard, const TimingRecord& esld, std::uint32_t n_layers,
                                  std::size_t expected_iterations = kTimedIterations) {
  if (guard.host != esld.host || guard.task != esld.task) {
    throw UsageError("summarize_cell: host/task mismatch (" + guard.host + "/" + std::string(to_string(guard.task)) +
                     " vs " + esld.host + "/" + std::string(to_string(esld.task)) + ")");
  }
  if (guard.variant != Variant::guard || esld.variant != Variant::esld) {
    throw UsageError("summarize_cell: expected one guard and one esld record");
  }
  if (!esld.layer) throw FormatError(esld.host + ": esld timing record has no layer");
  validate_timing(guard, expected_iterations);
  validate_timing(esld, expected_iterations);
  CellSummary c;
  c.host = guard.host;
  c.task = guard.task;
  c.guard_ms = mean_ms(guard.timed_iterations);
  c.esld_ms = mean_ms(esld.timed_iterations);
  c.speedup = c.guard_ms / c.esld_ms;
  c.layer = *esld.layer;
  c.depth_fraction = depth_fraction(c.layer, n_layers);
  return c;
}

inline AggregateSummary aggregate_speedups(std::span<const double> speedups, std::span<const double> deltas) {
  if (speedups.empty()) throw UsageError("aggregate_report needs at least one cell");
  if (!deltas.empty() && deltas.size() != speedups.size()) throw DimensionError("one delta per cell expected");
  AggregateSummary a;
  double log_sum = 0.0;
  a.min_speedup = a.max_speedup = speedups.front();
  for (double s : speedups) {
    if (!(s > 0.0)) throw MetricError("speedups must be positive");
    log_sum += std::log(s);
    a.min_speedup = std::min(a.min_speedup, s);
    a.max_speedup = std::max(a.max_speedup, s);
  }
  a.geometric_mean_speedup = std::exp(log_sum / static_cast<double>(speedups.size()));
  if (!deltas.empty()) {
    double sum = 0.0;
    for (double d : deltas) sum += d;
    a.mean_delta_pp = sum / static_cast<double>(deltas.size());
  }
  return a;
}

inline AggregateSummary aggregate_report(std::span<const CellSummary> cells, std::span<const double> deltas) {
  std::vector<double> speedups;
  for (const auto& c : cells) speedups.push_back(c.speedup);
  return aggregate_speedups(speedups, deltas);
}

// ---------------------------------------------------------------------------
// Timing files: one JSON object per (host, task, variant).

inline nlohmann::json to_json(const TimingRecord& r) {
  nlohmann::json j{{"host", r.host},
                   {"task", std::string(to_string(r.task))},
                   {"variant", std::string(to_string(r.variant))},
                   {"warmup_count", r.warmup_count},
                   {"timed_iterations", r.timed_iterations},
                   {"sequence_length", r.sequence_length},
                   {"batch_size", r.batch_size}};
  j["layer"] = r.layer ? nlohmann::json(*r.layer) : nlohmann::json(nullptr);
  return j;
}

inline TimingRecord timing_from_json(const nlohmann::json& j) {
  TimingRecord r;
  try {
    r.host = j.at("host").get<std::string>();
    r.task = parse_pool_kind(j.at("task").get<std::string>());
    r.variant = parse_variant(j.at("variant").get<std::string>());
    r.warmup_count = j.value("warmup_count", kWarmupIterations);
    r.timed_iterations = j.at("timed_iterations").get<std::vector<double>>();
    if (j.contains("layer") && !j["layer"].is_null()) r.layer = j["layer"].get<LayerIndex>();
    r.sequence_length = j.value("sequence_length", 1024u);
    r.batch_size = j.value("batch_size", 1u);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("timing record: ") + e.what());
  }
  return r;
}

inline std::vector<TimingRecord> read_timing_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open timing file " + path.string());
  std::vector<TimingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(timing_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_timing_records(const std::filesystem::path& path, std::span<const TimingRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace esld
