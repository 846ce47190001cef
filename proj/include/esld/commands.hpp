#pragma once

// Batch commands behind the `esld` executable. Each takes a plain config
// struct and output streams so it can be driven from tests as well.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esld/detail/parallel.hpp"
#include "esld/errors.hpp"
#include "esld/feature_store.hpp"
#include "esld/latency_report.hpp"
#include "esld/leakage_audit.hpp"
#include "esld/loso.hpp"
#include "esld/probe.hpp"
#include "esld/types.hpp"

namespace esld {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRejected = 3;

namespace detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string signed_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.*f", decimals, v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// audit

struct AuditCommandConfig {
  std::filesystem::path manifest;  // JSONL: source_id, class, pool, documents, embeddings
  std::optional<std::filesystem::path> recheck;  // existing report to re-apply admission to
  std::optional<std::filesystem::path> out;      // stdout when unset
  AuditConfig thresholds;
  bool fail_on_reject = false;
  std::size_t threads = 1;
};

inline std::vector<AuditCandidate> load_audit_candidates(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw MissingInputError("cannot open audit manifest " + manifest.string());
  const auto base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base / path : path;
  };
  std::vector<AuditCandidate> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    AuditCandidate c;
    std::string source_id;
    try {
      source_id = j.at("source_id").get<std::string>();
      c.source_class = parse_source_class(j.at("class").get<std::string>());
      c.pool = j.value("pool", std::string());
      c.documents = read_documents(resolve(j.at("documents").get<std::string>()), source_id);
      const auto emb = to_matrix(read_feature_file(resolve(j.at("embeddings").get<std::string>())));
      c.embeddings = embedding_set_from_matrix(source_id, emb);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError("source '" + source_id + "': " + e.what());
    }
    if (c.embeddings.size() != c.documents.documents.size()) {
      throw FormatError("source '" + source_id + "': " + std::to_string(c.documents.documents.size()) +
                        " documents but " + std::to_string(c.embeddings.size()) + " embeddings");
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) throw UsageError("audit manifest " + manifest.string() + " lists no sources");
  return out;
}

inline int cmd_audit(const AuditCommandConfig& config, std::ostream& out, std::ostream& log) {
  std::vector<SourceAudit> rows;
  if (config.recheck) {
    std::ifstream in(*config.recheck);
    if (!in) throw MissingInputError("cannot open " + config.recheck->string());
    rows = read_audit_report(in, config.recheck->string());
    if (rows.empty()) throw UsageError("audit report " + config.recheck->string() + " has no rows");
    for (auto& r : rows) r.admitted = admit_source(r, config.thresholds);
  } else {
    const auto candidates = load_audit_candidates(config.manifest);
    rows = audit_pool(candidates, config.thresholds, config.threads);
  }

  if (config.out) {
    std::ofstream f(*config.out, std::ios::trunc);
    if (!f) throw MissingInputError("cannot open " + config.out->string() + " for writing");
    write_audit_report(f, rows);
  } else {
    write_audit_report(out, rows);
  }

  std::size_t rejected = 0;
  for (const auto& r : rows) {
    if (!r.admitted) {
      ++rejected;
      log << "rejected: " << r.source_id << " (13-gram " << format_fraction(r.contam_13gram) << ", dup@0.85 "
          << format_fraction(r.dup_rate_085) << ")\n";
    }
  }
  log << rows.size() - rejected << " of " << rows.size() << " sources admitted\n";
  return (rejected > 0 && config.fail_on_reject) ? kExitRejected : kExitOk;
}

// ---------------------------------------------------------------------------
// loso

struct LosoCommandConfig {
  std::filesystem::path manifest;
  PoolKind pool = PoolKind::upia;
  std::vector<LayerIndex> layers;  // empty: default grid (needs host_layers) or every common layer
  double epsilon = 0.005;
  std::vector<std::uint64_t> seeds = kDefaultSeeds;
  std::filesystem::path out_dir = ".";
  std::string host;
  std::optional<std::uint32_t> host_layers;
  std::optional<std::filesystem::path> host_verdicts;
  std::size_t sample_cap = kDefaultSampleCap;
  std::vector<double> ablation_epsilons;
  std::size_t threads = 1;
  bool timestamp = true;
};

inline std::filesystem::path loso_report_path(const LosoCommandConfig& c) {
  const std::string pool(to_string(c.pool));
  return c.out_dir / ((c.host.empty() ? pool : c.host + "_" + pool) + ".loso.json");
}

namespace detail {

inline nlohmann::json curve_json(const std::map<LayerIndex, double>& curve) {
  auto arr = nlohmann::json::array();
  for (const auto& [l, v] : curve) arr.push_back({{"layer", l}, {"bacc", v}});
  return arr;
}

inline nlohmann::json outer_json(const OuterEvaluation& ev) {
  auto folds = nlohmann::json::array();
  for (const auto& f : ev.folds) {
    auto seeds = nlohmann::json::array();
    for (const auto& s : f.per_seed) seeds.push_back({{"seed", s.seed}, {"bacc", s.bacc}, {"auc", s.auc}});
    nlohmann::json fj{{"held_attack", f.fold.held_attack},
                      {"held_benign", f.fold.held_benign},
                      {"n_attack", f.n_attack},
                      {"n_benign", f.n_benign},
                      {"per_seed", seeds},
                      {"bacc", f.bacc},
                      {"auc", f.auc}};
    fj["host_bacc"] = f.host_bacc ? nlohmann::json(*f.host_bacc) : nlohmann::json(nullptr);
    folds.push_back(std::move(fj));
  }
  return {{"layer", ev.layer},
          {"folds", folds},
          {"summary", {{"bacc", ev.bacc}, {"auc", ev.auc}, {"evaluations", ev.evaluations}}}};
}

}  // namespace detail

struct LosoRun {
  LayerCurve curve;
  LayerIndex audit_best = 0;
  LayerIndex deployment = 0;
  OuterEvaluation outer;
  std::optional<HostComparison> host;
  nlohmann::json report;
};

// inner audit -> L_dagger -> L*(eps) -> outer evaluation -> host comparison.
inline LosoRun run_loso_pipeline(const SourcePool& pool, const FeatureProvider& provider,
                                 const LosoCommandConfig& config) {
  std::vector<LayerIndex> layers = config.layers;
  if (layers.empty()) {
    layers = config.host_layers ? default_layer_grid(*config.host_layers) : pool.common_layers();
  }
  if (layers.empty()) throw UsageError("no candidate layers: pass --layers or provide features");
  layers = detail::normalized_layers(layers);
  if (config.host_layers) {
    for (auto l : layers) (void)depth_fraction(l, *config.host_layers);
  }
  if (config.seeds.empty()) throw UsageError("at least one seed is required");
  const ParetoPolicy policy{config.epsilon};

  LosoOptions options;
  options.sample_cap = config.sample_cap;
  options.threads = config.threads;

  LosoRun run;
  run.curve = run_inner_audit(pool, provider, layers, config.seeds, options);
  run.audit_best = audit_best_layer(run.curve);
  run.deployment = pareto_layer(run.curve, policy);
  run.outer = run_outer_evaluation(pool, provider, run.deployment, config.seeds, options);
  if (config.host_verdicts) run.host = compare_to_host(run.outer, read_host_verdicts(*config.host_verdicts));

  auto& r = run.report;
  r["format"] = "esld-loso-report";
  r["format_version"] = 1;
  if (config.timestamp) r["generated_at"] = detail::utc_timestamp();
  r["host"] = config.host;
  r["host_layers"] = config.host_layers ? nlohmann::json(*config.host_layers) : nlohmann::json(nullptr);
  r["pool"] = std::string(to_string(pool.kind));
  r["sources"] = {{"attack", detail::ids_of(pool.attack)}, {"benign", detail::ids_of(pool.benign)}};
  r["config"] = {{"candidate_layers", layers},
                 {"epsilon", config.epsilon},
                 {"seeds", config.seeds},
                 {"sample_cap", config.sample_cap},
                 {"decision_rule", "attack iff w.h + b >= 0"},
                 {"timing_reducer", "mean"}};

  auto per_fold = nlohmann::json::array();
  for (const auto& fc : run.curve.per_fold) {
    per_fold.push_back({{"held_attack", fc.outer.held_attack},
                        {"held_benign", fc.outer.held_benign},
                        {"curve", detail::curve_json(fc.mean_inner_bacc)},
                        {"best_layer", fc.best_layer}});
  }
  const auto n_inner = run.curve.per_fold.empty() ? 0
                                                   : (run.curve.per_fold.front().outer.train_attack.size()) *
                                                         (run.curve.per_fold.front().outer.train_benign.size());
  r["inner_audit"] = {{"agg", detail::curve_json(run.curve.agg)},
                      {"outer_folds", run.curve.per_fold.size()},
                      {"inner_folds_per_outer", n_inner},
                      {"per_fold_diagnostic", per_fold}};
  r["selection"] = {{"audit_best_layer", run.audit_best},
                    {"agg_audit_best", run.curve.agg.at(run.audit_best)},
                    {"epsilon", config.epsilon},
                    {"deployment_layer", run.deployment},
                    {"agg_deployment", run.curve.agg.at(run.deployment)}};
  if (config.host_layers) r["selection"]["depth_fraction"] = depth_fraction(run.deployment, *config.host_layers);
  r["outer"] = detail::outer_json(run.outer);
  if (run.host) {
    r["host_comparison"] = {
        {"host_bacc", run.host->host_bacc}, {"esld_bacc", run.host->esld_bacc}, {"delta_pp", run.host->delta_pp}};
  } else {
    r["host_comparison"] = nullptr;
  }

  if (!config.ablation_epsilons.empty()) {
    std::map<LayerIndex, std::pair<double, double>> cache{{run.deployment, {run.outer.bacc, run.outer.auc}}};
    auto arr = nlohmann::json::array();
    for (double eps : config.ablation_epsilons) {
      const auto layer = pareto_layer(run.curve, ParetoPolicy{eps});
      if (!cache.contains(layer)) {
        const auto ev = run_outer_evaluation(pool, provider, layer, config.seeds, options);
        cache[layer] = {ev.bacc, ev.auc};
      }
      arr.push_back({{"epsilon", eps}, {"layer", layer}, {"bacc", cache[layer].first}, {"auc", cache[layer].second}});
    }
    r["ablation"] = arr;
  }
  return run;
}

inline int cmd_loso(const LosoCommandConfig& config, std::ostream& log, LosoRun* result = nullptr) {
  const auto pool = load_pool(config.manifest, config.pool);
  FileFeatureProvider provider(pool);
  auto run = run_loso_pipeline(pool, provider, config);
  std::filesystem::create_directories(config.out_dir);
  const auto path = loso_report_path(config);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  out << run.report.dump(2) << '\n';
  log << to_string(config.pool) << ": " << run.outer.folds.size() << " outer folds, L_dagger=" << run.audit_best
      << ", L*=" << run.deployment << ", BAcc=" << detail::fixed(run.outer.bacc, 4)
      << ", AUC=" << detail::fixed(run.outer.auc, 4);
  if (run.host) log << ", host BAcc=" << detail::fixed(run.host->host_bacc, 4)
                    << ", delta=" << detail::signed_fixed(run.host->delta_pp, 1) << " pp";
  log << "\nreport: " << path.string() << '\n';
  if (result) *result = std::move(run);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportCommandConfig {
  std::vector<std::filesystem::path> loso_reports;
  std::optional<std::filesystem::path> timing;
  std::size_t expected_iterations = kTimedIterations;
};

struct ReportRow {
  std::string host;
  PoolKind task = PoolKind::upia;
  std::optional<double> host_bacc;
  double esld_bacc = 0.0;
  double esld_auc = 0.0;
  std::optional<double> delta_pp;
  LayerIndex layer = 0;
  std::optional<std::uint32_t> host_layers;
  std::optional<double> depth;
  std::optional<CellSummary> timing;
};

struct ReportResult {
  std::vector<ReportRow> rows;
  std::optional<AggregateSummary> aggregate;
  std::string footer;
};

inline ReportRow report_row_from_loso(const nlohmann::json& j, const std::string& where) {
  ReportRow row;
  try {
    row.host = j.at("host").get<std::string>();
    row.task = parse_pool_kind(j.at("pool").get<std::string>());
    row.layer = j.at("selection").at("deployment_layer").get<LayerIndex>();
    row.esld_bacc = j.at("outer").at("summary").at("bacc").get<double>();
    row.esld_auc = j.at("outer").at("summary").at("auc").get<double>();
    if (j.contains("host_comparison") && !j["host_comparison"].is_null()) {
      row.host_bacc = j["host_comparison"].at("host_bacc").get<double>();
      row.delta_pp = delta_pp(row.esld_bacc, *row.host_bacc);
    }
    if (j.contains("host_layers") && !j["host_layers"].is_null()) {
      row.host_layers = j["host_layers"].get<std::uint32_t>();
      row.depth = depth_fraction(row.layer, *row.host_layers);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return row;
}

inline ReportResult build_report(const ReportCommandConfig& config, std::ostream& log) {
  if (config.loso_reports.empty()) throw UsageError("report needs at least one LOSO report");
  ReportResult result;
  std::set<std::pair<std::string, PoolKind>> cells;
  for (const auto& path : config.loso_reports) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot open LOSO report " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    auto row = report_row_from_loso(j, path.string());
    if (!cells.emplace(row.host, row.task).second) {
      throw UsageError("duplicate cell " + row.host + "/" + std::string(to_string(row.task)));
    }
    result.rows.push_back(std::move(row));
  }

  std::optional<std::vector<TimingRecord>> timing;
  if (config.timing) {
    if (std::filesystem::exists(*config.timing)) {
      timing = read_timing_records(*config.timing);
    } else {
      log << "warning: timing file " << config.timing->string() << " not found; emitting detection-only report\n";
    }
  } else {
    log << "warning: no timing file given; emitting detection-only report\n";
  }

  if (timing) {
    std::map<std::tuple<std::string, PoolKind, Variant>, const TimingRecord*> index;
    for (const auto& t : *timing) {
      if (!cells.contains({t.host, t.task})) {
        throw UsageError("timing record for " + t.host + "/" + std::string(to_string(t.task)) +
                         " has no matching LOSO report");
      }
      if (!index.emplace(std::tuple{t.host, t.task, t.variant}, &t).second) {
        throw FormatError("duplicate timing record for " + t.host + "/" + std::string(to_string(t.task)));
      }
    }
    for (auto& row : result.rows) {
      const auto g = index.find({row.host, row.task, Variant::guard});
      const auto e = index.find({row.host, row.task, Variant::esld});
      if (g == index.end() || e == index.end()) {
        throw UsageError("no guard/esld timing pair for " + row.host + "/" + std::string(to_string(row.task)));
      }
      if (e->second->layer && *e->second->layer != row.layer) {
        throw UsageError(row.host + "/" + std::string(to_string(row.task)) + ": timed layer " +
                         std::to_string(*e->second->layer) + " differs from deployment layer " +
                         std::to_string(row.layer));
      }
      // Without a known host depth the cell's depth column stays empty.
      row.timing = summarize_cell(*g->second, *e->second, row.host_layers.value_or(row.layer + 1),
                                  config.expected_iterations);
      if (!row.host_layers) row.timing->depth_fraction = 0.0;
    }
  }

  std::vector<double> deltas;
  for (const auto& r : result.rows) {
    if (r.delta_pp) deltas.push_back(*r.delta_pp);
  }
  const bool all_deltas = deltas.size() == result.rows.size();
  std::ostringstream footer;
  if (timing) {
    std::vector<double> speedups;
    for (const auto& r : result.rows) speedups.push_back(r.timing->speedup);
    result.aggregate = aggregate_speedups(speedups, all_deltas ? std::span<const double>(deltas) : std::span<const double>());
    footer << detail::fixed(result.aggregate->geometric_mean_speedup, 2) << "×";
    if (all_deltas) footer << ", " << detail::signed_fixed(result.aggregate->mean_delta_pp, 1) << " pp";
    footer << " (geometric-mean speedup";
    if (all_deltas) footer << ", mean delta";
    footer << "; speedup range " << detail::fixed(result.aggregate->min_speedup, 2) << "× to "
           << detail::fixed(result.aggregate->max_speedup, 2) << "× over " << result.rows.size() << " cells)";
  } else if (all_deltas) {
    double sum = 0.0;
    for (double d : deltas) sum += d;
    footer << detail::signed_fixed(sum / static_cast<double>(deltas.size()), 1) << " pp (mean delta over "
           << result.rows.size() << " cells, no timing)";
  } else {
    footer << "no host verdicts and no timing; nothing to aggregate";
  }
  result.footer = footer.str();
  return result;
}

inline void print_report(const ReportResult& r, std::ostream& out) {
  auto opt = [](const std::optional<double>& v, int dec, bool sign = false) {
    return v ? (sign ? detail::signed_fixed(*v, dec) : detail::fixed(*v, dec)) : std::string("-");
  };
  out << std::left << std::setw(22) << "host" << std::setw(6) << "task" << std::right << std::setw(10) << "host_bacc"
      << std::setw(10) << "esld_bacc" << std::setw(9) << "esld_auc" << std::setw(9) << "delta_pp" << std::setw(5)
      << "L*" << std::setw(8) << "depth" << std::setw(11) << "guard_ms" << std::setw(10) << "esld_ms" << std::setw(9)
      << "speedup" << '\n';
  for (const auto& row : r.rows) {
    out << std::left << std::setw(22) << row.host << std::setw(6) << to_string(row.task) << std::right
        << std::setw(10) << opt(row.host_bacc, 4) << std::setw(10) << detail::fixed(row.esld_bacc, 4) << std::setw(9)
        << detail::fixed(row.esld_auc, 4) << std::setw(9) << opt(row.delta_pp, 1, true) << std::setw(5) << row.layer
        << std::setw(8) << (row.depth ? detail::fixed(*row.depth * 100.0, 1) + "%" : std::string("-"))
        << std::setw(11) << (row.timing ? detail::fixed(row.timing->guard_ms, 2) : std::string("-")) << std::setw(10)
        << (row.timing ? detail::fixed(row.timing->esld_ms, 2) : std::string("-")) << std::setw(9)
        << (row.timing ? detail::fixed(row.timing->speedup, 2) + "x" : std::string("-")) << '\n';
  }
  out << "summary: " << r.footer << '\n';
}

inline int cmd_report(const ReportCommandConfig& config, std::ostream& out, std::ostream& log,
                      ReportResult* result = nullptr) {
  auto r = build_report(config, log);
  print_report(r, out);
  if (result) *result = std::move(r);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit / score

struct FitCommandConfig {
  std::vector<std::filesystem::path> attack_files;
  std::vector<std::filesystem::path> benign_files;
  std::vector<std::filesystem::path> labeled_files;  // rows split by their own label
  std::filesystem::path out;
};

inline ProbeModel fit_from_files(const FitCommandConfig& config) {
  std::vector<std::vector<float>> attack, benign;
  std::optional<FeatureFileHeader> first;
  auto take = [&](const std::filesystem::path& path, std::optional<Label> role) {
    auto file = read_feature_file(path);
    if (!first) {
      first = file.header;
    } else if (file.header.dim != first->dim || file.header.layer != first->layer) {
      throw DimensionError(path.string() + ": layer/dim differ from the first feature file");
    }
    for (auto& r : file.records) {
      Label l = r.label;
      if (role) {
        if (l != *role && l != Label::not_applicable) {
          throw FormatError(path.string() + ": prompt " + std::to_string(r.prompt_id) + " is labeled " +
                            std::string(to_string(l)));
        }
        l = *role;
      }
      if (l == Label::attack) {
        attack.push_back(std::move(r.vector));
      } else if (l == Label::benign) {
        benign.push_back(std::move(r.vector));
      } else {
        throw FormatError(path.string() + ": unlabeled record " + std::to_string(r.prompt_id));
      }
    }
  };
  for (const auto& p : config.attack_files) take(p, Label::attack);
  for (const auto& p : config.benign_files) take(p, Label::benign);
  for (const auto& p : config.labeled_files) take(p, std::nullopt);
  if (!first) throw UsageError("fit needs at least one feature file");

  auto to_mat = [&](const std::vector<std::vector<float>>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(first->dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    return m;
  };
  return fit_lda(to_mat(attack), to_mat(benign), first->layer);
}

inline int cmd_fit(const FitCommandConfig& config, std::ostream& log) {
  const auto model = fit_from_files(config);
  std::ofstream out(config.out, std::ios::trunc);
  if (!out) throw MissingInputError("cannot open " + config.out.string() + " for writing");
  out << to_json(model).dump() << '\n';
  log << "fitted layer " << model.layer << " probe on " << model.n_attack << " attack / " << model.n_benign
      << " benign rows (d=" << model.dim() << ", delta=" << detail::fixed(model.delta, 6) << ")\n";
  return kExitOk;
}

inline ProbeModel read_probe_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open probe model " + path.string());
  std::string line;
  std::getline(in, line);
  try {
    return probe_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

struct ScoreCommandConfig {
  std::filesystem::path model;
  std::filesystem::path features;
  bool allow_layer_mismatch = false;
};

inline int cmd_score(const ScoreCommandConfig& config, std::ostream& out, std::ostream& log) {
  const auto model = read_probe_model(config.model);
  const auto file = read_feature_file(config.features);
  if (file.header.layer != model.layer && !config.allow_layer_mismatch) {
    throw UsageError("model was fitted at layer " + std::to_string(model.layer) + ", features are from layer " +
                     std::to_string(file.header.layer));
  }
  out << "prompt_id,label,score,prediction\n";
  std::size_t flagged = 0;
  for (const auto& r : file.records) {
    const double s = score(model, std::span<const float>(r.vector));
    const auto p = predict_from_score(s);
    flagged += p == Label::attack;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", s);
    out << r.prompt_id << ',' << to_string(r.label) << ',' << buf << ',' << to_string(p) << '\n';
  }
  log << flagged << " of " << file.records.size() << " prompts flagged as attack\n";
  return kExitOk;
}

}  // namespace esld
