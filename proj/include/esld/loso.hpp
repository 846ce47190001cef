#pragma once

// Two-axis leave-one-source-out evaluation.
//
// An outer fold holds out one attack source and one benign source and trains
// on everything else in the pool. Layer selection never looks at the outer
// held-out pair: an inner LOSO over each outer fold's training pool produces
// inner balanced accuracies, which are averaged into agg(L). The audit-best
// layer maximizes agg(L); the Pareto layer is the shallowest layer within
// epsilon of that maximum. Outer folds are then evaluated at one fixed layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "esld/detail/parallel.hpp"
#include "esld/detail/rng.hpp"
#include "esld/errors.hpp"
#include "esld/feature_store.hpp"
#include "esld/metrics.hpp"
#include "esld/probe.hpp"
#include "esld/types.hpp"

namespace esld {

inline constexpr std::size_t kDefaultSampleCap = 1500;
inline const std::vector<std::uint64_t> kDefaultSeeds{0, 1, 2, 3, 4};

// ---------------------------------------------------------------------------
// Feature access

class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;

  // Rows of one source at one layer. Row order must be the same at every
  // layer, since training splits are drawn by row position.
  virtual std::shared_ptr<const FeatureMatrix> load(const std::string& source_id, LayerIndex layer) const = 0;

  virtual std::size_t prompt_count(const std::string& source_id) const = 0;
};

// Reads the files referenced by a pool, caching each (source, layer) once.
// Thread-safe.
class FileFeatureProvider final : public FeatureProvider {
 public:
  explicit FileFeatureProvider(SourcePool pool) : pool_(std::move(pool)) {}

  std::shared_ptr<const FeatureMatrix> load(const std::string& source_id, LayerIndex layer) const override {
    const auto key = std::make_pair(source_id, layer);
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const auto& src = pool_.find(source_id);
    const auto path_it = src.feature_paths.find(layer);
    if (path_it == src.feature_paths.end()) {
      throw MissingInputError("source '" + source_id + "' has no features at layer " + std::to_string(layer));
    }
    auto matrix = std::make_shared<FeatureMatrix>(to_matrix(read_feature_file(path_it->second)));
    if (matrix->size() != src.prompt_count) {
      throw FormatError(path_it->second.string() + ": record count disagrees with the manifest");
    }
    const Label expected = to_label(src.source_class);
    for (auto l : matrix->labels) {
      if (l != expected) {
        throw FormatError(path_it->second.string() + ": record label disagrees with source class " +
                          std::string(to_string(src.source_class)));
      }
    }

    std::lock_guard lock(mutex_);
    auto [order_it, first] = prompt_order_.try_emplace(source_id, matrix->prompt_ids);
    if (!first && order_it->second != matrix->prompt_ids) {
      throw FormatError("source '" + source_id + "': prompt order differs between layers");
    }
    return cache_.try_emplace(key, std::move(matrix)).first->second;
  }

  std::size_t prompt_count(const std::string& source_id) const override {
    return pool_.find(source_id).prompt_count;
  }

  const SourcePool& pool() const { return pool_; }

 private:
  SourcePool pool_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<std::string, LayerIndex>, std::shared_ptr<const FeatureMatrix>> cache_;
  mutable std::map<std::string, std::vector<std::uint64_t>> prompt_order_;
};

// Holds matrices supplied directly, e.g. by a synthetic generator.
class InMemoryFeatureProvider final : public FeatureProvider {
 public:
  void add(const std::string& source_id, FeatureMatrix matrix) {
    const LayerIndex layer = matrix.layer;
    if (auto it = counts_.find(source_id); it != counts_.end() && it->second != matrix.size()) {
      throw DimensionError("source '" + source_id + "': row count differs between layers");
    }
    counts_[source_id] = matrix.size();
    data_[{source_id, layer}] = std::make_shared<const FeatureMatrix>(std::move(matrix));
  }

  std::shared_ptr<const FeatureMatrix> load(const std::string& source_id, LayerIndex layer) const override {
    const auto it = data_.find({source_id, layer});
    if (it == data_.end()) {
      throw MissingInputError("no features for source '" + source_id + "' at layer " + std::to_string(layer));
    }
    return it->second;
  }

  std::size_t prompt_count(const std::string& source_id) const override {
    const auto it = counts_.find(source_id);
    if (it == counts_.end()) throw MissingInputError("unknown source '" + source_id + "'");
    return it->second;
  }

 private:
  std::map<std::pair<std::string, LayerIndex>, std::shared_ptr<const FeatureMatrix>> data_;
  std::map<std::string, std::size_t> counts_;
};

// ---------------------------------------------------------------------------
// Folds

struct SourceFold {
  std::string held_attack;
  std::string held_benign;
  std::vector<std::string> train_attack;  // sorted
  std::vector<std::string> train_benign;  // sorted

  bool trains_on(const std::string& id) const {
    return std::binary_search(train_attack.begin(), train_attack.end(), id) ||
           std::binary_search(train_benign.begin(), train_benign.end(), id);
  }
};

using OuterFold = SourceFold;
using InnerFold = SourceFold;

namespace detail {

inline std::vector<std::string> ids_of(const std::vector<SourceDescriptor>& side) {
  std::vector<std::string> ids;
  for (const auto& s : side) ids.push_back(s.source_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::vector<SourceFold> enumerate_folds(const std::vector<std::string>& attack,
                                               const std::vector<std::string>& benign) {
  std::vector<SourceFold> folds;
  folds.reserve(attack.size() * benign.size());
  for (const auto& a : attack) {
    for (const auto& b : benign) {
      SourceFold f{a, b, {}, {}};
      std::copy_if(attack.begin(), attack.end(), std::back_inserter(f.train_attack),
                   [&](const std::string& x) { return x != a; });
      std::copy_if(benign.begin(), benign.end(), std::back_inserter(f.train_benign),
                   [&](const std::string& x) { return x != b; });
      folds.push_back(std::move(f));
    }
  }
  return folds;
}

// Throws if a training source list contains any held-out source.
inline void assert_no_leak(const SourceFold& fold, std::span<const std::string> attack_sources,
                           std::span<const std::string> benign_sources) {
  for (const auto* side : {&attack_sources, &benign_sources}) {
    for (const auto& id : *side) {
      if (id == fold.held_attack || id == fold.held_benign) {
        throw std::logic_error("held-out source '" + id + "' reached a training split");
      }
    }
  }
}

}  // namespace detail

// |A| x |B| folds, attack-major, both axes in source_id order.
inline std::vector<OuterFold> enumerate_outer_folds(const SourcePool& pool) {
  const auto attack = detail::ids_of(pool.attack);
  const auto benign = detail::ids_of(pool.benign);
  if (attack.size() < 2 || benign.size() < 2) {
    throw PoolError("pool needs at least 2 attack and 2 benign sources");
  }
  if (std::set<std::string>(attack.begin(), attack.end()).size() != attack.size() ||
      std::set<std::string>(benign.begin(), benign.end()).size() != benign.size()) {
    throw PoolError("duplicate source ids in pool");
  }
  return detail::enumerate_folds(attack, benign);
}

// (|A|-1) x (|B|-1) inner folds over the outer fold's training pool. Each
// inner fold must still leave at least one training source per class.
inline std::vector<InnerFold> enumerate_inner_folds(const OuterFold& outer) {
  if (outer.train_attack.size() < 2 || outer.train_benign.size() < 2) {
    throw PoolError("inner LOSO for outer fold (" + outer.held_attack + ", " + outer.held_benign +
                    ") needs at least 2 training sources per class");
  }
  return detail::enumerate_folds(outer.train_attack, outer.train_benign);
}

inline std::vector<InnerFold> enumerate_inner_folds(const OuterFold& outer, const SourcePool& pool) {
  for (const auto& id : outer.train_attack) (void)pool.find(id);
  for (const auto& id : outer.train_benign) (void)pool.find(id);
  return enumerate_inner_folds(outer);
}

// ---------------------------------------------------------------------------
// Training splits

struct RowRef {
  std::uint32_t source = 0;  // index into the split's source list
  std::uint32_t row = 0;
};

// Which rows to use, independent of layer, so that every candidate layer is
// fitted on the same prompts.
struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> attack_sources;
  std::vector<std::string> benign_sources;
  std::vector<RowRef> attack_rows;
  std::vector<RowRef> benign_rows;
};

struct TrainingSplit {
  std::uint64_t seed = 0;
  LayerIndex layer = 0;
  Matrix attack_rows;
  Matrix benign_rows;
  std::vector<std::uint64_t> attack_ids;
  std::vector<std::uint64_t> benign_ids;
  std::vector<std::string> attack_provenance;  // source of each attack row
  std::vector<std::string> benign_provenance;
};

namespace detail {

inline std::vector<RowRef> sample_class(const std::vector<std::string>& sources, const FeatureProvider& provider,
                                        std::uint64_t seed, std::uint64_t class_tag, std::size_t cap) {
  std::vector<RowRef> all;
  std::uint64_t mix = splitmix64(seed ^ class_tag);
  for (std::uint32_t s = 0; s < sources.size(); ++s) {
    mix = splitmix64(mix ^ fnv1a(sources[s]));
    const auto n = provider.prompt_count(sources[s]);
    for (std::uint32_t r = 0; r < n; ++r) all.push_back({s, r});
  }
  if (all.empty()) throw PoolError("training split has no rows for one class");
  const auto picked = sample_without_replacement(all.size(), cap, mix);
  std::vector<RowRef> out;
  out.reserve(picked.size());
  for (auto i : picked) out.push_back(all[i]);
  return out;
}

inline void gather(const std::vector<std::string>& sources, const std::vector<RowRef>& refs,
                   const FeatureProvider& provider, LayerIndex layer, Matrix& rows, std::vector<std::uint64_t>* ids,
                   std::vector<std::string>* provenance) {
  std::vector<std::shared_ptr<const FeatureMatrix>> mats;
  for (const auto& s : sources) mats.push_back(provider.load(s, layer));
  const auto d = static_cast<Eigen::Index>(mats.front()->dim());
  rows.resize(static_cast<Eigen::Index>(refs.size()), d);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& m = *mats[refs[i].source];
    if (static_cast<Eigen::Index>(m.dim()) != d) throw DimensionError("hidden dims differ across training sources");
    rows.row(static_cast<Eigen::Index>(i)) = m.rows.row(refs[i].row).cast<double>();
    if (ids) ids->push_back(m.prompt_ids[refs[i].row]);
    if (provenance) provenance->push_back(sources[refs[i].source]);
  }
}

}  // namespace detail

// Uniform sampling without replacement from the pooled prompts of each class,
// capped at `cap` per class. Depends only on (seed, source set).
inline SplitPlan plan_training_split(std::span<const std::string> train_attack,
                                     std::span<const std::string> train_benign, std::uint64_t seed,
                                     const FeatureProvider& provider, std::size_t cap = kDefaultSampleCap) {
  SplitPlan plan;
  plan.seed = seed;
  plan.attack_sources.assign(train_attack.begin(), train_attack.end());
  plan.benign_sources.assign(train_benign.begin(), train_benign.end());
  std::sort(plan.attack_sources.begin(), plan.attack_sources.end());
  std::sort(plan.benign_sources.begin(), plan.benign_sources.end());
  if (plan.attack_sources.empty() || plan.benign_sources.empty()) {
    throw PoolError("training split needs at least one source per class");
  }
  plan.attack_rows = detail::sample_class(plan.attack_sources, provider, seed, 0xA77ACCull, cap);
  plan.benign_rows = detail::sample_class(plan.benign_sources, provider, seed, 0xBE9167ull, cap);
  return plan;
}

inline TrainingSplit materialize_split(const SplitPlan& plan, const FeatureProvider& provider, LayerIndex layer,
                                       bool with_provenance = true) {
  TrainingSplit split;
  split.seed = plan.seed;
  split.layer = layer;
  detail::gather(plan.attack_sources, plan.attack_rows, provider, layer, split.attack_rows, &split.attack_ids,
                 with_provenance ? &split.attack_provenance : nullptr);
  detail::gather(plan.benign_sources, plan.benign_rows, provider, layer, split.benign_rows, &split.benign_ids,
                 with_provenance ? &split.benign_provenance : nullptr);
  return split;
}

inline TrainingSplit sample_training_split(std::span<const std::string> train_attack,
                                           std::span<const std::string> train_benign, std::uint64_t seed,
                                           const FeatureProvider& provider, LayerIndex layer,
                                           std::size_t cap = kDefaultSampleCap) {
  return materialize_split(plan_training_split(train_attack, train_benign, seed, provider, cap), provider, layer);
}

// ---------------------------------------------------------------------------
// Options shared by the inner audit and the outer evaluation

struct SplitObservation {
  const OuterFold* outer = nullptr;
  const InnerFold* inner = nullptr;  // null during outer evaluation
  const TrainingSplit* split = nullptr;
};

struct LosoOptions {
  std::size_t sample_cap = kDefaultSampleCap;
  std::size_t threads = 1;
  // Called for every training split before fitting. May run on worker
  // threads concurrently.
  std::function<void(const SplitObservation&)> on_split;
};

namespace detail {

struct HeldOutScores {
  std::vector<double> scores;
  std::vector<Label> labels;
  std::vector<std::uint64_t> ids;
};

inline HeldOutScores score_heldout(const ProbeModel& model, const FeatureProvider& provider,
                                   const std::string& attack_source, const std::string& benign_source,
                                   LayerIndex layer) {
  HeldOutScores out;
  for (const auto& [id, label] : {std::pair{attack_source, Label::attack}, std::pair{benign_source, Label::benign}}) {
    const auto m = provider.load(id, layer);
    const auto s = score_rows(model, m->rows);
    out.scores.insert(out.scores.end(), s.begin(), s.end());
    out.labels.insert(out.labels.end(), s.size(), label);
    out.ids.insert(out.ids.end(), m->prompt_ids.begin(), m->prompt_ids.end());
  }
  return out;
}

inline ProbeModel fit_on_split(const TrainingSplit& split, const SourceFold& fold, const SplitPlan& plan,
                               const LosoOptions& options, const SourceFold* outer_for_hook,
                               const SourceFold* inner_for_hook) {
  assert_no_leak(fold, plan.attack_sources, plan.benign_sources);
  if (outer_for_hook && inner_for_hook) assert_no_leak(*outer_for_hook, plan.attack_sources, plan.benign_sources);
  if (options.on_split) {
    options.on_split(SplitObservation{outer_for_hook ? outer_for_hook : &fold, inner_for_hook, &split});
  }
  return fit_lda(split.attack_rows, split.benign_rows, split.layer);
}

inline std::vector<LayerIndex> normalized_layers(std::span<const LayerIndex> layers) {
  std::vector<LayerIndex> out(layers.begin(), layers.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw UsageError("no candidate layers");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inner audit and layer selection

struct FoldCurve {
  OuterFold outer;
  std::map<LayerIndex, double> mean_inner_bacc;  // over inner folds and seeds
  LayerIndex best_layer = 0;                     // per-fold argmax, diagnostic only
};

struct LayerCurve {
  std::map<LayerIndex, double> agg;
  std::vector<FoldCurve> per_fold;

  static LayerCurve from(std::map<LayerIndex, double> values) { return LayerCurve{std::move(values), {}}; }

  std::vector<LayerIndex> layers() const {
    std::vector<LayerIndex> out;
    for (const auto& [l, v] : agg) out.push_back(l);
    return out;
  }
};

struct ParetoPolicy {
  double epsilon = 0.005;
};

// argmax of agg(L); exact ties go to the shallowest layer.
inline LayerIndex audit_best_layer(const std::map<LayerIndex, double>& agg) {
  if (agg.empty()) throw UsageError("audit_best_layer: empty curve");
  auto best = agg.begin();
  for (auto it = agg.begin(); it != agg.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

inline LayerIndex audit_best_layer(const LayerCurve& curve) { return audit_best_layer(curve.agg); }

// L*(eps) = min { L : agg(L) >= agg(L_dagger) - eps }.
inline LayerIndex pareto_layer(const LayerCurve& curve, ParetoPolicy policy) {
  if (!(policy.epsilon >= 0.0) || !std::isfinite(policy.epsilon)) {
    throw UsageError("Pareto tolerance must be a finite value >= 0");
  }
  const double floor = curve.agg.at(audit_best_layer(curve)) - policy.epsilon;
  for (const auto& [layer, value] : curve.agg) {
    if (value >= floor) return layer;
  }
  throw std::logic_error("pareto_layer: audit-best layer failed its own bound");
}

// agg(L) = mean inner BAcc over (outer fold x inner fold x seed).
inline LayerCurve run_inner_audit(const SourcePool& pool, const FeatureProvider& provider,
                                  std::span<const LayerIndex> candidate_layers, std::span<const std::uint64_t> seeds,
                                  const LosoOptions& options = {}) {
  const auto layers = detail::normalized_layers(candidate_layers);
  if (seeds.empty()) throw UsageError("no seeds");
  const auto outers = enumerate_outer_folds(pool);

  // bacc[outer][inner * seeds * layers + seed * layers + layer]
  std::vector<std::vector<double>> bacc(outers.size());
  std::vector<std::vector<InnerFold>> inners(outers.size());
  for (std::size_t o = 0; o < outers.size(); ++o) inners[o] = enumerate_inner_folds(outers[o], pool);

  detail::parallel_for(outers.size(), options.threads, [&](std::size_t o) {
    const auto& outer = outers[o];
    auto& cell = bacc[o];
    cell.resize(inners[o].size() * seeds.size() * layers.size());
    for (std::size_t i = 0; i < inners[o].size(); ++i) {
      const auto& inner = inners[o][i];
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto plan =
            plan_training_split(inner.train_attack, inner.train_benign, seeds[s], provider, options.sample_cap);
        for (std::size_t l = 0; l < layers.size(); ++l) {
          const auto split = materialize_split(plan, provider, layers[l], static_cast<bool>(options.on_split));
          const auto model = detail::fit_on_split(split, inner, plan, options, &outer, &inner);
          const auto held = detail::score_heldout(model, provider, inner.held_attack, inner.held_benign, layers[l]);
          std::vector<Label> pred(held.scores.size());
          std::transform(held.scores.begin(), held.scores.end(), pred.begin(), predict_from_score);
          cell[(i * seeds.size() + s) * layers.size() + l] = balanced_accuracy(pred, held.labels);
        }
      }
    }
  });

  LayerCurve curve;
  std::vector<double> total(layers.size(), 0.0);
  std::size_t total_count = 0;
  for (std::size_t o = 0; o < outers.size(); ++o) {
    const std::size_t reps = inners[o].size() * seeds.size();
    std::vector<double> fold_sum(layers.size(), 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const double v = bacc[o][r * layers.size() + l];
        fold_sum[l] += v;
        total[l] += v;
      }
    }
    total_count += reps;
    FoldCurve fc{outers[o], {}, 0};
    for (std::size_t l = 0; l < layers.size(); ++l) fc.mean_inner_bacc[layers[l]] = fold_sum[l] / static_cast<double>(reps);
    fc.best_layer = audit_best_layer(fc.mean_inner_bacc);
    curve.per_fold.push_back(std::move(fc));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) curve.agg[layers[l]] = total[l] / static_cast<double>(total_count);
  return curve;
}

// ---------------------------------------------------------------------------
// Outer evaluation

struct SeedResult {
  std::uint64_t seed = 0;
  double bacc = 0.0;
  double auc = 0.0;
};

struct FoldResult {
  OuterFold fold;
  LayerIndex layer = 0;
  std::vector<SeedResult> per_seed;
  double bacc = 0.0;
  double auc = 0.0;
  std::optional<double> host_bacc;
  std::size_t n_attack = 0;
  std::size_t n_benign = 0;
  // Held-out prompts in evaluation order; used for the host comparison.
  std::vector<std::uint64_t> heldout_ids;
  std::vector<Label> heldout_labels;
};

struct OuterEvaluation {
  LayerIndex layer = 0;
  std::vector<FoldResult> folds;
  double bacc = 0.0;  // mean over folds x seeds
  double auc = 0.0;
  std::size_t evaluations = 0;
};

inline OuterEvaluation run_outer_evaluation(const SourcePool& pool, const FeatureProvider& provider, LayerIndex layer,
                                            std::span<const std::uint64_t> seeds, const LosoOptions& options = {}) {
  if (seeds.empty()) throw UsageError("no seeds");
  const auto outers = enumerate_outer_folds(pool);
  OuterEvaluation ev;
  ev.layer = layer;
  ev.folds.resize(outers.size());

  detail::parallel_for(outers.size(), options.threads, [&](std::size_t o) {
    const auto& outer = outers[o];
    FoldResult fr;
    fr.fold = outer;
    fr.layer = layer;
    for (auto seed : seeds) {
      const auto plan = plan_training_split(outer.train_attack, outer.train_benign, seed, provider, options.sample_cap);
      const auto split = materialize_split(plan, provider, layer, static_cast<bool>(options.on_split));
      const auto model = detail::fit_on_split(split, outer, plan, options, nullptr, nullptr);
      auto held = detail::score_heldout(model, provider, outer.held_attack, outer.held_benign, layer);
      const auto r = evaluate_scores(held.scores, held.labels);
      fr.per_seed.push_back({seed, r.bacc, r.auc});
      if (fr.heldout_ids.empty()) {
        fr.n_attack = r.n_attack;
        fr.n_benign = r.n_benign;
        fr.heldout_ids = std::move(held.ids);
        fr.heldout_labels = std::move(held.labels);
      }
    }
    double sb = 0.0, sa = 0.0;
    for (const auto& s : fr.per_seed) {
      sb += s.bacc;
      sa += s.auc;
    }
    fr.bacc = sb / static_cast<double>(fr.per_seed.size());
    fr.auc = sa / static_cast<double>(fr.per_seed.size());
    ev.folds[o] = std::move(fr);
  });

  double sb = 0.0, sa = 0.0;
  for (const auto& f : ev.folds) {
    for (const auto& s : f.per_seed) {
      sb += s.bacc;
      sa += s.auc;
      ++ev.evaluations;
    }
  }
  ev.bacc = sb / static_cast<double>(ev.evaluations);
  ev.auc = sa / static_cast<double>(ev.evaluations);
  return ev;
}

// ---------------------------------------------------------------------------
// Host guard comparison

enum class HostVerdict { safe, unsafe, unparsed };

using HostVerdicts = std::unordered_map<std::uint64_t, HostVerdict>;

inline HostVerdict parse_host_verdict(std::string_view s) {
  if (s == "safe") return HostVerdict::safe;
  if (s == "unsafe") return HostVerdict::unsafe;
  if (s == "unparsed") return HostVerdict::unparsed;
  throw FormatError("unknown host verdict '" + std::string(s) + "'");
}

// Only an explicit "unsafe" counts as the host flagging an attack.
inline Label host_prediction(HostVerdict v) { return v == HostVerdict::unsafe ? Label::attack : Label::benign; }

inline HostVerdicts read_host_verdicts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open host verdicts " + path.string());
  HostVerdicts out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("prompt_id").get<std::uint64_t>();
      const auto v = parse_host_verdict(j.at("verdict").get<std::string>());
      if (!out.emplace(id, v).second) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": duplicate prompt_id");
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline double delta_pp(double esld_bacc, double host_bacc) { return (esld_bacc - host_bacc) * 100.0; }

struct HostComparison {
  double host_bacc = 0.0;
  double esld_bacc = 0.0;
  double delta_pp = 0.0;
};

// Scores the host's binary verdicts on exactly the held-out prompts of each
// outer fold and fills FoldResult::host_bacc.
inline HostComparison compare_to_host(OuterEvaluation& evaluation, const HostVerdicts& verdicts) {
  if (evaluation.folds.empty()) throw UsageError("compare_to_host: no folds");
  double sum = 0.0;
  for (auto& f : evaluation.folds) {
    std::vector<Label> pred;
    pred.reserve(f.heldout_ids.size());
    for (auto id : f.heldout_ids) {
      const auto it = verdicts.find(id);
      if (it == verdicts.end()) throw MissingInputError("no host verdict for prompt " + std::to_string(id));
      pred.push_back(host_prediction(it->second));
    }
    f.host_bacc = balanced_accuracy(pred, f.heldout_labels);
    sum += *f.host_bacc;
  }
  HostComparison c;
  c.host_bacc = sum / static_cast<double>(evaluation.folds.size());
  c.esld_bacc = evaluation.bacc;
  c.delta_pp = delta_pp(c.esld_bacc, c.host_bacc);
  return c;
}

// Every 4th layer with L/N in [0.25, 0.90].
inline std::vector<LayerIndex> default_layer_grid(std::uint32_t n_layers) {
  if (n_layers == 0) throw UsageError("host must have at least one layer");
  const std::uint32_t first = (25u * n_layers + 99u) / 100u;
  const std::uint32_t last = std::min(n_layers - 1, (90u * n_layers) / 100u);
  std::vector<LayerIndex> out;
  for (std::uint32_t l = first; l <= last; l += 4) out.push_back(l);
  if (out.empty()) out.push_back(std::min(first, n_layers - 1));
  return out;
}

}  // namespace esld
