#pragma once

// Cross-source contamination audit.
//
// Every candidate source is treated as held-out against the union of all
// other candidates of the same class. Two families of statistics are taken:
// n-gram containment over lowercased whitespace tokens, and nearest-neighbour
// cosine over precomputed sentence embeddings. A source is admitted when its
// 13-gram containment and its duplicate rate at cosine 0.85 are both at most
// 0.05.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "esld/detail/parallel.hpp"
#include "esld/detail/text.hpp"
#include "esld/errors.hpp"
#include "esld/feature_store.hpp"
#include "esld/types.hpp"

namespace esld {

struct Document {
  std::string doc_id;
  std::string text;
};

struct DocumentSet {
  std::string source_id;
  std::vector<Document> documents;
};

// Unit-norm embedding rows, one per document.
struct EmbeddingSet {
  std::string source_id;
  std::vector<std::uint64_t> ids;
  Matrix vectors;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

struct NeighbourStats {
  double mean_nn_cos = 0.0;
  double p95_nn_cos = 0.0;
  double dup_rate_loose = 0.0;   // NN cosine >= 0.70 by default
  double dup_rate_strict = 0.0;  // NN cosine >= 0.85 by default
};

struct AuditConfig {
  std::size_t ngram_short = 7;
  std::size_t ngram_long = 13;
  double contamination_ceiling = 0.05;
  double cos_loose = 0.70;
  double cos_strict = 0.85;
  double dup_ceiling = 0.05;
};

struct SourceAudit {
  std::string pool;  // free-form tag carried through to the report
  std::string source_id;
  SourceClass source_class = SourceClass::attack;
  double contam_7gram = 0.0;
  double contam_13gram = 0.0;
  std::optional<double> mean_nn_cos;
  std::optional<double> p95_nn_cos;
  double dup_rate_070 = 0.0;
  double dup_rate_085 = 0.0;
  bool admitted = false;
};

struct AuditCandidate {
  std::string pool;
  SourceClass source_class = SourceClass::attack;
  DocumentSet documents;
  EmbeddingSet embeddings;
};

using ShingleSet = std::unordered_set<std::string>;

inline constexpr double kEmbeddingNormTolerance = 1e-3;

// ---------------------------------------------------------------------------
// Lexical overlap

// n-token windows over lowercased, whitespace-split text. Tokens are joined
// with a single space, which never occurs inside a token.
inline ShingleSet shingles(std::string_view text, std::size_t n) {
  if (n == 0) throw UsageError("shingle size must be >= 1");
  ShingleSet out;
  const auto tokens = detail::lowercase_tokens(text);
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back(' ');
      key += tokens[i + k];
    }
    out.insert(std::move(key));
  }
  return out;
}

inline ShingleSet build_shingle_pool(std::span<const DocumentSet* const> sets, std::size_t n) {
  ShingleSet pool;
  for (const auto* set : sets) {
    for (const auto& doc : set->documents) pool.merge(shingles(doc.text, n));
  }
  return pool;
}

namespace detail {

template <typename InPool>
double containment_rate_impl(const DocumentSet& heldout, std::size_t n, InPool&& in_pool) {
  if (heldout.documents.empty()) {
    throw MissingInputError("containment_rate: held-out set '" + heldout.source_id + "' is empty");
  }
  std::size_t hits = 0;
  for (const auto& doc : heldout.documents) {
    const auto keys = shingles(doc.text, n);
    if (std::any_of(keys.begin(), keys.end(), in_pool)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(heldout.documents.size());
}

// Remembers up to two distinct owning sources per shingle, which is enough to
// answer "does anyone other than S own this key".
class ShingleOwners {
 public:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  void add(const DocumentSet& set, std::uint32_t owner, std::size_t n) {
    for (const auto& doc : set.documents) {
      for (auto& key : shingles(doc.text, n)) {
        auto [it, inserted] = owners_.try_emplace(std::move(key), std::array<std::uint32_t, 2>{owner, kNone});
        if (inserted) continue;
        auto& o = it->second;
        if (o[0] != owner && o[1] == kNone) o[1] = owner;
      }
    }
  }

  bool owned_by_other(const std::string& key, std::uint32_t self) const {
    const auto it = owners_.find(key);
    if (it == owners_.end()) return false;
    return it->second[0] != self || it->second[1] != kNone;
  }

 private:
  std::unordered_map<std::string, std::array<std::uint32_t, 2>> owners_;
};

}  // namespace detail

// Fraction of held-out documents sharing at least one n-gram with the pool.
// Documents shorter than n tokens have no shingles and count as clean.
inline double containment_rate(const DocumentSet& heldout, const ShingleSet& train_pool, std::size_t n) {
  return detail::containment_rate_impl(heldout, n,
                                       [&](const std::string& key) { return train_pool.contains(key); });
}

// ---------------------------------------------------------------------------
// Semantic overlap

// Validates |v| = 1 within kEmbeddingNormTolerance and renormalizes exactly.
inline EmbeddingSet make_embedding_set(std::string source_id, std::vector<std::uint64_t> ids, Matrix vectors) {
  if (ids.size() != static_cast<std::size_t>(vectors.rows())) {
    throw DimensionError("embedding set '" + source_id + "': id count and row count differ");
  }
  if (!vectors.allFinite()) throw NonFiniteError("embedding set '" + source_id + "' has non-finite values");
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    const double norm = vectors.row(i).norm();
    if (std::abs(norm - 1.0) > kEmbeddingNormTolerance) {
      throw FormatError("embedding set '" + source_id + "': row " + std::to_string(i) + " has norm " +
                        std::to_string(norm) + ", expected unit norm");
    }
    vectors.row(i) /= norm;
  }
  return EmbeddingSet{std::move(source_id), std::move(ids), std::move(vectors)};
}

inline EmbeddingSet embedding_set_from_matrix(std::string source_id, const FeatureMatrix& m) {
  return make_embedding_set(std::move(source_id), m.prompt_ids, m.rows.cast<double>());
}

// Nearest-rank percentile: the ceil(q/100 * N)-th smallest value.
inline double nearest_rank_percentile(std::vector<double> values, unsigned q) {
  if (values.empty()) throw MetricError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t rank = (static_cast<std::size_t>(q) * n + 99) / 100;
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

// Exhaustive nearest neighbour by dot product over unit vectors.
inline std::vector<double> nearest_neighbour_cosines(const EmbeddingSet& heldout,
                                                     std::span<const EmbeddingSet* const> train) {
  std::size_t train_rows = 0;
  for (const auto* t : train) {
    if (t->dim() != heldout.dim()) {
      throw DimensionError("embedding dims differ: '" + heldout.source_id + "' vs '" + t->source_id + "'");
    }
    train_rows += t->size();
  }
  if (heldout.size() == 0) throw MissingInputError("held-out embedding set '" + heldout.source_id + "' is empty");
  if (train_rows == 0) throw MissingInputError("train embedding pool for '" + heldout.source_id + "' is empty");

  std::vector<double> best(heldout.size(), -std::numeric_limits<double>::infinity());
  constexpr Eigen::Index kBlock = 512;
  for (const auto* t : train) {
    for (Eigen::Index start = 0; start < heldout.vectors.rows(); start += kBlock) {
      const Eigen::Index rows = std::min(kBlock, heldout.vectors.rows() - start);
      const Eigen::MatrixXd sims = t->vectors * heldout.vectors.middleRows(start, rows).transpose();
      for (Eigen::Index c = 0; c < rows; ++c) {
        auto& b = best[static_cast<std::size_t>(start + c)];
        b = std::max(b, sims.col(c).maxCoeff());
      }
    }
  }
  return best;
}

inline NeighbourStats embedding_nn_stats(const EmbeddingSet& heldout, std::span<const EmbeddingSet* const> train,
                                         double cos_loose = 0.70, double cos_strict = 0.85) {
  const auto nn = nearest_neighbour_cosines(heldout, train);
  NeighbourStats st;
  std::size_t loose = 0, strict = 0;
  double sum = 0.0;
  for (double c : nn) {
    sum += c;
    if (c >= cos_loose) ++loose;
    if (c >= cos_strict) ++strict;
  }
  const auto n = static_cast<double>(nn.size());
  st.mean_nn_cos = sum / n;
  st.p95_nn_cos = nearest_rank_percentile(nn, 95);
  st.dup_rate_loose = static_cast<double>(loose) / n;
  st.dup_rate_strict = static_cast<double>(strict) / n;
  return st;
}

inline NeighbourStats embedding_nn_stats(const EmbeddingSet& heldout, const EmbeddingSet& train,
                                         double cos_loose = 0.70, double cos_strict = 0.85) {
  const EmbeddingSet* one[] = {&train};
  return embedding_nn_stats(heldout, std::span<const EmbeddingSet* const>(one), cos_loose, cos_strict);
}

// ---------------------------------------------------------------------------
// Admission

inline bool admit_source(const SourceAudit& audit, const AuditConfig& config = {}) {
  return audit.contam_13gram <= config.contamination_ceiling && audit.dup_rate_085 <= config.dup_ceiling;
}

// Audits every candidate against the union of the other same-class
// candidates. Output is ordered by (class, source_id), independent of the
// input order.
inline std::vector<SourceAudit> audit_pool(std::span<const AuditCandidate> candidates, const AuditConfig& config = {},
                                           std::size_t threads = 1) {
  std::map<SourceClass, std::vector<std::size_t>> by_class;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!ids.insert(c.documents.source_id).second) {
      throw PoolError("duplicate audit candidate '" + c.documents.source_id + "'");
    }
    by_class[c.source_class].push_back(i);
  }
  if (by_class.empty()) throw UsageError("audit_pool: no candidates");
  for (auto& [cls, members] : by_class) {
    if (members.size() < 2) {
      throw PoolError("audit_pool: class " + std::string(to_string(cls)) + " needs at least 2 candidates");
    }
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return candidates[a].documents.source_id < candidates[b].documents.source_id;
    });
  }

  std::vector<std::size_t> order;
  for (const auto& [cls, members] : by_class) order.insert(order.end(), members.begin(), members.end());

  // Owner indices for the short and long shingle sizes, per class.
  std::map<SourceClass, std::pair<detail::ShingleOwners, detail::ShingleOwners>> owners;
  for (const auto& [cls, members] : by_class) {
    auto& [short_owners, long_owners] = owners[cls];
    for (std::size_t i : members) {
      short_owners.add(candidates[i].documents, static_cast<std::uint32_t>(i), config.ngram_short);
      long_owners.add(candidates[i].documents, static_cast<std::uint32_t>(i), config.ngram_long);
    }
  }

  std::vector<SourceAudit> out(order.size());
  detail::parallel_for(order.size(), threads, [&](std::size_t slot) {
    const std::size_t i = order[slot];
    const auto& cand = candidates[i];
    const auto self = static_cast<std::uint32_t>(i);
    const auto& [short_owners, long_owners] = owners.at(cand.source_class);

    SourceAudit a;
    a.pool = cand.pool;
    a.source_id = cand.documents.source_id;
    a.source_class = cand.source_class;
    a.contam_7gram = detail::containment_rate_impl(
        cand.documents, config.ngram_short, [&](const std::string& k) { return short_owners.owned_by_other(k, self); });
    a.contam_13gram = detail::containment_rate_impl(
        cand.documents, config.ngram_long, [&](const std::string& k) { return long_owners.owned_by_other(k, self); });

    std::vector<const EmbeddingSet*> train;
    for (std::size_t j : by_class.at(cand.source_class)) {
      if (j != i) train.push_back(&candidates[j].embeddings);
    }
    const auto nn = embedding_nn_stats(cand.embeddings, train, config.cos_loose, config.cos_strict);
    a.mean_nn_cos = nn.mean_nn_cos;
    a.p95_nn_cos = nn.p95_nn_cos;
    a.dup_rate_070 = nn.dup_rate_loose;
    a.dup_rate_085 = nn.dup_rate_strict;
    a.admitted = admit_source(a, config);
    out[slot] = std::move(a);
  });
  return out;
}

// ---------------------------------------------------------------------------
// I/O

// Line-delimited {"doc_id": ..., "text": ...}; numeric doc ids are accepted.
inline DocumentSet read_documents(const std::filesystem::path& path, std::string source_id) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open documents " + path.string());
  DocumentSet set{std::move(source_id), {}};
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& id = j.at("doc_id");
      Document doc{id.is_string() ? id.get<std::string>() : id.dump(), j.at("text").get<std::string>()};
      if (!seen.insert(doc.doc_id).second) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": duplicate doc_id " + doc.doc_id);
      }
      set.documents.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

inline std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline constexpr std::string_view kAuditReportHeader =
    "pool,source,class,contam_7gram,contam_13gram,mean_nn_cos,p95_nn_cos,dup_rate_070,dup_rate_085,admitted";

inline void write_audit_report(std::ostream& out, std::span<const SourceAudit> rows) {
  out << kAuditReportHeader << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_fraction(*v) : std::string("NA"); };
  for (const auto& r : rows) {
    out << r.pool << ',' << r.source_id << ',' << to_string(r.source_class) << ',' << format_fraction(r.contam_7gram)
        << ',' << format_fraction(r.contam_13gram) << ',' << opt(r.mean_nn_cos) << ',' << opt(r.p95_nn_cos) << ','
        << format_fraction(r.dup_rate_070) << ',' << format_fraction(r.dup_rate_085) << ','
        << (r.admitted ? "admit" : "reject") << '\n';
  }
}

inline std::vector<SourceAudit> read_audit_report(std::istream& in, const std::string& where = "audit report") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(where + ": empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kAuditReportHeader) throw FormatError(where + ": unexpected header");
  std::vector<SourceAudit> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) throw FormatError(where + ":" + std::to_string(line_no) + ": expected 10 columns");
    auto num = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw FormatError(where + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
      }
    };
    auto opt = [&](const std::string& s) { return s == "NA" ? std::optional<double>{} : std::optional(num(s)); };
    SourceAudit a;
    a.pool = f[0];
    a.source_id = f[1];
    a.source_class = parse_source_class(f[2]);
    a.contam_7gram = num(f[3]);
    a.contam_13gram = num(f[4]);
    a.mean_nn_cos = opt(f[5]);
    a.p95_nn_cos = opt(f[6]);
    a.dup_rate_070 = num(f[7]);
    a.dup_rate_085 = num(f[8]);
    a.admitted = f[9] == "admit";
    rows.push_back(std::move(a));
  }
  return rows;
}

}  // namespace esld
