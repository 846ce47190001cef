#pragma once

// Binary feature files and pool manifests.
//
// Feature file layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "ESLD"
//   4       2     version (1)
//   6       2     zero padding
//   8       4     hidden dim d
//   12      4     record count n
//   16      4     layer index L (0-indexed)
//   20      ...   n records of: prompt_id u64, label u8, 7 zero bytes,
//                 d x IEEE-754 binary32
//
// A file therefore has exactly 20 + n * (16 + 4d) bytes.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esld/errors.hpp"
#include "esld/types.hpp"

namespace esld {

inline constexpr std::array<char, 4> kFeatureMagic{'E', 'S', 'L', 'D'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;
inline constexpr std::size_t kRecordPrefixBytes = 16;

struct FeatureFileHeader {
  std::uint16_t version = kFeatureVersion;
  std::uint32_t dim = 0;
  std::uint32_t count = 0;
  LayerIndex layer = 0;

  friend bool operator==(const FeatureFileHeader&, const FeatureFileHeader&) = default;
};

struct FeatureRecord {
  std::uint64_t prompt_id = 0;
  Label label = Label::benign;
  std::vector<float> vector;

  // Bitwise comparison, so -0.0f != 0.0f here.
  friend bool operator==(const FeatureRecord& a, const FeatureRecord& b) {
    return a.prompt_id == b.prompt_id && a.label == b.label &&
           a.vector.size() == b.vector.size() &&
           (a.vector.empty() ||
            std::memcmp(a.vector.data(), b.vector.data(), a.vector.size() * sizeof(float)) == 0);
  }
};

struct FeatureFile {
  FeatureFileHeader header;
  std::vector<FeatureRecord> records;
};

inline std::size_t feature_file_size(std::uint32_t dim, std::uint32_t count) {
  return kFeatureHeaderBytes + static_cast<std::size_t>(count) * (kRecordPrefixBytes + 4u * dim);
}

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    u = static_cast<std::make_unsigned_t<T>>((u << 8) | p[i]);
  }
  return static_cast<T>(u);
}

inline bool valid_label_byte(unsigned char b) {
  return b == 0 || b == 1 || b == 255;
}

inline std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline FeatureFileHeader parse_header(std::span<const unsigned char> bytes, const std::string& where) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError(where + ": file shorter than the 20-byte header");
  }
  if (!std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin(),
                  [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; })) {
    throw FormatError(where + ": bad magic");
  }
  FeatureFileHeader h;
  h.version = get_le<std::uint16_t>(bytes.data() + 4);
  if (h.version != kFeatureVersion) {
    throw FormatError(where + ": unsupported version " + std::to_string(h.version));
  }
  h.dim = get_le<std::uint32_t>(bytes.data() + 8);
  h.count = get_le<std::uint32_t>(bytes.data() + 12);
  h.layer = get_le<std::uint32_t>(bytes.data() + 16);
  if (h.dim == 0) throw FormatError(where + ": hidden dim must be >= 1");
  return h;
}

}  // namespace detail

// Serialize to an in-memory buffer; write_feature_file puts it on disk.
inline std::vector<unsigned char> encode_feature_file(const FeatureFileHeader& header,
                                                      std::span<const FeatureRecord> records) {
  if (header.dim == 0) throw DimensionError("hidden dim must be >= 1");
  if (records.size() != header.count) {
    throw DimensionError("header declares " + std::to_string(header.count) + " records, got " +
                         std::to_string(records.size()));
  }
  std::vector<unsigned char> out;
  out.reserve(feature_file_size(header.dim, header.count));
  out.insert(out.end(), kFeatureMagic.begin(), kFeatureMagic.end());
  detail::put_le<std::uint16_t>(out, kFeatureVersion);
  detail::put_le<std::uint16_t>(out, 0);
  detail::put_le<std::uint32_t>(out, header.dim);
  detail::put_le<std::uint32_t>(out, header.count);
  detail::put_le<std::uint32_t>(out, header.layer);
  for (const auto& r : records) {
    if (r.vector.size() != header.dim) {
      throw DimensionError("record " + std::to_string(r.prompt_id) + " has dimension " +
                           std::to_string(r.vector.size()) + ", header declares " +
                           std::to_string(header.dim));
    }
    if (!detail::valid_label_byte(static_cast<unsigned char>(r.label))) {
      throw FormatError("record " + std::to_string(r.prompt_id) + " has invalid label");
    }
    detail::put_le<std::uint64_t>(out, r.prompt_id);
    out.push_back(static_cast<unsigned char>(r.label));
    out.insert(out.end(), 7, 0);
    for (float v : r.vector) {
      if (!std::isfinite(v)) {
        throw NonFiniteError("record " + std::to_string(r.prompt_id) + " has a non-finite component");
      }
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

inline FeatureFile decode_feature_file(std::span<const unsigned char> bytes,
                                       const std::string& where = "feature file") {
  FeatureFile file;
  file.header = detail::parse_header(bytes, where);
  const auto& h = file.header;
  const std::size_t record_bytes = kRecordPrefixBytes + 4u * static_cast<std::size_t>(h.dim);
  const std::size_t payload = bytes.size() - kFeatureHeaderBytes;
  if (static_cast<std::size_t>(h.count) * record_bytes > payload) {
    throw FormatError(where + ": truncated, header declares " + std::to_string(h.count) +
                      " records but only " + std::to_string(payload / record_bytes) + " present");
  }
  if (static_cast<std::size_t>(h.count) * record_bytes != payload) {
    throw FormatError(where + ": " + std::to_string(payload - static_cast<std::size_t>(h.count) * record_bytes) +
                      " trailing bytes after the last record");
  }
  file.records.resize(h.count);
  const unsigned char* p = bytes.data() + kFeatureHeaderBytes;
  for (auto& r : file.records) {
    r.prompt_id = detail::get_le<std::uint64_t>(p);
    if (!detail::valid_label_byte(p[8])) {
      throw FormatError(where + ": invalid label byte for prompt " + std::to_string(r.prompt_id));
    }
    r.label = static_cast<Label>(p[8]);
    p += kRecordPrefixBytes;
    r.vector.resize(h.dim);
    for (auto& v : r.vector) {
      v = std::bit_cast<float>(detail::get_le<std::uint32_t>(p));
      if (!std::isfinite(v)) {
        throw NonFiniteError(where + ": non-finite value for prompt " + std::to_string(r.prompt_id));
      }
      p += 4;
    }
  }
  return file;
}

inline std::size_t write_feature_file(const FeatureFileHeader& header,
                                      std::span<const FeatureRecord> records,
                                      const std::filesystem::path& path) {
  const auto bytes = encode_feature_file(header, records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingInputError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
  return bytes.size();
}

inline FeatureFile read_feature_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_all_bytes(path);
  return decode_feature_file(bytes, path.string());
}

inline FeatureFileHeader read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::array<unsigned char, kFeatureHeaderBytes> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  return detail::parse_header(std::span<const unsigned char>(buf.data(), static_cast<std::size_t>(in.gcount())),
                              path.string());
}

// Dense view of one file: row i is the vector of prompt_ids[i].
struct FeatureMatrix {
  LayerIndex layer = 0;
  std::vector<std::uint64_t> prompt_ids;
  std::vector<Label> labels;
  MatrixF rows;

  std::size_t size() const { return prompt_ids.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

inline FeatureMatrix to_matrix(const FeatureFile& file) {
  FeatureMatrix m;
  m.layer = file.header.layer;
  m.rows.resize(file.header.count, file.header.dim);
  m.prompt_ids.reserve(file.records.size());
  m.labels.reserve(file.records.size());
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    const auto& r = file.records[i];
    m.prompt_ids.push_back(r.prompt_id);
    m.labels.push_back(r.label);
    m.rows.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXf>(r.vector.data(), static_cast<Eigen::Index>(r.vector.size()));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Manifests and pools

struct SourceDescriptor {
  std::string source_id;
  std::vector<PoolKind> pools;  // benign sources are usually shared by both pools
  SourceClass source_class = SourceClass::attack;
  std::uint32_t prompt_count = 0;
  std::map<LayerIndex, std::filesystem::path> feature_paths;

  bool in_pool(PoolKind p) const { return std::find(pools.begin(), pools.end(), p) != pools.end(); }
};

struct SourcePool {
  PoolKind kind = PoolKind::upia;
  std::vector<SourceDescriptor> attack;  // sorted by source_id
  std::vector<SourceDescriptor> benign;  // sorted by source_id

  const SourceDescriptor& find(const std::string& id) const {
    for (const auto* side : {&attack, &benign}) {
      for (const auto& s : *side) {
        if (s.source_id == id) return s;
      }
    }
    throw PoolError("source '" + id + "' is not in the pool");
  }

  // Layers for which every source has a feature file.
  std::vector<LayerIndex> common_layers() const {
    std::vector<LayerIndex> out;
    bool first = true;
    for (const auto* side : {&attack, &benign}) {
      for (const auto& s : *side) {
        std::vector<LayerIndex> mine;
        for (const auto& [l, p] : s.feature_paths) mine.push_back(l);
        if (first) {
          out = std::move(mine);
          first = false;
        } else {
          std::vector<LayerIndex> keep;
          std::set_intersection(out.begin(), out.end(), mine.begin(), mine.end(), std::back_inserter(keep));
          out = std::move(keep);
        }
      }
    }
    return out;
  }
};

// Checks |A| >= 2, |B| >= 2 and disjointness, and sorts both sides.
inline void validate_pool(SourcePool& pool) {
  auto by_id = [](const SourceDescriptor& a, const SourceDescriptor& b) { return a.source_id < b.source_id; };
  std::sort(pool.attack.begin(), pool.attack.end(), by_id);
  std::sort(pool.benign.begin(), pool.benign.end(), by_id);
  if (pool.attack.size() < 2 || pool.benign.size() < 2) {
    throw PoolError(std::string(to_string(pool.kind)) + " pool needs at least 2 attack and 2 benign sources (got " +
                    std::to_string(pool.attack.size()) + " attack, " + std::to_string(pool.benign.size()) +
                    " benign)");
  }
  std::set<std::string> seen;
  for (const auto* side : {&pool.attack, &pool.benign}) {
    for (const auto& s : *side) {
      if (!seen.insert(s.source_id).second) throw PoolError("duplicate source_id '" + s.source_id + "'");
    }
  }
}

inline SourceDescriptor parse_source_descriptor(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  SourceDescriptor s;
  try {
    s.source_id = j.at("source_id").get<std::string>();
    const auto& pool = j.at("pool");
    if (pool.is_array()) {
      for (const auto& p : pool) s.pools.push_back(parse_pool_kind(p.get<std::string>()));
    } else {
      s.pools.push_back(parse_pool_kind(pool.get<std::string>()));
    }
    s.source_class = parse_source_class(j.at("class").get<std::string>());
    s.prompt_count = j.at("prompt_count").get<std::uint32_t>();
    for (const auto& [key, value] : j.at("feature_paths").items()) {
      std::filesystem::path p = value.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      s.feature_paths[static_cast<LayerIndex>(std::stoul(key))] = p;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest record: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("manifest record: feature_paths keys must be layer indices");
  }
  return s;
}

inline nlohmann::json to_json(const SourceDescriptor& s, const std::filesystem::path& base_dir = {}) {
  nlohmann::json pools = nlohmann::json::array();
  for (auto p : s.pools) pools.push_back(std::string(to_string(p)));
  nlohmann::json paths = nlohmann::json::object();
  for (const auto& [l, p] : s.feature_paths) {
    paths[std::to_string(l)] = base_dir.empty() ? p.generic_string() : p.lexically_relative(base_dir).generic_string();
  }
  return {{"source_id", s.source_id},
          {"pool", s.pools.size() == 1 ? pools[0] : pools},
          {"class", std::string(to_string(s.source_class))},
          {"prompt_count", s.prompt_count},
          {"feature_paths", paths}};
}

inline std::vector<SourceDescriptor> read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw MissingInputError("cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  std::vector<SourceDescriptor> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    auto s = parse_source_descriptor(j, base);
    if (!ids.insert(s.source_id).second) {
      throw PoolError(manifest_path.string() + ": duplicate source_id '" + s.source_id + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& manifest_path, std::span<const SourceDescriptor> sources) {
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw MissingInputError("cannot open " + manifest_path.string() + " for writing");
  for (const auto& s : sources) out << to_json(s, manifest_path.parent_path()).dump() << '\n';
}

// Reads the manifest, keeps the sources of `kind`, and verifies that every
// referenced feature file exists and agrees with prompt_count.
inline SourcePool load_pool(const std::filesystem::path& manifest_path, PoolKind kind) {
  SourcePool pool;
  pool.kind = kind;
  for (auto& s : read_manifest(manifest_path)) {
    if (!s.in_pool(kind)) continue;
    (s.source_class == SourceClass::attack ? pool.attack : pool.benign).push_back(std::move(s));
  }
  validate_pool(pool);
  std::map<LayerIndex, std::uint32_t> dims;
  for (const auto* side : {&pool.attack, &pool.benign}) {
    for (const auto& s : *side) {
      for (const auto& [layer, path] : s.feature_paths) {
        if (!std::filesystem::exists(path)) {
          throw MissingInputError("source '" + s.source_id + "' layer " + std::to_string(layer) +
                                  ": missing feature file " + path.string());
        }
        const auto h = read_feature_header(path);
        if (h.count != s.prompt_count) {
          throw FormatError("source '" + s.source_id + "': " + path.string() + " holds " + std::to_string(h.count) +
                            " records, manifest says " + std::to_string(s.prompt_count));
        }
        if (h.layer != layer) {
          throw FormatError(path.string() + ": header layer " + std::to_string(h.layer) +
                            " does not match manifest layer " + std::to_string(layer));
        }
        auto [it, inserted] = dims.emplace(layer, h.dim);
        if (!inserted && it->second != h.dim) {
          throw DimensionError("layer " + std::to_string(layer) + " has inconsistent hidden dims across sources");
        }
      }
    }
  }
  return pool;
}

}  // namespace esld
