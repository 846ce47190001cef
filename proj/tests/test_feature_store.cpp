#include <catch_amalgamated.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>

#include "esld/feature_store.hpp"
#include "support/synthetic.hpp"

using namespace esld;

namespace {

FeatureFile random_file(std::mt19937_64& rng, std::uint32_t dim, std::uint32_t count) {
  std::uniform_int_distribution<std::uint32_t> bits;
  std::uniform_int_distribution<int> label_pick(0, 2);
  FeatureFile f;
  f.header.dim = dim;
  f.header.count = count;
  f.header.layer = bits(rng) % 96;
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureRecord r;
    r.prompt_id = rng();
    const int l = label_pick(rng);
    r.label = l == 0 ? Label::benign : l == 1 ? Label::attack : Label::not_applicable;
    for (std::uint32_t j = 0; j < dim; ++j) {
      float v;
      do {
        v = std::bit_cast<float>(bits(rng));
      } while (!std::isfinite(v));
      r.vector.push_back(v);
    }
    f.records.push_back(std::move(r));
  }
  return f;
}

}  // namespace

TEST_CASE("feature file sizes follow the record arithmetic", "[feature_store]") {
  FeatureFileHeader h{kFeatureVersion, 4, 2, 0};
  std::vector<FeatureRecord> recs{{1, Label::attack, {1, 2, 3, 4}}, {2, Label::benign, {5, 6, 7, 8}}};
  CHECK(encode_feature_file(h, recs).size() == 84);
  CHECK(feature_file_size(4, 2) == 84);

  FeatureFileHeader empty{kFeatureVersion, 4, 0, 0};
  CHECK(encode_feature_file(empty, {}).size() == 20);
}

TEST_CASE("encoding rejects malformed records", "[feature_store]") {
  FeatureFileHeader h{kFeatureVersion, 4, 1, 0};
  std::vector<FeatureRecord> short_vec{{1, Label::attack, {1, 2, 3}}};
  CHECK_THROWS_AS(encode_feature_file(h, short_vec), DimensionError);

  std::vector<FeatureRecord> nan{{1, Label::attack, {1, 2, std::numeric_limits<float>::quiet_NaN(), 4}}};
  CHECK_THROWS_AS(encode_feature_file(h, nan), NonFiniteError);

  std::vector<FeatureRecord> two{{1, Label::attack, {1, 2, 3, 4}}, {2, Label::attack, {1, 2, 3, 4}}};
  CHECK_THROWS_AS(encode_feature_file(h, two), DimensionError);
}

TEST_CASE("decoding detects corruption", "[feature_store]") {
  std::mt19937_64 rng(1);
  const auto f = random_file(rng, 4, 5);
  auto bytes = encode_feature_file(f.header, f.records);

  SECTION("bad magic") {
    std::copy_n("XXXX", 4, bytes.begin());
    CHECK_THROWS_AS(decode_feature_file(bytes), FormatError);
  }
  SECTION("truncated payload") {
    bytes.resize(feature_file_size(4, 3));
    CHECK_THROWS_WITH(decode_feature_file(bytes), Catch::Matchers::ContainsSubstring("truncated"));
  }
  SECTION("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_feature_file(bytes), FormatError);
  }
  SECTION("short header") {
    bytes.resize(12);
    CHECK_THROWS_AS(decode_feature_file(bytes), FormatError);
  }
  SECTION("unknown version") {
    bytes[4] = 9;
    CHECK_THROWS_AS(decode_feature_file(bytes), FormatError);
  }
  SECTION("invalid label byte") {
    bytes[kFeatureHeaderBytes + 8] = 7;
    CHECK_THROWS_AS(decode_feature_file(bytes), FormatError);
  }
  SECTION("non-finite component") {
    const auto inf = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::infinity());
    for (int i = 0; i < 4; ++i) bytes[kFeatureHeaderBytes + 16 + i] = static_cast<unsigned char>(inf >> (8 * i));
    CHECK_THROWS_AS(decode_feature_file(bytes), NonFiniteError);
  }
}

TEST_CASE("header fields are little-endian at fixed offsets", "[feature_store]") {
  FeatureFileHeader h{kFeatureVersion, 0x01020304, 0, 0x0A0B0C0D};
  const auto bytes = encode_feature_file(h, {});
  CHECK(bytes[0] == 'E');
  CHECK(bytes[3] == 'D');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 0x04);
  CHECK(bytes[11] == 0x01);
  CHECK(bytes[16] == 0x0D);
  CHECK(bytes[19] == 0x0A);
}

TEST_CASE("random files round-trip bit-exactly through disk", "[feature_store][property]") {
  synth::TempDir dir;
  std::mt19937_64 rng(42);
  for (int i = 0; i < 50; ++i) {
    const auto dim = 1 + static_cast<std::uint32_t>(rng() % 16);
    const auto count = static_cast<std::uint32_t>(rng() % 20);
    const auto f = random_file(rng, dim, count);
    const auto path = dir / ("f" + std::to_string(i) + ".bin");
    const auto written = write_feature_file(f.header, f.records, path);
    REQUIRE(written == feature_file_size(dim, count));
    REQUIRE(std::filesystem::file_size(path) == written);
    const auto back = read_feature_file(path);
    REQUIRE(back.header == f.header);
    REQUIRE(back.records == f.records);
    REQUIRE(read_feature_header(path) == f.header);
  }
}

TEST_CASE("negative zero survives the round trip", "[feature_store]") {
  FeatureFileHeader h{kFeatureVersion, 2, 1, 3};
  std::vector<FeatureRecord> recs{{9, Label::benign, {-0.0f, 0.0f}}};
  const auto back = decode_feature_file(encode_feature_file(h, recs));
  CHECK(std::signbit(back.records[0].vector[0]));
  CHECK_FALSE(std::signbit(back.records[0].vector[1]));
}

TEST_CASE("to_matrix keeps row order and ids", "[feature_store]") {
  FeatureFile f;
  f.header = {kFeatureVersion, 2, 2, 5};
  f.records = {{7, Label::attack, {1.5f, 2.5f}}, {3, Label::attack, {-1.0f, 0.25f}}};
  const auto m = to_matrix(f);
  CHECK(m.layer == 5);
  CHECK(m.prompt_ids == std::vector<std::uint64_t>{7, 3});
  CHECK(m.rows(1, 0) == -1.0f);
  CHECK(m.dim() == 2);
}

namespace {

// Paper-shaped manifest: 6 UPIA attack, 4 XPIA attack, 4 shared benign.
std::vector<SourceDescriptor> reference_sources(const std::filesystem::path& dir) {
  const std::vector<std::string> upia{"aart", "beavertails", "donotanswer", "mosscap", "orbench_toxic", "yanismiraoui"};
  const std::vector<std::string> xpia{"AgentDojo", "BIPIA", "InjecAgent", "XPIA"};
  const std::vector<std::string> benign{"10k_prompts", "dolly15k", "enron", "softage"};
  std::vector<SourceDescriptor> out;
  auto add = [&](const std::string& id, std::vector<PoolKind> pools, SourceClass cls) {
    SourceDescriptor s{id, std::move(pools), cls, 3, {}};
    FeatureFile f;
    f.header = {kFeatureVersion, 2, 3, 4};
    for (std::uint64_t i = 0; i < 3; ++i) f.records.push_back({i, to_label(cls), {0.5f, -0.5f}});
    const auto path = dir / (id + ".bin");
    write_feature_file(f.header, f.records, path);
    s.feature_paths[4] = path;
    out.push_back(std::move(s));
  };
  for (const auto& id : upia) add(id, {PoolKind::upia}, SourceClass::attack);
  for (const auto& id : xpia) add(id, {PoolKind::xpia}, SourceClass::attack);
  for (const auto& id : benign) add(id, {PoolKind::upia, PoolKind::xpia}, SourceClass::benign);
  return out;
}

std::vector<std::string> ids(const std::vector<SourceDescriptor>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(s.source_id);
  return out;
}

}  // namespace

TEST_CASE("load_pool builds the UPIA and XPIA pools", "[feature_store]") {
  synth::TempDir dir;
  const auto sources = reference_sources(dir.path());
  write_manifest(dir / "manifest.jsonl", sources);

  const auto upia = load_pool(dir / "manifest.jsonl", PoolKind::upia);
  CHECK(upia.attack.size() == 6);
  CHECK(upia.benign.size() == 4);
  const auto xpia = load_pool(dir / "manifest.jsonl", PoolKind::xpia);
  CHECK(xpia.attack.size() == 4);
  CHECK(xpia.benign.size() == 4);
  CHECK(ids(xpia.benign) == ids(upia.benign));
  CHECK(upia.common_layers() == std::vector<LayerIndex>{4});

  SECTION("manifest line order does not matter") {
    auto shuffled = sources;
    std::mt19937_64 rng(3);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    write_manifest(dir / "shuffled.jsonl", shuffled);
    const auto again = load_pool(dir / "shuffled.jsonl", PoolKind::upia);
    CHECK(ids(again.attack) == ids(upia.attack));
    CHECK(ids(again.benign) == ids(upia.benign));
    for (std::size_t i = 0; i < again.attack.size(); ++i) {
      CHECK(again.attack[i].feature_paths == upia.attack[i].feature_paths);
    }
  }
  SECTION("relative paths resolve against the manifest directory") {
    const auto j = to_json(sources.front(), dir.path());
    CHECK(j["feature_paths"]["4"] == "aart.bin");
    CHECK(parse_source_descriptor(j, dir.path()).feature_paths.at(4) == dir / "aart.bin");
  }
}

TEST_CASE("load_pool rejects bad manifests", "[feature_store]") {
  synth::TempDir dir;
  auto sources = reference_sources(dir.path());

  SECTION("one attack source only") {
    std::vector<SourceDescriptor> few{sources[0], sources[10], sources[11]};
    write_manifest(dir / "m.jsonl", few);
    CHECK_THROWS_AS(load_pool(dir / "m.jsonl", PoolKind::upia), PoolError);
  }
  SECTION("duplicate source id") {
    sources.push_back(sources[0]);
    write_manifest(dir / "m.jsonl", sources);
    CHECK_THROWS_AS(load_pool(dir / "m.jsonl", PoolKind::upia), PoolError);
  }
  SECTION("missing feature file") {
    sources[1].feature_paths[4] = dir / "nope.bin";
    write_manifest(dir / "m.jsonl", sources);
    CHECK_THROWS_AS(load_pool(dir / "m.jsonl", PoolKind::upia), MissingInputError);
  }
  SECTION("prompt count disagrees with the file") {
    sources[2].prompt_count = 4;
    write_manifest(dir / "m.jsonl", sources);
    CHECK_THROWS_AS(load_pool(dir / "m.jsonl", PoolKind::upia), FormatError);
  }
  SECTION("layer key disagrees with the header") {
    sources[3].feature_paths = {{5, sources[3].feature_paths.at(4)}};
    write_manifest(dir / "m.jsonl", sources);
    CHECK_THROWS_AS(load_pool(dir / "m.jsonl", PoolKind::upia), FormatError);
  }
  SECTION("malformed line") {
    std::ofstream(dir / "m.jsonl") << "{\"source_id\": \n";
    CHECK_THROWS_AS(load_pool(dir / "m.jsonl", PoolKind::upia), FormatError);
  }
  SECTION("missing manifest") {
    CHECK_THROWS_AS(load_pool(dir / "absent.jsonl", PoolKind::upia), MissingInputError);
  }
}
