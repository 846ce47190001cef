#include <catch_amalgamated.hpp>

#include <random>

#include "esld/latency_report.hpp"
#include "support/fixtures.hpp"
#include "support/synthetic.hpp"

using namespace esld;

namespace {

TimingRecord record(const std::string& host, PoolKind task, Variant v, double ms, std::optional<LayerIndex> layer = {}) {
  TimingRecord r;
  r.host = host;
  r.task = task;
  r.variant = v;
  r.timed_iterations.assign(kTimedIterations, ms);
  r.layer = layer;
  return r;
}

}  // namespace

TEST_CASE("speedups of single cells", "[latency]") {
  const auto c = summarize_cell(record("LlamaGuard-3", PoolKind::upia, Variant::guard, 171.68),
                                record("LlamaGuard-3", PoolKind::upia, Variant::esld, 49.27, 16), 32);
  CHECK(c.speedup == Catch::Approx(3.48).margin(0.005));
  CHECK(c.guard_ms == 171.68);
  CHECK(c.esld_ms == 49.27);
  CHECK(c.depth_fraction == Catch::Approx(0.531).margin(0.0005));

  const auto s = summarize_cell(record("ShieldGemma-9B", PoolKind::upia, Variant::guard, 362.11),
                                record("ShieldGemma-9B", PoolKind::upia, Variant::esld, 87.38, 24), 42);
  CHECK(s.speedup == Catch::Approx(4.14).margin(0.005));

  const auto e = summarize_cell(record("h", PoolKind::xpia, Variant::guard, 10.0),
                                record("h", PoolKind::xpia, Variant::esld, 10.0, 0), 1);
  CHECK(e.speedup == 1.0);
}

TEST_CASE("constant iterations average to exactly that value", "[latency][property]") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 5000.0);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng);
    const std::vector<double> v(20, t);
    REQUIRE(mean_ms(v) == t);
  }
  CHECK(mean_ms(std::vector<double>{1.0, 2.0, 3.0, 6.0}) == 3.0);
  CHECK_THROWS_AS(mean_ms(std::vector<double>{}), MetricError);
}

TEST_CASE("depth fraction", "[latency]") {
  CHECK(depth_fraction(16, 32) == Catch::Approx(0.531).margin(0.0005));
  CHECK(depth_fraction(24, 42) == Catch::Approx(0.595).margin(0.0005));
  CHECK(depth_fraction(41, 42) == 1.0);
  CHECK_THROWS_AS(depth_fraction(42, 42), UsageError);
  CHECK_THROWS_AS(depth_fraction(0, 0), UsageError);
}

TEST_CASE("timing record validation", "[latency]") {
  auto g = record("h", PoolKind::upia, Variant::guard, 5.0);
  auto e = record("h", PoolKind::upia, Variant::esld, 2.0, 3);
  CHECK_NOTHROW(summarize_cell(g, e, 8));

  SECTION("wrong iteration count") {
    e.timed_iterations.pop_back();
    CHECK_THROWS_AS(summarize_cell(g, e, 8), FormatError);
  }
  SECTION("non-positive time") {
    g.timed_iterations[3] = 0.0;
    CHECK_THROWS_AS(summarize_cell(g, e, 8), FormatError);
  }
  SECTION("host mismatch") {
    e.host = "other";
    CHECK_THROWS_AS(summarize_cell(g, e, 8), UsageError);
  }
  SECTION("swapped variants") {
    CHECK_THROWS_AS(summarize_cell(e, g, 8), UsageError);
  }
  SECTION("esld record without a layer") {
    e.layer.reset();
    CHECK_THROWS_AS(summarize_cell(g, e, 8), FormatError);
  }
}

TEST_CASE("aggregate over the eight published cells", "[latency]") {
  const auto t1 = fixtures::read_csv(fixtures::published_dir() / "table1_headline.csv");
  std::vector<double> speedups, deltas;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    speedups.push_back(t1.num(i, "speedup"));
    deltas.push_back(t1.num(i, "delta_pp"));
  }
  const auto a = aggregate_speedups(speedups, deltas);
  CHECK(a.geometric_mean_speedup == Catch::Approx(3.29).margin(0.005));
  CHECK(a.min_speedup == 2.35);
  CHECK(a.max_speedup == 4.18);
  CHECK(a.mean_delta_pp == Catch::Approx(16.35).margin(1e-9));

  const double one[] = {2.5};
  CHECK(aggregate_speedups(one, {}).geometric_mean_speedup == Catch::Approx(2.5).epsilon(1e-15));

  SECTION("order-invariant and within range") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
      auto shuffled = speedups;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto b = aggregate_speedups(shuffled, {});
      CHECK(b.geometric_mean_speedup == Catch::Approx(a.geometric_mean_speedup).epsilon(1e-14));
      CHECK(b.geometric_mean_speedup >= b.min_speedup);
      CHECK(b.geometric_mean_speedup <= b.max_speedup);
    }
  }
  CHECK_THROWS_AS(aggregate_speedups({}, {}), UsageError);
  CHECK_THROWS_AS(aggregate_speedups(speedups, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("timing JSONL round-trip", "[latency]") {
  synth::TempDir dir;
  std::vector<TimingRecord> recs{record("a", PoolKind::upia, Variant::guard, 1.25),
                                 record("a", PoolKind::upia, Variant::esld, 0.5, 9)};
  recs[1].timed_iterations[4] = 0.1 + 0.2;
  write_timing_records(dir / "t.jsonl", recs);
  const auto back = read_timing_records(dir / "t.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].timed_iterations == recs[0].timed_iterations);
  CHECK(back[1].timed_iterations == recs[1].timed_iterations);
  CHECK_FALSE(back[0].layer.has_value());
  CHECK(back[1].layer == 9u);
  CHECK(back[1].warmup_count == 3);

  std::ofstream(dir / "bad.jsonl") << "{\"host\": \"a\", \"task\": \"UPIA\", \"variant\": \"fast\", \"timed_iterations\": []}\n";
  CHECK_THROWS_AS(read_timing_records(dir / "bad.jsonl"), FormatError);
  CHECK_THROWS_AS(read_timing_records(dir / "absent.jsonl"), MissingInputError);
}

TEST_CASE("published timing fixture reproduces deployment speedups", "[latency]") {
  const auto timing = read_timing_records(fixtures::published_dir() / "timing.jsonl");
  const auto t2 = fixtures::read_csv(fixtures::published_dir() / "table2_deployment.csv");
  const auto n_layers = fixtures::host_layers();
  REQUIRE(timing.size() == 16);
  for (std::size_t i = 0; i < t2.size(); ++i) {
    const auto host = t2.str(i, "host");
    const auto task = parse_pool_kind(t2.str(i, "task"));
    const TimingRecord *g = nullptr, *e = nullptr;
    for (const auto& r : timing) {
      if (r.host == host && r.task == task) (r.variant == Variant::guard ? g : e) = &r;
    }
    REQUIRE(g);
    REQUIRE(e);
    const auto c = summarize_cell(*g, *e, n_layers.at(host));
    CHECK(c.guard_ms == t2.num(i, "guard_ms"));
    CHECK(c.esld_ms == t2.num(i, "esld_ms"));
    CHECK(std::abs(c.speedup - t2.num(i, "speedup")) <= 0.005);
    CHECK(std::abs(100.0 * c.depth_fraction - t2.num(i, "depth_pct")) <= 0.05);
  }
}
