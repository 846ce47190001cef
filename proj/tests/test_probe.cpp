#include <catch_amalgamated.hpp>

#include <random>

#include "esld/probe.hpp"
#include "oracles/naive_linalg.hpp"
#include "support/random_data.hpp"

using namespace esld;

namespace {

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

double rel_norm(const Vector& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("Ledoit-Wolf degenerate inputs", "[probe]") {
  SECTION("identical rows center to zero") {
    Matrix x = Matrix::Constant(5, 3, 2.0);
    const auto est = ledoit_wolf_covariance(synth::centered(x));
    CHECK(est.grand_variance == 0.0);
    CHECK(est.delta == 1.0);
    CHECK(est.sigma.isZero(0.0));
    CHECK(est.sample_cov.isZero(0.0));
  }
  SECTION("one-dimensional features") {
    std::mt19937_64 rng(5);
    const auto x = synth::centered(synth::gaussian_rows(rng, 30, 1, 0.0, {1.7}));
    const auto est = ledoit_wolf_covariance(x);
    CHECK(est.delta == 1.0);
    CHECK(est.sigma(0, 0) == Catch::Approx(est.sample_cov(0, 0)).epsilon(1e-15));
  }
  SECTION("isotropic sample covariance") {
    // Rows +-e_j give S = (2/n) I exactly.
    Matrix x = Matrix::Zero(6, 3);
    for (int j = 0; j < 3; ++j) {
      x(2 * j, j) = 1.0;
      x(2 * j + 1, j) = -1.0;
    }
    const auto est = ledoit_wolf_covariance(x);
    CHECK(est.delta == 1.0);
    CHECK(est.sigma.isApprox(Matrix::Identity(3, 3) / 3.0, 1e-15));
  }
}

TEST_CASE("Ledoit-Wolf matches the five-formula oracle", "[probe][oracle]") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = synth::centered(synth::gaussian_rows(rng, 50, 8, 0.0, synth::random_scales(rng, 8)));
    const auto est = ledoit_wolf_covariance(x);
    const auto ref = oracle::ledoit_wolf(synth::to_rows(x));
    CHECK(synth::frobenius_rel_error(est.sigma, ref.sigma) <= 1e-10);
    CHECK(est.delta == Catch::Approx(ref.delta).margin(1e-12));
    CHECK(est.delta >= 0.0);
    CHECK(est.delta <= 1.0);
  }
}

TEST_CASE("shrunk covariance is symmetric PSD", "[probe][property]") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 25; ++rep) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng() % 40);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 12);
    const auto x = synth::centered(synth::gaussian_rows(rng, n, d, 0.0, synth::random_scales(rng, d)));
    const auto est = ledoit_wolf_covariance(x);
    CHECK(est.sigma.isApprox(est.sigma.transpose(), 0.0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(est.sigma);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    CHECK(est.delta >= 0.0);
    CHECK(est.delta <= 1.0);
  }
}

TEST_CASE("LDA on symmetric 1-d data puts the boundary at zero", "[probe]") {
  const auto m = fit_lda(col({1.0, 1.5, 0.5}), col({-1.0, -1.5, -0.5}));
  CHECK(m.weights[0] > 0.0);
  const double origin[] = {0.0};
  CHECK(score(m, std::span<const double>(origin)) == Catch::Approx(0.0).margin(1e-12));
  CHECK(m.n_attack == 3);
  CHECK(m.n_benign == 3);
}

TEST_CASE("isotropic LDA weights follow the mean difference", "[probe]") {
  // Each class is its mean plus the +-e_j pattern, so the pooled covariance is isotropic.
  Matrix base = Matrix::Zero(6, 3);
  for (int j = 0; j < 3; ++j) {
    base(2 * j, j) = 1.0;
    base(2 * j + 1, j) = -1.0;
  }
  Eigen::RowVector3d mu1(1.0, 2.0, -0.5), mu0(-0.5, 0.0, 0.25);
  Matrix a = base.rowwise() + mu1, b = base.rowwise() + mu0;
  const auto m = fit_lda(a, b);
  CHECK(m.delta == 1.0);
  const Vector diff = (mu1 - mu0).transpose();
  CHECK(m.weights.normalized().isApprox(diff.normalized(), 1e-12));
}

TEST_CASE("LDA matches the explicit-inverse oracle", "[probe][oracle]") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const auto scale = synth::random_scales(rng, 6);
    const auto a = synth::gaussian_rows(rng, 100 + rep, 6, 0.6, scale);
    const auto b = synth::gaussian_rows(rng, 100 - rep, 6, -0.6, scale);
    const auto m = fit_lda(a, b);
    const auto ref = oracle::lda(synth::to_rows(a), synth::to_rows(b));
    CHECK(rel_norm(m.weights, ref.w) <= 1e-8);
    CHECK(std::abs(m.bias - ref.b) <= 1e-8 * (1.0 + std::abs(ref.b)));
  }
}

TEST_CASE("LDA invariants", "[probe][property]") {
  std::mt19937_64 rng(31);
  const auto scale = synth::random_scales(rng, 5);
  const auto a = synth::gaussian_rows(rng, 60, 5, 0.8, scale);
  const auto b = synth::gaussian_rows(rng, 60, 5, -0.8, scale);
  const auto m = fit_lda(a, b, 7);
  CHECK(m.layer == 7);

  SECTION("row permutations give bit-identical fits") {
    std::vector<Eigen::Index> pa(60), pb(60);
    std::iota(pa.begin(), pa.end(), 0);
    std::iota(pb.begin(), pb.end(), 0);
    std::shuffle(pa.begin(), pa.end(), rng);
    std::shuffle(pb.begin(), pb.end(), rng);
    Matrix a2(60, 5), b2(60, 5);
    for (Eigen::Index i = 0; i < 60; ++i) {
      a2.row(i) = a.row(pa[i]);
      b2.row(i) = b.row(pb[i]);
    }
    const auto m2 = fit_lda(a2, b2, 7);
    CHECK(m2.weights == m.weights);
    CHECK(m2.bias == m.bias);
  }
  SECTION("balanced classes score the class midpoint at zero") {
    const Vector mid = 0.5 * (m.mean_attack + m.mean_benign);
    CHECK(std::abs(score(m, std::span<const double>(mid.data(), mid.size()))) <= 1e-9);
  }
  SECTION("swapping classes negates w and b") {
    const auto s = fit_lda(b, a);
    CHECK((s.weights + m.weights).norm() <= 1e-9);
    CHECK(std::abs(s.bias + m.bias) <= 1e-9);
  }
  SECTION("unbalanced classes carry the log prior ratio") {
    const auto u = fit_lda(a.topRows(40), b);
    const Vector mid = 0.5 * (u.mean_attack + u.mean_benign);
    CHECK(score(u, std::span<const double>(mid.data(), mid.size())) == Catch::Approx(std::log(40.0 / 60.0)));
  }
  SECTION("predict agrees with the sign rule") {
    std::normal_distribution<double> g(0.0, 2.0);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> h(5);
      for (auto& v : h) v = g(rng);
      const double s = score(m, std::span<const double>(h));
      CHECK((predict(m, std::span<const double>(h)) == Label::attack) == (s >= 0.0));
    }
  }
}

TEST_CASE("score matches naive summation", "[probe]") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  ProbeModel m;
  m.weights = Vector(9);
  for (auto& w : m.weights) w = g(rng);
  m.bias = g(rng);
  std::vector<double> h(9);
  for (auto& v : h) v = g(rng);
  long double ref = m.bias;
  for (int i = 0; i < 9; ++i) ref += static_cast<long double>(m.weights[i]) * h[i];
  CHECK(std::abs(score(m, std::span<const double>(h)) - static_cast<double>(ref)) <= 1e-12);

  ProbeModel zero;
  zero.weights = Vector::Zero(9);
  CHECK(score(zero, std::span<const double>(h)) == 0.0);
}

TEST_CASE("decision threshold is inclusive", "[probe]") {
  CHECK(predict_from_score(0.0) == Label::attack);
  CHECK(predict_from_score(-1e-9) == Label::benign);
  CHECK(predict_from_score(3.2) == Label::attack);
}

TEST_CASE("fit_lda and score reject bad input", "[probe]") {
  CHECK_THROWS_AS(fit_lda(col({1.0}), col({0.0, 1.0})), DegenerateDataError);
  CHECK_THROWS_AS(fit_lda(Matrix::Zero(3, 2), Matrix::Zero(3, 3)), DimensionError);
  CHECK_THROWS_AS(fit_lda(Matrix::Constant(3, 2, 1.0), Matrix::Constant(3, 2, 1.0)), DegenerateDataError);
  Matrix bad = Matrix::Zero(3, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_lda(bad, Matrix::Identity(3, 2)), NonFiniteError);

  const auto m = fit_lda(col({1.0, 2.0}), col({-1.0, -2.0}));
  const double two[] = {1.0, 2.0};
  CHECK_THROWS_AS(score(m, std::span<const double>(two)), DimensionError);
}

TEST_CASE("probe JSON round-trips exactly", "[probe]") {
  std::mt19937_64 rng(51);
  const auto scale = synth::random_scales(rng, 4);
  const auto m = fit_lda(synth::gaussian_rows(rng, 30, 4, 1.0, scale), synth::gaussian_rows(rng, 20, 4, -1.0, scale), 12);
  const auto back = probe_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(back.layer == 12);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.mean_attack == m.mean_attack);
  CHECK(back.delta == m.delta);
  CHECK(back.n_attack == 30);

  auto j = to_json(m);
  j["d"] = 5;
  CHECK_THROWS_AS(probe_from_json(j), DimensionError);
  j.erase("w");
  CHECK_THROWS_AS(probe_from_json(j), FormatError);
}
