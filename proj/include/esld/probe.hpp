#pragma once

// Regularized two-class LDA on last-token hidden states.
//
// The pooled within-class covariance is shrunk toward a scaled identity with
// the Ledoit-Wolf intensity, then the discriminant direction is obtained from
// a Cholesky solve. Scores are s(h) = w'h + b and the verdict is attack iff
// s(h) >= 0. There is no tunable threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esld/errors.hpp"
#include "esld/types.hpp"

namespace esld {

struct CovarianceEstimate {
  Matrix sigma;           // shrunk covariance
  Matrix sample_cov;      // S = X'X / n
  double delta = 1.0;     // shrinkage intensity in [0, 1]
  double grand_variance = 0.0;  // m = trace(S) / d
};

struct ProbeModel {
  LayerIndex layer = 0;
  Vector weights;
  double bias = 0.0;
  Vector mean_benign;
  Vector mean_attack;
  double delta = 1.0;
  std::size_t n_attack = 0;
  std::size_t n_benign = 0;

  std::size_t dim() const { return static_cast<std::size_t>(weights.size()); }
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteError(std::string(what) + " contains NaN or Inf");
}

// Rows in lexicographic order. Makes every reduction below independent of the
// caller's row order, so fits are bit-identical under row permutations.
inline Matrix canonical_rows(const Matrix& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    }
    return false;
  });
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(order[i]);
  return out;
}

inline Vector column_mean(const Matrix& x) {
  return x.colwise().sum().transpose() / static_cast<double>(x.rows());
}

}  // namespace detail

// Ledoit-Wolf shrinkage toward m*I for already-centered rows.
//
//   S   = X'X / n,  m = tr(S) / d,  d2 = ||S - mI||_F^2
//   b2  = min(d2, (1/n^2) sum_k ||x_k x_k' - S||_F^2)
//   delta = b2 / d2  (1 when d2 == 0)
//
// The per-sample sum is evaluated in closed form: since
// sum_k x_k' S x_k = n ||S||_F^2, it equals sum_k ||x_k||^4 - n ||S||_F^2.
inline CovarianceEstimate ledoit_wolf_covariance(const Matrix& centered) {
  const auto n = centered.rows();
  const auto d = centered.cols();
  if (n < 1 || d < 1) throw DimensionError("ledoit_wolf_covariance needs n >= 1 and d >= 1");
  detail::require_finite(centered, "covariance input");

  CovarianceEstimate est;
  est.sample_cov = (centered.transpose() * centered) / static_cast<double>(n);
  // Symmetrize against rounding in the product.
  est.sample_cov = (0.5 * (est.sample_cov + est.sample_cov.transpose())).eval();
  const Matrix& s = est.sample_cov;

  const double m = s.trace() / static_cast<double>(d);
  est.grand_variance = m;
  Matrix target_gap = s;
  target_gap.diagonal().array() -= m;
  const double d2 = target_gap.squaredNorm();

  if (d2 == 0.0) {
    est.delta = 1.0;
  } else {
    const double s_norm2 = s.squaredNorm();
    double sum_fourth = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double r2 = centered.row(k).squaredNorm();
      sum_fourth += r2 * r2;
    }
    const double nn = static_cast<double>(n);
    const double b_bar2 = std::max(0.0, (sum_fourth / nn - s_norm2) / nn);
    est.delta = std::clamp(std::min(b_bar2, d2) / d2, 0.0, 1.0);
  }

  est.sigma = (1.0 - est.delta) * s;
  est.sigma.diagonal().array() += est.delta * m;
  return est;
}

// Fits w, b from the two class samples (rows are prompts).
//
// Each class is centered at its own mean before pooling. The bias carries the
// log prior ratio ln(n1/n0), which vanishes for balanced training sets.
inline ProbeModel fit_lda(const Matrix& attack, const Matrix& benign, LayerIndex layer = 0) {
  if (attack.rows() < 2 || benign.rows() < 2) {
    throw DegenerateDataError("fit_lda needs at least 2 rows per class (got " + std::to_string(attack.rows()) +
                              " attack, " + std::to_string(benign.rows()) + " benign)");
  }
  if (attack.cols() != benign.cols() || attack.cols() < 1) {
    throw DimensionError("fit_lda: class matrices have different widths");
  }
  detail::require_finite(attack, "attack features");
  detail::require_finite(benign, "benign features");

  const Matrix a = detail::canonical_rows(attack);
  const Matrix z = detail::canonical_rows(benign);

  ProbeModel model;
  model.layer = layer;
  model.n_attack = static_cast<std::size_t>(a.rows());
  model.n_benign = static_cast<std::size_t>(z.rows());
  model.mean_attack = detail::column_mean(a);
  model.mean_benign = detail::column_mean(z);

  Matrix pooled(a.rows() + z.rows(), a.cols());
  pooled.topRows(a.rows()) = a.rowwise() - model.mean_attack.transpose();
  pooled.bottomRows(z.rows()) = z.rowwise() - model.mean_benign.transpose();

  const auto cov = ledoit_wolf_covariance(pooled);
  model.delta = cov.delta;
  if (!(cov.grand_variance > 0.0)) {
    throw DegenerateDataError("fit_lda: all features are constant within classes");
  }

  Eigen::LLT<Matrix> chol(cov.sigma);
  if (chol.info() != Eigen::Success) {
    throw DegenerateDataError("fit_lda: shrunk covariance is singular");
  }
  model.weights = chol.solve(model.mean_attack - model.mean_benign);
  model.bias = -0.5 * model.weights.dot(model.mean_attack + model.mean_benign) +
               std::log(static_cast<double>(model.n_attack) / static_cast<double>(model.n_benign));
  if (!model.weights.allFinite() || !std::isfinite(model.bias)) {
    throw DegenerateDataError("fit_lda: solve produced non-finite weights");
  }
  return model;
}

inline double score(const ProbeModel& model, std::span<const double> h) {
  if (h.size() != model.dim()) {
    throw DimensionError("score: vector has dimension " + std::to_string(h.size()) + ", model expects " +
                         std::to_string(model.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!std::isfinite(h[i])) throw NonFiniteError("score: non-finite feature");
    s += model.weights[static_cast<Eigen::Index>(i)] * h[i];
  }
  return s + model.bias;
}

inline double score(const ProbeModel& model, std::span<const float> h) {
  std::vector<double> wide(h.begin(), h.end());
  return score(model, std::span<const double>(wide));
}

inline Label predict_from_score(double s) { return s >= 0.0 ? Label::attack : Label::benign; }

template <typename T>
Label predict(const ProbeModel& model, std::span<const T> h) {
  return predict_from_score(score(model, h));
}

// Scores every row of a float feature matrix.
inline std::vector<double> score_rows(const ProbeModel& model, const MatrixF& rows) {
  if (static_cast<std::size_t>(rows.cols()) != model.dim()) {
    throw DimensionError("score_rows: feature width " + std::to_string(rows.cols()) + " vs model " +
                         std::to_string(model.dim()));
  }
  std::vector<double> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) s += model.weights[j] * static_cast<double>(rows(i, j));
    out[static_cast<std::size_t>(i)] = s + model.bias;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON line serialization. nlohmann emits shortest round-trip decimals, so
// doubles survive a write/read cycle unchanged.

inline nlohmann::json to_json(const ProbeModel& m) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"layer", m.layer},
          {"d", m.dim()},
          {"delta", m.delta},
          {"b", m.bias},
          {"w", vec(m.weights)},
          {"mean_benign", vec(m.mean_benign)},
          {"mean_attack", vec(m.mean_attack)},
          {"n_attack", m.n_attack},
          {"n_benign", m.n_benign}};
}

inline ProbeModel probe_from_json(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  ProbeModel m;
  try {
    m.layer = j.at("layer").get<LayerIndex>();
    m.delta = j.at("delta").get<double>();
    m.bias = j.at("b").get<double>();
    m.weights = vec(j.at("w"));
    m.mean_benign = vec(j.at("mean_benign"));
    m.mean_attack = vec(j.at("mean_attack"));
    m.n_attack = j.value("n_attack", std::size_t{0});
    m.n_benign = j.value("n_benign", std::size_t{0});
    const auto d = j.at("d").get<std::size_t>();
    if (m.dim() != d || static_cast<std::size_t>(m.mean_benign.size()) != d ||
        static_cast<std::size_t>(m.mean_attack.size()) != d) {
      throw DimensionError("probe model: array lengths disagree with d");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("probe model: ") + e.what());
  }
  if (!m.weights.allFinite() || !std::isfinite(m.bias)) throw NonFiniteError("probe model has non-finite entries");
  return m;
}

}  // namespace esld
