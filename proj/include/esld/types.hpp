#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "esld/errors.hpp"

namespace esld {

// Row-major so that one record is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// 0-indexed decoder layer: index L is the hidden state after block L has run.
using LayerIndex = std::uint32_t;

enum class Label : std::uint8_t {
  benign = 0,
  attack = 1,
  not_applicable = 255,  // embedding files reuse the feature format
};

enum class SourceClass { attack, benign };

enum class PoolKind { upia, xpia };

inline Label to_label(SourceClass c) {
  return c == SourceClass::attack ? Label::attack : Label::benign;
}

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::benign: return "benign";
    case Label::attack: return "attack";
    case Label::not_applicable: return "n/a";
  }
  return "?";
}

inline std::string_view to_string(SourceClass c) {
  return c == SourceClass::attack ? "attack" : "benign";
}

inline std::string_view to_string(PoolKind p) {
  return p == PoolKind::upia ? "UPIA" : "XPIA";
}

inline SourceClass parse_source_class(std::string_view s) {
  if (s == "attack" || s == "att") return SourceClass::attack;
  if (s == "benign" || s == "ben") return SourceClass::benign;
  throw FormatError("unknown source class '" + std::string(s) + "'");
}

inline PoolKind parse_pool_kind(std::string_view s) {
  if (s == "UPIA" || s == "upia") return PoolKind::upia;
  if (s == "XPIA" || s == "xpia") return PoolKind::xpia;
  throw FormatError("unknown pool '" + std::string(s) + "'");
}

}  // namespace esld
