#pragma once

#include "stcrank/worldsim.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace stcrank {

inline constexpr unsigned kFeatureBits = 18;
inline constexpr std::uint32_t kFeatureTableSize = 1u << kFeatureBits;
inline constexpr int kUserBuckets = 4096;
inline constexpr int kMaxPositionFeature = 20;

struct Feature {
  std::uint32_t id = 0;
  double value = 1.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

using FeatureVector = std::vector<Feature>;

/// FNV-1a 64 over the namespace bytes, a 0x1f separator and the raw value as
/// 8 little-endian bytes, reduced modulo the 2^18 table.
std::uint32_t feature_id(std::string_view name_space, std::int64_t raw);

/// Where a candidate is being scored. trigger_item_id < 0 marks an E-stage
/// (homepage) impression; position 0 means "not placed yet".
struct FeatureContext {
  int user_id = 0;
  int item_id = 0;
  int trigger_item_id = -1;
  int position = 0;
};

FeatureVector featurize(const World& world, const FeatureContext& context);

}  // namespace stcrank
