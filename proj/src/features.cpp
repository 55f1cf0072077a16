#include "stcrank/features.hpp"

#include <algorithm>

namespace stcrank {

std::uint32_t feature_id(std::string_view name_space, std::int64_t raw) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001B3ULL;
  };
  for (char c : name_space) mix(static_cast<unsigned char>(c));
  mix(0x1f);
  const auto u = static_cast<std::uint64_t>(raw);
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((u >> (8 * i)) & 0xFF));
  return static_cast<std::uint32_t>(h & (kFeatureTableSize - 1));
}

FeatureVector featurize(const World& world, const FeatureContext& ctx) {
  const auto& item = world.item(ctx.item_id);
  world.user(ctx.user_id);
  const std::int64_t user_bucket = ctx.user_id % kUserBuckets;

  FeatureVector f;
  f.reserve(9);
  f.push_back({feature_id("user", user_bucket), 1.0});
  f.push_back({feature_id("cat", item.category_id), 1.0});
  f.push_back({feature_id("item", item.item_id), 1.0});
  f.push_back({feature_id("user_cat", user_bucket * 1024 + item.category_id), 1.0});
  f.push_back({feature_id("inv", item.involvement == Involvement::high_involvement ? 1 : 0), 1.0});
  if (ctx.trigger_item_id >= 0) {
    const auto& trigger = world.item(ctx.trigger_item_id);
    f.push_back({feature_id("trig_cat", trigger.category_id), 1.0});
    f.push_back({feature_id("trig_match", trigger.category_id == item.category_id ? 1 : 0), 1.0});
  }
  if (ctx.position > 0)
    f.push_back({feature_id("pos", std::min(ctx.position, kMaxPositionFeature)), 1.0});
  return f;
}

}  // namespace stcrank
