#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace tealeaf {

/// Generator seeded from an ordered list of keys, e.g. (seed, class_index) or
/// (seed, epoch, item ordinal). Distinct key tuples give independent streams.
inline std::mt19937_64 keyed_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(keys.size() * 2);
  for (std::uint64_t key : keys) {
    words.push_back(static_cast<std::uint32_t>(key & 0xffffffffULL));
    words.push_back(static_cast<std::uint32_t>(key >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace tealeaf
