#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "rfdepth/errors.hpp"
#include "rfdepth/rng.hpp"

namespace rfdepth {

enum class ResampleMode { None, Bootstrap, Subsample };

/// How each tree (or linear member) sees the training set.
struct Resample {
  ResampleMode mode = ResampleMode::Bootstrap;
  std::size_t subsample_size = 0;  // a_n, used by Subsample only

  static Resample none() { return {ResampleMode::None, 0}; }
  static Resample bootstrap() { return {ResampleMode::Bootstrap, 0}; }
  static Resample subsample(std::size_t a_n) { return {ResampleMode::Subsample, a_n}; }
};

/// Training indices a single tree is grown on. Bootstrap draws are a
/// multiset of size n; Subsample draws are a_n distinct indices.
struct ResampleDraw {
  std::vector<std::size_t> indices;
  ResampleMode mode = ResampleMode::None;
};

inline ResampleDraw resample(std::size_t n, const Resample& how, Rng& rng) {
  if (n == 0) throw DomainError("resample needs n >= 1");
  ResampleDraw draw;
  draw.mode = how.mode;
  switch (how.mode) {
    case ResampleMode::None:
      draw.indices.resize(n);
      std::iota(draw.indices.begin(), draw.indices.end(), std::size_t{0});
      break;
    case ResampleMode::Bootstrap:
      draw.indices.resize(n);
      for (auto& i : draw.indices) i = rng.uniform_index(n);
      break;
    case ResampleMode::Subsample: {
      if (how.subsample_size > n)
        throw DomainError("subsample size " + std::to_string(how.subsample_size) + " exceeds n=" +
                          std::to_string(n));
      if (how.subsample_size == 0) throw DomainError("subsample size must be >= 1");
      std::vector<std::size_t> pool(n);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      draw.indices = rng.sample_without_replacement<std::size_t>(pool, how.subsample_size);
      break;
    }
  }
  return draw;
}

}  // namespace rfdepth
