// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tcd {

// Mixes a base seed with a path of indices (sequence id, chain id, ...) so
// that every consumer gets an independent stream while staying reproducible.
// Built on the splitmix64 finalizer; order of the indices matters.
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path);

// Deterministic random source. std::mt19937_64 has a standard-specified
// output sequence, and the normal/shuffle routines below are hand-rolled
// (Box-Muller, Fisher-Yates) because the std distributions are free to
// differ between standard libraries. Same seed => same bytes everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via Box-Muller. Uses two uniforms per call and keeps no
  // cached second sample, so the engine state alone captures the stream.
  double normal();

  // Uniform integer in [0, n). Rejection sampling, so the result is exact
  // and portable. n must be positive.
  uint64_t integer(uint64_t n);

  // Fisher-Yates shuffle (uses integer(), not std::shuffle, for
  // cross-platform determinism).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  void fill_normal(std::span<double> out);
  void fill_normal(std::span<float> out);

  // Engine state as text, for embedding in checkpoints.
  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace tcd
