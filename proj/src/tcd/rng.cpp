// SPDX-License-Identifier: Apache-2.0
#include "tcd/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tcd/common.hpp"

namespace tcd {

namespace {

// splitmix64 finalizer (public domain, Vigna). Good avalanche, cheap.
uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
  uint64_t s = mix64(base);
  for (uint64_t p : path) s = mix64(s ^ mix64(p + 0x517cc1b727220a95ull));
  return s;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // 1-u1 lies in (0, 1], keeping the log argument positive.
  double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

uint64_t Rng::integer(uint64_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "Rng::integer: n must be positive");
  uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    uint64_t r = engine_();
    if (r >= threshold) return r % n;
  }
}

void Rng::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal();
}

void Rng::fill_normal(std::span<float> out) {
  for (float& v : out) v = static_cast<float>(normal());
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::load_state(const std::string& text) {
  std::istringstream is(text);
  is >> engine_;
  if (is.fail()) fail(ErrorCode::corrupt, "Rng::load_state: unparseable engine state");
}

}  // namespace tcd
