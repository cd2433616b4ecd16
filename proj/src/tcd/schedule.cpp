// SPDX-License-Identifier: Apache-2.0
#include "tcd/schedule.hpp"

#include <cmath>
#include <numbers>

#include "tcd/common.hpp"

namespace tcd {

ScheduleKind schedule_kind_from_name(const std::string& name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "quadratic") return ScheduleKind::quadratic;
  if (name == "linear") return ScheduleKind::linear;
  fail(ErrorCode::invalid_argument, "unknown schedule kind: " + name);
}

const char* schedule_kind_name(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::quadratic: return "quadratic";
    case ScheduleKind::linear: return "linear";
  }
  return "unknown";
}

void NoiseSchedule::validate() const {
  if (steps < 1) fail(ErrorCode::invalid_argument, "NoiseSchedule: steps must be >= 1");
  if (beta.size() != static_cast<size_t>(steps) + 1 || alpha.size() != beta.size() ||
      alpha_bar.size() != beta.size())
    fail(ErrorCode::structure, "NoiseSchedule: array sizes disagree with steps");
  double prev_bar = 1.0;
  for (int t = 1; t <= steps; ++t) {
    if (!(beta[t] > 0.0) || beta[t] > 0.999)
      fail(ErrorCode::numeric, "NoiseSchedule: beta outside (0, 0.999]");
    if (!(alpha_bar[t] < prev_bar))
      fail(ErrorCode::numeric, "NoiseSchedule: alpha_bar not strictly decreasing");
    if (!(alpha_bar[t] > 0.0))
      fail(ErrorCode::numeric, "NoiseSchedule: alpha_bar must stay positive");
    prev_bar = alpha_bar[t];
  }
}

namespace {

constexpr double kBetaCap = 0.999;

double cosine_f(double t, double steps) {
  double u = (t / steps + 0.008) / 1.008;
  double c = std::cos(u * std::numbers::pi / 2.0);
  return c * c;
}

}  // namespace

NoiseSchedule make_schedule(ScheduleKind kind, int steps) {
  if (steps < 1) fail(ErrorCode::invalid_argument, "make_schedule: steps must be >= 1");
  NoiseSchedule s;
  s.kind = kind;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);

  switch (kind) {
    case ScheduleKind::cosine: {
      double T = steps;
      for (int t = 1; t <= steps; ++t)
        s.beta[t] = std::min(1.0 - cosine_f(t, T) / cosine_f(t - 1, T), kBetaCap);
      break;
    }
    case ScheduleKind::linear:
    case ScheduleKind::quadratic: {
      // Reference endpoints are stated for a 1000-step process; rescale them
      // so total corruption stays comparable when T differs.
      double lo = 1e-4 * 1000.0 / steps;
      double hi = 0.02 * 1000.0 / steps;
      for (int t = 1; t <= steps; ++t) {
        double u = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
        double b;
        if (kind == ScheduleKind::linear) {
          b = lo + (hi - lo) * u;
        } else {
          double r = std::sqrt(lo) + (std::sqrt(hi) - std::sqrt(lo)) * u;
          b = r * r;
        }
        s.beta[t] = std::min(b, kBetaCap);
      }
      break;
    }
  }

  for (int t = 1; t <= steps; ++t) {
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  s.validate();
  return s;
}

}  // namespace tcd
