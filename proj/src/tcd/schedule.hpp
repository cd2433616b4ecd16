// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace tcd {

enum class ScheduleKind : int { cosine = 0, quadratic = 1, linear = 2 };

ScheduleKind schedule_kind_from_name(const std::string& name);
const char* schedule_kind_name(ScheduleKind kind);

// Per-step noise amounts for the forward corruption process. Arrays are
// indexed 1..T; index 0 holds the conventional anchors beta=0, alpha=1,
// alpha_bar=1 so that alpha_bar[t-1] is always valid.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  int steps = 0;                  // T
  std::vector<double> beta;       // noise added at step t
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // product of alpha[1..t]

  void validate() const;
};

// Builds a schedule of the given kind.
//
// cosine: beta_t = 1 - f(t)/f(t-1) with
//         f(t) = cos^2(((t/T + 0.008) / 1.008) * pi/2), clipped at 0.999.
// linear / quadratic: endpoints 1e-4 and 0.02 scaled by 1000/T, interpolated
//         in beta (linear) or in sqrt(beta) (quadratic).
NoiseSchedule make_schedule(ScheduleKind kind, int steps);

}  // namespace tcd
