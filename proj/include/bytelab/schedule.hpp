#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace bytelab {

// Masking schedules for the absorbing-state diffusion forward process.
// alpha(t) is the retention probability; weight(t) = alpha'(t) / (1 - alpha(t))
// is the (negative) loss weight. Both are evaluated inside [eps, 1-eps]
// because the linear weight -1/t is singular at t=0.
enum class ScheduleKind { kLinear, kCosine };

struct MaskSchedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  double eps = 1e-3;

  double clamp(double t) const { return std::min(std::max(t, eps), 1.0 - eps); }

  void check(double t) const {
    if (t < eps || t > 1.0 - eps)
      throw std::invalid_argument("schedule: t outside clamp range");
  }

  double alpha(double t) const {
    check(t);
    switch (kind) {
      case ScheduleKind::kLinear:
        return 1.0 - t;
      case ScheduleKind::kCosine:
        return 1.0 - std::cos(M_PI_2 * (1.0 - t));
    }
    return 0.0;
  }

  double weight(double t) const {
    check(t);
    switch (kind) {
      case ScheduleKind::kLinear:
        return -1.0 / t;
      case ScheduleKind::kCosine:
        return -M_PI_2 * std::tan(M_PI_2 * (1.0 - t));
    }
    return 0.0;
  }

  // alpha at the sampler's grid endpoints, where the clamp does not apply:
  // alpha(0)=1 and alpha(1)=0 exactly for both kinds.
  double alpha_unclamped(double t) const {
    switch (kind) {
      case ScheduleKind::kLinear:
        return 1.0 - t;
      case ScheduleKind::kCosine:
        return 1.0 - std::cos(M_PI_2 * (1.0 - t));
    }
    return 0.0;
  }

  std::string name() const { return kind == ScheduleKind::kLinear ? "linear" : "cosine"; }
};

inline MaskSchedule linear_schedule(double eps = 1e-3) {
  return MaskSchedule{ScheduleKind::kLinear, eps};
}
inline MaskSchedule cosine_schedule(double eps = 1e-3) {
  return MaskSchedule{ScheduleKind::kCosine, eps};
}

}  // namespace bytelab
