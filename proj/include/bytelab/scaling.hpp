#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bytelab {

struct RunPoint {
  double flops = 0.0;        // training FLOPs F
  double n_params = 0.0;     // non-embedding parameters N
  double bpb = 0.0;
  std::string objective;       // "ar" | "mdm"
  std::string representation;  // "byte" | "bpe"
};

struct IsoFlopsFit {
  double n_opt = 0.0;
  double bpb_min = 0.0;
  // bpb = a * (log N)^2 + b * log N + c
  double a = 0.0, b = 0.0, c = 0.0;
  double residual_rms = 0.0;
  bool extrapolated = false;  // vertex outside the observed N range
};

// Least-squares parabola of bpb against log N at a fixed budget; the vertex
// gives the compute-optimal point. Requires >= 3 distinct N; a non-convex fit
// (a <= 0) is an error.
IsoFlopsFit isoflops_fit(const std::vector<RunPoint>& points);

struct PowerLawFit {
  double slope = 0.0;      // s in log(bpb) = s * log F + b
  double intercept = 0.0;  // b
  double residual_rms = 0.0;
  int n_points = 0;

  double bpb_at(double flops) const;
  double flops_at(double bpb) const;  // inverse
};

// OLS in log-log space on (F, bpb_min) pairs.
PowerLawFit powerlaw_fit(const std::vector<std::pair<double, double>>& pairs);

struct RatioLaw {
  double delta_s = 0.0;  // s_a - s_b
  double delta_b = 0.0;  // b_a - b_b
  double ratio_at(double flops) const;  // exp(delta_b) * F^delta_s
};

RatioLaw ratio_law(const PowerLawFit& fit_a, const PowerLawFit& fit_b);

enum class ParityKind { kCrossing, kAlwaysEqual, kNeverIntersect };

struct ParityResult {
  ParityKind kind = ParityKind::kCrossing;
  double flops = 0.0;  // valid for kCrossing
};

// Intersection of two power laws: F* = exp((b_b - b_a) / (s_a - s_b)).
ParityResult parity_flops(const PowerLawFit& fit_a, const PowerLawFit& fit_b);

// io helpers for the CLI: CSV `objective,representation,F,N,bpb`.
std::vector<RunPoint> parse_run_points_csv(const std::string& csv_text);
std::string fit_report_text(const std::vector<RunPoint>& points);

}  // namespace bytelab
