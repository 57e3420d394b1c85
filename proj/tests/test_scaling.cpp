#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "bytelab/scaling.hpp"

using namespace bytelab;

TEST_CASE("isoFLOPs parabola recovers a planted vertex") {
  // bpb = 0.05 (ln N - ln 1e8)^2 + 1.3
  std::vector<RunPoint> pts;
  for (double n : {1e7, 3e7, 1e8, 3e8, 1e9}) {
    RunPoint p;
    p.n_params = n;
    double x = std::log(n) - std::log(1e8);
    p.bpb = 0.05 * x * x + 1.3;
    p.flops = 1e18;
    pts.push_back(p);
  }
  IsoFlopsFit fit = isoflops_fit(pts);
  CHECK(fit.n_opt == doctest::Approx(1e8).epsilon(1e-9));
  CHECK(fit.bpb_min == doctest::Approx(1.3).epsilon(1e-9));
  CHECK(!fit.extrapolated);
  CHECK(fit.residual_rms < 1e-10);
}

TEST_CASE("isoFLOPs fit rejects bad inputs") {
  std::vector<RunPoint> two = {{1e18, 1e7, 1.0}, {1e18, 1e8, 0.9}};
  CHECK_THROWS(isoflops_fit(two));
  std::vector<RunPoint> concave;
  for (double n : {1e7, 1e8, 1e9}) {
    RunPoint p;
    p.n_params = n;
    double x = std::log(n) - std::log(1e8);
    p.bpb = 2.0 - 0.1 * x * x;
    concave.push_back(p);
  }
  CHECK_THROWS(isoflops_fit(concave));
  std::vector<RunPoint> neg = {{1e18, -1.0, 1.0}, {1e18, 1e8, 0.9}, {1e18, 1e9, 1.1}};
  CHECK_THROWS(isoflops_fit(neg));
}

TEST_CASE("power law: noiseless recovery to 1e-9") {
  const double s = -0.0731, b = 2.9;
  std::vector<std::pair<double, double>> pts;
  for (double f : {1e18, 5e18, 3e19, 8e20, 1e22})
    pts.emplace_back(f, std::exp(b + s * std::log(f)));
  PowerLawFit fit = powerlaw_fit(pts);
  CHECK(fit.slope == doctest::Approx(s).epsilon(1e-9));
  CHECK(fit.intercept == doctest::Approx(b).epsilon(1e-9));
  CHECK(fit.residual_rms < 1e-12);
  CHECK(fit.bpb_at(1e20) == doctest::Approx(std::exp(b + s * std::log(1e20))).epsilon(1e-9));
  CHECK(fit.flops_at(fit.bpb_at(1e20)) == doctest::Approx(1e20).epsilon(1e-6));
  CHECK_THROWS(powerlaw_fit({{1e18, 1.0}}));
  CHECK_THROWS(powerlaw_fit({{1e18, 1.0}, {1e18, 0.9}}));  // degenerate F
  CHECK_THROWS(powerlaw_fit({{1e18, -1.0}, {1e19, 0.9}}));
}

TEST_CASE("ratio law identity to 1e-12") {
  PowerLawFit a{-0.07, 2.0, 0.0, 2};
  PowerLawFit b{-0.05, 1.5, 0.0, 2};
  RatioLaw r = ratio_law(a, b);
  for (double f : {1e18, 1e20, 1e22}) {
    double direct = a.bpb_at(f) / b.bpb_at(f);
    CHECK(std::abs(r.ratio_at(f) - direct) < 1e-12 * direct);
  }
}

TEST_CASE("parity point of a constructed crossing") {
  // laws equal at F* = 1e20 by construction
  const double lf = std::log(1e20);
  PowerLawFit a{-0.08, 0.0, 0.0, 2};
  PowerLawFit b{-0.05, 0.0, 0.0, 2};
  a.intercept = 1.0 - a.slope * lf;
  b.intercept = 1.0 - b.slope * lf;
  ParityResult res = parity_flops(a, b);
  REQUIRE(res.kind == ParityKind::kCrossing);
  CHECK(res.flops == doctest::Approx(1e20).epsilon(1e-6));

  PowerLawFit c = a;
  CHECK(parity_flops(a, c).kind == ParityKind::kAlwaysEqual);
  c.intercept += 0.1;
  CHECK(parity_flops(a, c).kind == ParityKind::kNeverIntersect);
}

TEST_CASE("csv parsing round-trips run points") {
  std::string csv =
      "objective,representation,F,N,bpb\n"
      "ar,byte,2.3e20,1.2e8,1.0\n"
      "ar,bpe,2.9e19,9e7,1.0\n";
  std::vector<RunPoint> pts = parse_run_points_csv(csv);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].objective == "ar");
  CHECK(pts[0].representation == "byte");
  CHECK(pts[0].flops == 2.3e20);
  CHECK(pts[1].n_params == 9e7);
  CHECK_THROWS(parse_run_points_csv("objective,representation,F,N,bpb\nar,byte,1e18\n"));
}

TEST_CASE("fit report covers groups, laws and parity") {
  std::ostringstream csv;
  csv << "objective,representation,F,N,bpb\n";
  auto law = [](double s, double b, double f) { return std::exp(b + s * std::log(f)); };
  for (double f : {1e19, 1e20, 1e21}) {
    csv << "ar,byte," << f << ",1e8," << law(-0.04, 1.8, f) << "\n";
    csv << "ar,bpe," << f << ",1e8," << law(-0.06, 2.6, f) << "\n";
  }
  std::string report = fit_report_text(parse_run_points_csv(csv.str()));
  CHECK(report.find("group ar/bpe") != std::string::npos);
  CHECK(report.find("group ar/byte") != std::string::npos);
  CHECK(report.find("power law") != std::string::npos);
  CHECK(report.find("ratio ar") != std::string::npos);
  CHECK(report.find("parity at F=") != std::string::npos);
}
