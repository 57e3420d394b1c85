#include "bytelab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bytelab {

namespace {

// Solves the 3x3 normal equations for y = a x^2 + b x + c with x centered for
// conditioning.
void quad_fit(const std::vector<double>& xs, const std::vector<double>& ys, double& a, double& b,
              double& c) {
  const size_t n = xs.size();
  double mx = 0.0;
  for (double x : xs) mx += x;
  mx /= static_cast<double>(n);

  double s0 = static_cast<double>(n), s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  double t0 = 0, t1 = 0, t2 = 0;
  for (size_t i = 0; i < n; ++i) {
    double x = xs[i] - mx, y = ys[i];
    double x2 = x * x;
    s1 += x;
    s2 += x2;
    s3 += x2 * x;
    s4 += x2 * x2;
    t0 += y;
    t1 += x * y;
    t2 += x2 * y;
  }
  double m[3][4] = {{s4, s3, s2, t2}, {s3, s2, s1, t1}, {s2, s1, s0, t0}};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    if (m[col][col] == 0.0) throw std::runtime_error("isoflops_fit: singular system");
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      double f = m[r][col] / m[col][col];
      for (int k = col; k < 4; ++k) m[r][k] -= f * m[col][k];
    }
  }
  double ac = m[0][3] / m[0][0];
  double bc = m[1][3] / m[1][1];
  double cc = m[2][3] / m[2][2];
  // un-center: a (x-mx)^2 + b (x-mx) + c
  a = ac;
  b = bc - 2.0 * ac * mx;
  c = cc - bc * mx + ac * mx * mx;
}

}  // namespace

IsoFlopsFit isoflops_fit(const std::vector<RunPoint>& points) {
  std::set<double> distinct;
  for (const auto& p : points) {
    if (!(p.n_params > 0.0) || !(p.bpb > 0.0))
      throw std::invalid_argument("isoflops_fit: non-positive inputs");
    distinct.insert(p.n_params);
  }
  if (distinct.size() < 3)
    throw std::invalid_argument("isoflops_fit: need at least 3 distinct N values");

  std::vector<double> xs, ys;
  for (const auto& p : points) {
    xs.push_back(std::log(p.n_params));
    ys.push_back(p.bpb);
  }
  IsoFlopsFit fit;
  quad_fit(xs, ys, fit.a, fit.b, fit.c);
  if (fit.a <= 0.0) throw std::runtime_error("isoflops_fit: non-convex fit");

  double x_opt = -fit.b / (2.0 * fit.a);
  fit.n_opt = std::exp(x_opt);
  fit.bpb_min = fit.c - fit.b * fit.b / (4.0 * fit.a);
  double lo = *std::min_element(xs.begin(), xs.end());
  double hi = *std::max_element(xs.begin(), xs.end());
  fit.extrapolated = x_opt < lo || x_opt > hi;
  double ss = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double pred = fit.a * xs[i] * xs[i] + fit.b * xs[i] + fit.c;
    ss += (pred - ys[i]) * (pred - ys[i]);
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(xs.size()));
  return fit;
}

double PowerLawFit::bpb_at(double flops) const {
  return std::exp(intercept + slope * std::log(flops));
}

double PowerLawFit::flops_at(double bpb) const {
  if (slope == 0.0) throw std::runtime_error("power law: zero slope has no inverse");
  return std::exp((std::log(bpb) - intercept) / slope);
}

PowerLawFit powerlaw_fit(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw std::invalid_argument("powerlaw_fit: need at least 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [f, y] : pairs) {
    if (!(f > 0.0) || !(y > 0.0))
      throw std::invalid_argument("powerlaw_fit: non-positive values");
    double x = std::log(f), ly = std::log(y);
    sx += x;
    sy += ly;
    sxx += x * x;
    sxy += x * ly;
  }
  const double n = static_cast<double>(pairs.size());
  double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("powerlaw_fit: degenerate F values");
  PowerLawFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.n_points = static_cast<int>(pairs.size());
  double ss = 0.0;
  for (auto [f, y] : pairs) {
    double pred = fit.intercept + fit.slope * std::log(f);
    double r = pred - std::log(y);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / n);
  return fit;
}

double RatioLaw::ratio_at(double flops) const {
  return std::exp(delta_b + delta_s * std::log(flops));
}

RatioLaw ratio_law(const PowerLawFit& fit_a, const PowerLawFit& fit_b) {
  RatioLaw r;
  r.delta_s = fit_a.slope - fit_b.slope;
  r.delta_b = fit_a.intercept - fit_b.intercept;
  return r;
}

ParityResult parity_flops(const PowerLawFit& fit_a, const PowerLawFit& fit_b) {
  ParityResult res;
  if (fit_a.slope == fit_b.slope) {
    res.kind = fit_a.intercept == fit_b.intercept ? ParityKind::kAlwaysEqual
                                                  : ParityKind::kNeverIntersect;
    return res;
  }
  res.kind = ParityKind::kCrossing;
  res.flops = std::exp((fit_b.intercept - fit_a.intercept) / (fit_a.slope - fit_b.slope));
  return res;
}

std::vector<RunPoint> parse_run_points_csv(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<RunPoint> out;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("objective", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::istringstream ls(line);
    RunPoint p;
    std::string f, n, bpb;
    if (!std::getline(ls, p.objective, ',') || !std::getline(ls, p.representation, ',') ||
        !std::getline(ls, f, ',') || !std::getline(ls, n, ',') || !std::getline(ls, bpb, ','))
      throw std::runtime_error("run points csv: malformed line: " + line);
    p.flops = std::stod(f);
    p.n_params = std::stod(n);
    p.bpb = std::stod(bpb);
    out.push_back(p);
  }
  return out;
}

std::string fit_report_text(const std::vector<RunPoint>& points) {
  // group by (objective, representation), fit a parabola per budget, then a
  // power law through the minima
  std::map<std::pair<std::string, std::string>, std::map<double, std::vector<RunPoint>>> groups;
  for (const auto& p : points) groups[{p.objective, p.representation}][p.flops].push_back(p);

  std::ostringstream out;
  std::map<std::pair<std::string, std::string>, PowerLawFit> laws;
  for (const auto& [key, budgets] : groups) {
    out << "group " << key.first << "/" << key.second << "\n";
    std::vector<std::pair<double, double>> minima;
    for (const auto& [F, pts] : budgets) {
      if (pts.size() >= 3) {
        IsoFlopsFit fit = isoflops_fit(pts);
        out << "  F=" << F << " N_opt=" << fit.n_opt << " bpb_min=" << fit.bpb_min
            << (fit.extrapolated ? " (extrapolated)" : "") << "\n";
        minima.emplace_back(F, fit.bpb_min);
      } else {
        auto best = std::min_element(pts.begin(), pts.end(),
                                     [](const RunPoint& a, const RunPoint& b) {
                                       return a.bpb < b.bpb;
                                     });
        out << "  F=" << F << " best_bpb=" << best->bpb << " (raw point, <3 sizes)\n";
        minima.emplace_back(F, best->bpb);
      }
    }
    if (minima.size() >= 2) {
      PowerLawFit law = powerlaw_fit(minima);
      laws[key] = law;
      out << "  power law: slope=" << law.slope << " intercept=" << law.intercept
          << " residual_rms=" << law.residual_rms << "\n";
    }
  }
  for (const auto& [ka, la] : laws) {
    for (const auto& [kb, lb] : laws) {
      if (ka >= kb || ka.first != kb.first) continue;
      RatioLaw r = ratio_law(la, lb);
      out << "ratio " << ka.first << ": " << ka.second << "/" << kb.second
          << " delta_s=" << r.delta_s << " delta_b=" << r.delta_b << "\n";
      ParityResult par = parity_flops(la, lb);
      if (par.kind == ParityKind::kCrossing)
        out << "  parity at F=" << par.flops << "\n";
      else if (par.kind == ParityKind::kAlwaysEqual)
        out << "  laws identical (always equal)\n";
      else
        out << "  parallel laws never intersect\n";
    }
  }
  return out.str();
}

}  // namespace bytelab
