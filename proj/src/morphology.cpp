#include "rockgpt/morphology.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

namespace rockgpt {

double porosity(const VoxelVolume& v) {
  v.validate();
  int64_t pores = 0;
  for (uint8_t b : v.values) pores += b;
  return static_cast<double>(pores) / static_cast<double>(v.size());
}

TwoPointCurve two_point_correlation(const VoxelVolume& v, int axis, int64_t r_max) {
  v.validate();
  check(axis >= 0 && axis < 3, "two-point: axis must be 0, 1, or 2");
  int64_t extent = v.extent(axis);
  check(r_max >= 0 && r_max < extent, "two-point: r_max must be below the axis extent");
  double phi = porosity(v);
  double den = phi - phi * phi;
  if (den == 0) throw RuntimeFailure("two-point: correlation undefined for a single-phase volume");

  std::vector<double> g(v.values.size());
  for (size_t i = 0; i < v.values.size(); ++i) g[i] = static_cast<double>(v.values[i]) - phi;

  // flat index strides: axis 0 steps h*w, axis 1 steps w, axis 2 steps 1
  int64_t step = axis == 0 ? v.h * v.w : (axis == 1 ? v.w : 1);
  TwoPointCurve c;
  c.axis = axis == 0 ? "x" : (axis == 1 ? "y" : "z");
  for (int64_t r = 0; r <= r_max; ++r) {
    double sum = 0;
    int64_t pairs = 0;
    for (int64_t i = 0; i < v.d; ++i)
      for (int64_t j = 0; j < v.h; ++j)
        for (int64_t k = 0; k < v.w; ++k) {
          int64_t along = axis == 0 ? i : (axis == 1 ? j : k);
          if (along + r >= extent) continue;
          int64_t at = (i * v.h + j) * v.w + k;
          sum += g[at] * g[at + r * step];
          ++pairs;
        }
    c.lags.push_back(static_cast<double>(r));
    c.values.push_back(sum / static_cast<double>(pairs) / den);
  }
  return c;
}

namespace {

double fit_sse(const TwoPointCurve& c, double lambda) {
  double s = 0;
  for (size_t i = 0; i < c.lags.size(); ++i) {
    double e = c.values[i] - std::exp(-c.lags[i] / lambda);
    s += e * e;
  }
  return s;
}

}  // namespace

LambdaFit fit_correlation_length(const TwoPointCurve& curve) {
  if (curve.lags.size() < 3 || curve.lags[0] != 0)
    throw ConfigError("lambda fit: need at least 3 lags starting at 0");
  check(curve.values.size() == curve.lags.size(), "lambda fit: lag/value length mismatch");
  double lo = 0.05;
  double hi = 10.0 * curve.lags.back();
  check(hi > lo, "lambda fit: degenerate lag range");

  // coarse geometric scan to bracket the minimum
  const int kCoarse = 200;
  double best = lo;
  double best_sse = fit_sse(curve, lo);
  int best_i = 0;
  double ratio = std::pow(hi / lo, 1.0 / (kCoarse - 1));
  for (int i = 1; i < kCoarse; ++i) {
    double lam = lo * std::pow(ratio, i);
    double s = fit_sse(curve, lam);
    if (s < best_sse) {
      best_sse = s;
      best = lam;
      best_i = i;
    }
  }
  double a = best_i == 0 ? lo : lo * std::pow(ratio, best_i - 1);
  double b = best_i == kCoarse - 1 ? hi : lo * std::pow(ratio, best_i + 1);

  // golden-section to width 1e-4
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = fit_sse(curve, x1), f2 = fit_sse(curve, x2);
  for (int it = 0; it < 200 && (b - a) > 1e-4; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = fit_sse(curve, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = fit_sse(curve, x2);
    }
  }
  LambdaFit out;
  out.lambda = (a + b) / 2;
  out.at_lower_bound = out.lambda <= lo + 1e-3;
  return out;
}

double specific_surface_area(const VoxelVolume& v) {
  v.validate();
  int64_t faces = 0;
  for (int64_t i = 0; i < v.d; ++i)
    for (int64_t j = 0; j < v.h; ++j)
      for (int64_t k = 0; k < v.w; ++k) {
        uint8_t f = v.at(i, j, k);
        if (i + 1 < v.d && f != v.at(i + 1, j, k)) ++faces;
        if (j + 1 < v.h && f != v.at(i, j + 1, k)) ++faces;
        if (k + 1 < v.w && f != v.at(i, j, k + 1)) ++faces;
      }
  double a = v.voxel_um;
  return static_cast<double>(faces) * a * a / (static_cast<double>(v.size()) * a * a * a);
}

int64_t euler_characteristic(const VoxelVolume& v) {
  v.validate();
  auto pore = [&](int64_t i, int64_t j, int64_t k) -> bool {
    if (i < 0 || j < 0 || k < 0 || i >= v.d || j >= v.h || k >= v.w) return false;
    return v.at(i, j, k) != 0;
  };

  // the complex is the union of closed unit cubes of pore voxels. each piece
  // is present when any incident voxel is pore: 8 around a vertex, 4 around
  // an edge, 2 across a face, 1 for the cube itself.
  int64_t verts = 0;
  for (int64_t i = 0; i <= v.d; ++i)
    for (int64_t j = 0; j <= v.h; ++j)
      for (int64_t k = 0; k <= v.w; ++k) {
        bool hit = false;
        for (int64_t a = i - 1; a <= i && !hit; ++a)
          for (int64_t b = j - 1; b <= j && !hit; ++b)
            for (int64_t c = k - 1; c <= k && !hit; ++c) hit = pore(a, b, c);
        verts += hit ? 1 : 0;
      }

  int64_t edges = 0;
  // edges along axis 0: span [i,i+1] at lattice corner (j,k)
  for (int64_t i = 0; i < v.d; ++i)
    for (int64_t j = 0; j <= v.h; ++j)
      for (int64_t k = 0; k <= v.w; ++k) {
        bool hit = pore(i, j - 1, k - 1) || pore(i, j - 1, k) || pore(i, j, k - 1) || pore(i, j, k);
        edges += hit ? 1 : 0;
      }
  for (int64_t i = 0; i <= v.d; ++i)
    for (int64_t j = 0; j < v.h; ++j)
      for (int64_t k = 0; k <= v.w; ++k) {
        bool hit = pore(i - 1, j, k - 1) || pore(i - 1, j, k) || pore(i, j, k - 1) || pore(i, j, k);
        edges += hit ? 1 : 0;
      }
  for (int64_t i = 0; i <= v.d; ++i)
    for (int64_t j = 0; j <= v.h; ++j)
      for (int64_t k = 0; k < v.w; ++k) {
        bool hit = pore(i - 1, j - 1, k) || pore(i - 1, j, k) || pore(i, j - 1, k) || pore(i, j, k);
        edges += hit ? 1 : 0;
      }

  int64_t faces = 0;
  // faces normal to axis 0 sit between voxel layers i-1 and i
  for (int64_t i = 0; i <= v.d; ++i)
    for (int64_t j = 0; j < v.h; ++j)
      for (int64_t k = 0; k < v.w; ++k) faces += (pore(i - 1, j, k) || pore(i, j, k)) ? 1 : 0;
  for (int64_t i = 0; i < v.d; ++i)
    for (int64_t j = 0; j <= v.h; ++j)
      for (int64_t k = 0; k < v.w; ++k) faces += (pore(i, j - 1, k) || pore(i, j, k)) ? 1 : 0;
  for (int64_t i = 0; i < v.d; ++i)
    for (int64_t j = 0; j < v.h; ++j)
      for (int64_t k = 0; k <= v.w; ++k) faces += (pore(i, j, k - 1) || pore(i, j, k)) ? 1 : 0;

  int64_t cells = 0;
  for (uint8_t b : v.values) cells += b;

  return verts - edges + faces - cells;
}

double euler_characteristic_density(const VoxelVolume& v) {
  double a = v.voxel_um;
  return static_cast<double>(euler_characteristic(v)) /
         (static_cast<double>(v.size()) * a * a * a);
}

MorphReport morph_report(const VoxelVolume& v, int64_t r_max) {
  MorphReport r;
  r.phi = porosity(v);
  r.surface_area = specific_surface_area(v);
  r.euler_density = euler_characteristic_density(v);
  r.permeability_darcy = std::numeric_limits<double>::quiet_NaN();
  r.lambda = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
              std::numeric_limits<double>::quiet_NaN()};

  bool mixed = r.phi > 0 && r.phi < 1;
  double lam_sum = 0;
  int lam_n = 0;
  for (int axis = 0; axis < 3 && mixed; ++axis) {
    int64_t extent = v.extent(axis);
    int64_t rm = r_max > 0 ? std::min(r_max, extent - 1) : extent / 2;
    if (rm < 2) continue;  // fit needs 3 lags
    r.curves[axis] = two_point_correlation(v, axis, rm);
    r.lambda[axis] = fit_correlation_length(r.curves[axis]).lambda;
    lam_sum += r.lambda[axis];
    ++lam_n;
    r.has_curves = true;
  }
  r.lambda_mean = lam_n > 0 ? lam_sum / lam_n : std::numeric_limits<double>::quiet_NaN();
  return r;
}

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json num_or_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

}  // namespace

std::string report_json(const std::string& id, const MorphReport& r) {
  nlohmann::json j;
  j["id"] = id;
  j["porosity"] = r.phi;
  j["lambda"] = {{"x", num_or_null(r.lambda[0])},
                 {"y", num_or_null(r.lambda[1])},
                 {"z", num_or_null(r.lambda[2])},
                 {"mean", num_or_null(r.lambda_mean)}};
  j["surface_area_per_um"] = r.surface_area;
  j["euler_density_per_um3"] = r.euler_density;
  j["permeability_darcy"] = num_or_null(r.permeability_darcy);
  if (r.has_curves) {
    for (const auto& c : r.curves) {
      if (c.lags.empty()) continue;
      j["curves"][c.axis] = {{"lags", c.lags}, {"values", c.values}};
    }
  }
  j["notes"] = {{"euler", "cubical complex of pore voxels, chi = V-E+F-C, 6-connectivity"},
                {"lambda_mean", "arithmetic mean of the per-axis exponential fits"}};
  return j.dump(2) + "\n";
}

std::string report_csv_header() {
  return "id,porosity,lambda_x,lambda_y,lambda_z,surface_area,euler_density,k_darcy\n";
}

std::string report_csv_row(const std::string& id, const MorphReport& r) {
  std::string row = id;
  for (double x : {r.phi, r.lambda[0], r.lambda[1], r.lambda[2], r.surface_area, r.euler_density,
                   r.permeability_darcy})
    row += "," + num(x);
  return row + "\n";
}

}  // namespace rockgpt
