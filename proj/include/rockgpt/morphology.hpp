// morphology.hpp: geostatistical and topological descriptors of binary volumes.
// porosity, per-axis normalized two-point correlation with an exponential
// correlation-length fit, specific surface area from pore-solid face counts,
// and Euler characteristic density from cubical-complex counting.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "rockgpt/voxel.hpp"

namespace rockgpt {

struct TwoPointCurve {
  std::string axis;           // "x" (stacking axis), "y", "z"
  std::vector<double> lags;   // voxel units, starting at 0
  std::vector<double> values; // R(lag), R(0) = 1
};

struct LambdaFit {
  double lambda = 0;          // voxel units
  bool at_lower_bound = false;  // curve decayed faster than the search floor
};

struct MorphReport {
  double phi = 0;
  bool has_curves = false;    // false when phi is 0 or 1 or extents are tiny
  std::array<TwoPointCurve, 3> curves;
  std::array<double, 3> lambda{};  // nan per axis when unavailable
  double lambda_mean = 0;          // arithmetic mean of the available fits
  double surface_area = 0;         // 1/um
  double euler_density = 0;        // 1/um^3
  double permeability_darcy = 0;   // nan unless a flow solve filled it in
};

// mean of the indicator field
double porosity(const VoxelVolume& v);

// R(r) = mean over in-bounds pairs of (phi-F(x))(phi-F(x+r)) / (phi-phi^2),
// non-periodic, along one axis. requires 0 < phi < 1 and r_max < extent.
TwoPointCurve two_point_correlation(const VoxelVolume& v, int axis, int64_t r_max);

// least-squares fit of exp(-r/lambda) over lambda in [0.05, 10*max_lag]:
// coarse geometric scan, then golden-section to 1e-4. deterministic.
LambdaFit fit_correlation_length(const TwoPointCurve& curve);

// internal pore-solid faces * a^2 / bulk volume
double specific_surface_area(const VoxelVolume& v);

// chi = V - E + F - C of the union of closed pore-voxel cubes
int64_t euler_characteristic(const VoxelVolume& v);
// chi / bulk volume (1/um^3)
double euler_characteristic_density(const VoxelVolume& v);

// full descriptor set; r_max 0 means half the extent per axis. axes whose
// extent cannot support a 3-lag curve get nan lambdas.
MorphReport morph_report(const VoxelVolume& v, int64_t r_max = 0);

// one JSON document / one CSV row per volume
std::string report_json(const std::string& id, const MorphReport& r);
std::string report_csv_header();
std::string report_csv_row(const std::string& id, const MorphReport& r);

}  // namespace rockgpt
