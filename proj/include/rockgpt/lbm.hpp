#pragma once

// single-phase D3Q19 BGK lattice Boltzmann solver for absolute permeability
// of binary volumes. pore voxels are fluid nodes, solid voxels get half-way
// bounce-back, all domain boundaries wrap periodically, and a constant body
// force along one axis drives the flow (equilibrium-velocity shift scheme,
// which conserves mass exactly; measured velocity carries the g/2 midpoint
// correction).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rockgpt/rng.hpp"
#include "rockgpt/voxel.hpp"

namespace rockgpt {

struct LbmConfig {
  double tau = 1.0;          // BGK relaxation time, viscosity nu = (tau - 0.5) / 3
  double g = 1e-5;           // body force per unit mass, lattice units
  int axis = 0;              // flow axis: 0 = d, 1 = h, 2 = w
  double tol = 1e-6;         // relative change of mean velocity per check window
  int64_t check_every = 100;
  int64_t max_steps = 50000;

  void validate() const;
  double nu() const { return (tau - 0.5) / 3.0; }
};

struct PermeabilityResult {
  double mean_u = 0;         // flow-axis velocity averaged over all nodes (superficial)
  double k_lattice = 0;      // nu * mean_u / g, lattice units squared
  double k_darcy = 0;        // k_lattice * (voxel edge in m)^2 / 9.869233e-13
  bool converged = false;
  bool unbounded = false;    // no solid phase to balance the force
  int64_t iterations = 0;
  double fluid_fraction = 0;
  double max_u = 0;          // largest fluid speed, low-Mach diagnostic
  std::vector<double> history;  // monitored mean velocity at each check
};

class LbmSolver {
 public:
  LbmSolver(const VoxelVolume& v, const LbmConfig& cfg);

  // one collision + streaming sweep over the lattice
  void step();
  // runs until the convergence criterion or max_steps; flags the all-pore
  // forced case as unbounded without stepping
  void run();

  // adds a relative perturbation of size eps to every fluid distribution,
  // for initial-condition independence checks
  void perturb(double eps, Rng& rng);

  double total_mass() const;            // fixed-order sum over fluid nodes
  double mean_u(int axis) const;        // averaged over all nodes, g/2 corrected
  double max_speed() const;
  double velocity_at(int64_t i, int64_t j, int64_t k, int axis) const;
  std::vector<float> velocity_field() const;  // 3 floats per node, solid = 0

  bool converged() const { return converged_; }
  bool unbounded() const { return unbounded_; }
  int64_t iterations() const { return iters_; }
  const std::vector<double>& history() const { return history_; }
  const LbmConfig& config() const { return cfg_; }
  int64_t fluid_nodes() const { return n_fluid_; }
  int64_t total_nodes() const { return n_; }

 private:
  void node_moments(int64_t node, double& rho, std::array<double, 3>& mom) const;

  LbmConfig cfg_;
  int64_t d_, h_, w_, n_, n_fluid_;
  std::array<double, 3> gvec_;
  std::vector<uint8_t> fluid_;
  std::vector<double> f_, f_tmp_;
  std::vector<int32_t> src_;  // pulled-from node per (node, direction)
  bool converged_ = false;
  bool unbounded_ = false;
  int64_t iters_ = 0;
  std::vector<double> history_;
};

// runs the solver and converts the superficial velocity into permeability.
// unconverged states are refused unless allow_unconverged is set.
PermeabilityResult measure_permeability(LbmSolver& solver, double voxel_um,
                                        bool allow_unconverged = false);
PermeabilityResult lbm_permeability(const VoxelVolume& v, const LbmConfig& cfg,
                                    bool allow_unconverged = false);

std::string permeability_json(const PermeabilityResult& r, const LbmConfig& cfg,
                              double voxel_um);
// raw velocity dump, 3 little-endian f32 per node in raster order
void dump_velocity(const LbmSolver& solver, const std::string& path);

}  // namespace rockgpt
