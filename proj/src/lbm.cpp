#include "rockgpt/lbm.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "rockgpt/bytes.hpp"
#include "rockgpt/common.hpp"

namespace rockgpt {

namespace {

constexpr int kQ = 19;
constexpr int kC[kQ][3] = {
    {0, 0, 0},  {1, 0, 0},   {-1, 0, 0}, {0, 1, 0},  {0, -1, 0},
    {0, 0, 1},  {0, 0, -1},  {1, 1, 0},  {-1, -1, 0}, {1, -1, 0},
    {-1, 1, 0}, {1, 0, 1},   {-1, 0, -1}, {1, 0, -1}, {-1, 0, 1},
    {0, 1, 1},  {0, -1, -1}, {0, 1, -1}, {0, -1, 1}};
constexpr int kOpp[kQ] = {0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17};
constexpr double kW0 = 1.0 / 3.0, kW1 = 1.0 / 18.0, kW2 = 1.0 / 36.0;
constexpr double kW[kQ] = {kW0, kW1, kW1, kW1, kW1, kW1, kW1, kW2, kW2, kW2,
                           kW2, kW2, kW2, kW2, kW2, kW2, kW2, kW2, kW2};

}  // namespace

void LbmConfig::validate() const {
  if (!(tau > 0.5)) throw ConfigError("lbm tau must exceed 0.5 (BGK stability bound)");
  if (!std::isfinite(tau) || !std::isfinite(g)) throw ConfigError("lbm tau and g must be finite");
  if (axis < 0 || axis > 2) throw ConfigError("lbm axis must be 0, 1, or 2");
  if (!(tol > 0)) throw ConfigError("lbm tol must be positive");
  if (check_every < 1) throw ConfigError("lbm check_every must be at least 1");
  if (max_steps < 1) throw ConfigError("lbm max_steps must be at least 1");
}

LbmSolver::LbmSolver(const VoxelVolume& v, const LbmConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  v.validate();
  d_ = v.d;
  h_ = v.h;
  w_ = v.w;
  n_ = v.size();
  gvec_ = {0, 0, 0};
  gvec_[static_cast<size_t>(cfg_.axis)] = cfg_.g;

  fluid_.assign(static_cast<size_t>(n_), 0);
  n_fluid_ = 0;
  for (int64_t x = 0; x < n_; ++x) {
    fluid_[static_cast<size_t>(x)] = v.values[static_cast<size_t>(x)];
    n_fluid_ += fluid_[static_cast<size_t>(x)];
  }

  // rest-state equilibrium on fluid nodes, empty slots on solid
  f_.assign(static_cast<size_t>(n_) * kQ, 0.0);
  f_tmp_.assign(static_cast<size_t>(n_) * kQ, 0.0);
  for (int64_t x = 0; x < n_; ++x)
    if (fluid_[static_cast<size_t>(x)])
      for (int q = 0; q < kQ; ++q) f_[static_cast<size_t>(x * kQ + q)] = kW[q];

  // periodic pulled-from node per direction
  src_.assign(static_cast<size_t>(n_) * kQ, 0);
  for (int64_t i = 0; i < d_; ++i)
    for (int64_t j = 0; j < h_; ++j)
      for (int64_t k = 0; k < w_; ++k) {
        int64_t x = (i * h_ + j) * w_ + k;
        for (int q = 0; q < kQ; ++q) {
          int64_t si = (i - kC[q][0] + d_) % d_;
          int64_t sj = (j - kC[q][1] + h_) % h_;
          int64_t sk = (k - kC[q][2] + w_) % w_;
          src_[static_cast<size_t>(x * kQ + q)] =
              static_cast<int32_t>((si * h_ + sj) * w_ + sk);
        }
      }
}

void LbmSolver::node_moments(int64_t node, double& rho, std::array<double, 3>& mom) const {
  const double* f = f_.data() + node * kQ;
  rho = 0;
  mom = {0, 0, 0};
  for (int q = 0; q < kQ; ++q) {
    rho += f[q];
    mom[0] += f[q] * kC[q][0];
    mom[1] += f[q] * kC[q][1];
    mom[2] += f[q] * kC[q][2];
  }
}

void LbmSolver::step() {
  // collision is node-local, done in place
  parallel_for(n_, [&](int64_t lo, int64_t hi) {
    for (int64_t x = lo; x < hi; ++x) {
      if (!fluid_[static_cast<size_t>(x)]) continue;
      double* f = f_.data() + x * kQ;
      double rho = 0, mx = 0, my = 0, mz = 0;
      for (int q = 0; q < kQ; ++q) {
        rho += f[q];
        mx += f[q] * kC[q][0];
        my += f[q] * kC[q][1];
        mz += f[q] * kC[q][2];
      }
      double ux = mx / rho + cfg_.tau * gvec_[0];
      double uy = my / rho + cfg_.tau * gvec_[1];
      double uz = mz / rho + cfg_.tau * gvec_[2];
      double usq = ux * ux + uy * uy + uz * uz;
      for (int q = 0; q < kQ; ++q) {
        double cu = kC[q][0] * ux + kC[q][1] * uy + kC[q][2] * uz;
        double feq = kW[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq);
        f[q] += (feq - f[q]) / cfg_.tau;
      }
    }
  });

  // pull streaming with half-way bounce-back off solid sources
  parallel_for(n_, [&](int64_t lo, int64_t hi) {
    for (int64_t x = lo; x < hi; ++x) {
      if (!fluid_[static_cast<size_t>(x)]) continue;
      double* out = f_tmp_.data() + x * kQ;
      const int32_t* src = src_.data() + x * kQ;
      for (int q = 0; q < kQ; ++q) {
        int64_t s = src[q];
        out[q] = fluid_[static_cast<size_t>(s)] ? f_[static_cast<size_t>(s * kQ + q)]
                                                : f_[static_cast<size_t>(x * kQ + kOpp[q])];
      }
    }
  });
  f_.swap(f_tmp_);
  ++iters_;
}

void LbmSolver::perturb(double eps, Rng& rng) {
  for (int64_t x = 0; x < n_; ++x) {
    if (!fluid_[static_cast<size_t>(x)]) continue;
    for (int q = 0; q < kQ; ++q) {
      size_t at = static_cast<size_t>(x * kQ + q);
      f_[at] += eps * kW[q] * rng.uniform(-1.0, 1.0);
    }
  }
}

double LbmSolver::total_mass() const {
  double m = 0;
  for (int64_t x = 0; x < n_; ++x)
    if (fluid_[static_cast<size_t>(x)])
      for (int q = 0; q < kQ; ++q) m += f_[static_cast<size_t>(x * kQ + q)];
  return m;
}

double LbmSolver::mean_u(int axis) const {
  check(axis >= 0 && axis <= 2, "velocity axis out of range");
  double s = 0;
  for (int64_t x = 0; x < n_; ++x) {
    if (!fluid_[static_cast<size_t>(x)]) continue;
    double rho;
    std::array<double, 3> mom;
    node_moments(x, rho, mom);
    s += mom[static_cast<size_t>(axis)] / rho + 0.5 * gvec_[static_cast<size_t>(axis)];
  }
  return s / static_cast<double>(n_);
}

double LbmSolver::max_speed() const {
  double m = 0;
  for (int64_t x = 0; x < n_; ++x) {
    if (!fluid_[static_cast<size_t>(x)]) continue;
    double rho;
    std::array<double, 3> mom;
    node_moments(x, rho, mom);
    double sp = 0;
    for (int a = 0; a < 3; ++a) {
      double u = mom[static_cast<size_t>(a)] / rho + 0.5 * gvec_[static_cast<size_t>(a)];
      sp += u * u;
    }
    m = std::max(m, std::sqrt(sp));
  }
  return m;
}

double LbmSolver::velocity_at(int64_t i, int64_t j, int64_t k, int axis) const {
  check(i >= 0 && i < d_ && j >= 0 && j < h_ && k >= 0 && k < w_, "lbm node out of range");
  check(axis >= 0 && axis <= 2, "velocity axis out of range");
  int64_t x = (i * h_ + j) * w_ + k;
  if (!fluid_[static_cast<size_t>(x)]) return 0.0;
  double rho;
  std::array<double, 3> mom;
  node_moments(x, rho, mom);
  return mom[static_cast<size_t>(axis)] / rho + 0.5 * gvec_[static_cast<size_t>(axis)];
}

std::vector<float> LbmSolver::velocity_field() const {
  std::vector<float> out(static_cast<size_t>(n_) * 3, 0.0f);
  for (int64_t x = 0; x < n_; ++x) {
    if (!fluid_[static_cast<size_t>(x)]) continue;
    double rho;
    std::array<double, 3> mom;
    node_moments(x, rho, mom);
    for (int a = 0; a < 3; ++a)
      out[static_cast<size_t>(x * 3 + a)] = static_cast<float>(
          mom[static_cast<size_t>(a)] / rho + 0.5 * gvec_[static_cast<size_t>(a)]);
  }
  return out;
}

void LbmSolver::run() {
  if (n_fluid_ == 0) {
    converged_ = true;  // nothing can move
    return;
  }
  if (n_fluid_ == n_ && cfg_.g != 0.0) {
    unbounded_ = true;  // no solid phase, the force accelerates forever
    return;
  }
  double prev = mean_u(cfg_.axis);
  while (iters_ < cfg_.max_steps) {
    step();
    if (iters_ % cfg_.check_every != 0) continue;
    double m = mean_u(cfg_.axis);
    if (!std::isfinite(m)) throw RuntimeFailure("lbm diverged: velocity is not finite");
    history_.push_back(m);
    double rel = std::abs(m - prev) / std::max(std::abs(m), 1e-300);
    prev = m;
    if (rel < cfg_.tol) {
      converged_ = true;
      return;
    }
  }
}

PermeabilityResult measure_permeability(LbmSolver& solver, double voxel_um,
                                        bool allow_unconverged) {
  if (!(voxel_um > 0) || !std::isfinite(voxel_um))
    throw ConfigError("voxel size must be positive");
  const LbmConfig& cfg = solver.config();
  if (cfg.g == 0.0) throw ConfigError("permeability needs a nonzero body force");
  if (!solver.converged() && !allow_unconverged) {
    std::string why = solver.unbounded()
                          ? "unbounded flow (no solid phase)"
                          : "not converged after " + std::to_string(solver.iterations()) +
                                " steps (tol " + std::to_string(cfg.tol) + ")";
    throw RuntimeFailure("permeability refused: " + why);
  }
  PermeabilityResult r;
  r.converged = solver.converged();
  r.unbounded = solver.unbounded();
  r.iterations = solver.iterations();
  r.history = solver.history();
  r.fluid_fraction =
      static_cast<double>(solver.fluid_nodes()) / static_cast<double>(solver.total_nodes());
  r.mean_u = solver.mean_u(cfg.axis);
  r.max_u = solver.max_speed();
  r.k_lattice = cfg.nu() * r.mean_u / cfg.g;
  double a_m = voxel_um * 1e-6;
  r.k_darcy = r.k_lattice * a_m * a_m / 9.869233e-13;
  return r;
}

PermeabilityResult lbm_permeability(const VoxelVolume& v, const LbmConfig& cfg,
                                    bool allow_unconverged) {
  LbmSolver solver(v, cfg);
  solver.run();
  return measure_permeability(solver, v.voxel_um, allow_unconverged);
}

std::string permeability_json(const PermeabilityResult& r, const LbmConfig& cfg,
                              double voxel_um) {
  nlohmann::json j;
  j["mean_u"] = r.mean_u;
  j["k_lattice"] = r.k_lattice;
  j["k_darcy"] = r.k_darcy;
  j["converged"] = r.converged;
  j["unbounded"] = r.unbounded;
  j["iterations"] = r.iterations;
  j["fluid_fraction"] = r.fluid_fraction;
  j["max_u"] = r.max_u;
  j["tau"] = cfg.tau;
  j["g"] = cfg.g;
  j["axis"] = cfg.axis;
  j["voxel_um"] = voxel_um;
  j["history"] = r.history;
  return j.dump(2);
}

void dump_velocity(const LbmSolver& solver, const std::string& path) {
  auto field = solver.velocity_field();
  std::vector<uint8_t> bytes;
  bytes.reserve(field.size() * 4);
  for (float v : field) put_f32(bytes, v);
  write_file_atomic(path, bytes);
}

}  // namespace rockgpt
