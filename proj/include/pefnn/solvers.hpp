#pragma once

#include <optional>

#include "pefnn/trajectory.hpp"

namespace pefnn {

/// Pseudo-spectral Navier-Stokes (vorticity form) on the periodic unit square.
struct NSConfig {
    int n = 64;                     // grid N x N
    double viscosity = 1e-3;
    double horizon = 50.0;          // final time; records at record_dt, 2*record_dt, ...
    double record_dt = 1.0;
    double forcing_amplitude = 0.1; // f = amp * (sin(2pi(x+y)) + cos(2pi(x+y)))
    double alpha_grf = 2.5;         // GRF spectral exponent
    double tau_grf = 7.0;           // GRF inverse length scale
    std::uint64_t seed = 0;
    double cfl_safety = 0.5;

    void validate() const;
};

/// Periodic Gaussian random field: white noise shaped by the amplitude
/// (|k|^2 + tau^2)^(-alpha), zero spatial mean, unit expected variance.
Field grf_sample(const NSConfig& cfg);

/// Integrates d_t w + u . grad w = nu lap w + f with Crank-Nicolson on the
/// viscous term, forward Euler on dealiased advection and forcing.
/// Throws Instability when max|w| exceeds 1e6.
Trajectory ns_solve(const Field& w0, const NSConfig& cfg);

/// Finite-volume shallow-water radial dam break on [-2.5, 2.5]^2 with
/// reflective walls and Rusanov fluxes.
struct SWEConfig {
    int n = 128;
    double gravity = 1.0;
    double domain_half = 2.5;
    int records = 25;       // uniformly spaced slices over (0, t_end]
    double t_end = 1.0;
    double dam_radius = 0.5; // initial depth 2 inside, 1 outside
    std::uint64_t seed = 0;
    double cfl_safety = 0.4;
    // solve at n*supersample and area-average down to n: recorded coarse
    // slices are then the coarse-graining of one well-resolved solution,
    // which is what lets a model trained on them transfer across grids
    int supersample = 2;

    void validate() const;
};

/// Uniform draw from (0.3, 0.7) for the dam radius.
double sample_dam_radius(std::uint64_t seed);

Trajectory swe_dambreak_solve(const SWEConfig& cfg);

/// Prescribed total discharge [m^3/s] entering through boundary faces of the
/// listed cells, linearly interpolated in time between samples.
struct FloodInflow {
    enum class Side { West, East, North, South };
    Side side = Side::West;
    std::vector<int> cells;      // indices along the side (row for W/E, column for N/S)
    std::vector<double> time;    // seconds, ascending
    std::vector<double> discharge;
};

/// Local-inertial staggered-grid flood solver with Manning friction,
/// rainfall and optional inflow/open boundaries.
struct FloodConfig {
    Field dem;     // 1 x 1 x H x W terrain elevation, meters
    Field manning; // same shape (or empty = uniform 0.03)
    Field rain;    // same shape, m/s (or empty = no rain)
    double rain_start = 0.0;
    double rain_end = 1e300;
    Field h0;      // optional initial depth (empty = dry domain)
    double dx = 480.0;
    double theta = 0.7; // q-average weighting (artificial diffusion control)
    double alpha = 0.7; // CFL time-step safety factor
    double horizon = 3600.0;
    double record_every = 30.0;
    double h_dry = 1e-4;
    double gravity = 9.81;
    bool open_boundaries = false;
    std::optional<FloodInflow> inflow;

    void validate() const;
};

/// Mass-accounting summary of one flood run.
struct FloodStats {
    double clamped_volume = 0.0; // water removed by negative-depth clamping
    double outflow_volume = 0.0; // volume leaving through open boundaries
    double inflow_volume = 0.0;
    double rain_volume = 0.0;
    double final_volume = 0.0;
    long steps = 0;
};

/// Depth trajectory recorded every record_every seconds (slice 0 = initial
/// state). Throws NegativeDepth when cumulative clamping exceeds 1e-6 of
/// the total volume.
Trajectory flood_solve(const FloodConfig& cfg, FloodStats* stats = nullptr);

/// Smooth deterministic terrain plus seeded small-scale roughness.
///  bowl:      z = 8 r^2 / R^2                        (center minimum)
///  valley:    z = 20 (u - 1/2)^2 + 6 (1 - v)          (drains south)
///  two-river: two parabolic channels merging south
/// with u, v in [0, 1] and ~0.1 m of seeded smooth roughness on top.
Field make_synthetic_dem(const std::string& kind, int n, std::uint64_t seed);

} // namespace pefnn
