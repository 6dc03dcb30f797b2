#include "pefnn/solvers.hpp"

#include <algorithm>
#include <cmath>

#include "pefnn/fft.hpp"
#include "pefnn/rng.hpp"

namespace pefnn {

// ---------------------------------------------------------------------------
// Gaussian random field
// ---------------------------------------------------------------------------

void NSConfig::validate() const {
    if (n < 4) throw ConfigError("ns: grid must be at least 4");
    if (viscosity <= 0.0) throw ConfigError("ns: viscosity must be positive");
    if (record_dt <= 0.0 || horizon < record_dt)
        throw ConfigError("ns: need horizon >= record_dt > 0");
    if (cfl_safety <= 0.0 || cfl_safety > 1.0)
        throw ConfigError("ns: cfl_safety must lie in (0, 1]");
}

Field grf_sample(const NSConfig& cfg) {
    const int n = cfg.n;
    Rng rng(cfg.seed);
    ComplexField spec(1, 1, n, n);

    auto wavenum = [n](int i) { return i <= n / 2 ? i : i - n; };
    auto amp = [&](int ky, int kx) {
        const double k2 = static_cast<double>(ky) * ky + static_cast<double>(kx) * kx;
        return std::pow(k2 + cfg.tau_grf * cfg.tau_grf, -cfg.alpha_grf);
    };

    // fill conjugate pairs once each; self-conjugate bins stay real; DC = 0
    double expected_var = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const int ky = wavenum(i), kx = wavenum(j);
            if (ky == 0 && kx == 0) continue;
            const int im = (n - i) % n, jm = (n - j) % n;
            const bool self = (im == i && jm == j);
            // visit each pair from its lexicographically first member
            if (std::make_pair(i, j) > std::make_pair(im, jm)) continue;
            const double a = amp(ky, kx);
            if (self) {
                spec.at(0, 0, i, j) = cdouble(a * rng.normal(), 0.0);
                expected_var += a * a;
            } else {
                const cdouble v = a * cdouble(rng.normal(), rng.normal());
                spec.at(0, 0, i, j) = v;
                spec.at(0, 0, im, jm) = std::conj(v);
                expected_var += 4.0 * a * a; // E|F_k|^2 = 2a^2 on both bins
            }
        }
    expected_var /= static_cast<double>(n) * n * n * n;

    Field f = ifft2(spec);
    const double scale = 1.0 / std::sqrt(expected_var);
    for (auto& v : f.data) v *= scale;
    f.dx = f.dy = 1.0 / n;
    return f;
}

// ---------------------------------------------------------------------------
// pseudo-spectral Navier-Stokes, vorticity form
// ---------------------------------------------------------------------------

Trajectory ns_solve(const Field& w0, const NSConfig& cfg) {
    cfg.validate();
    const int n = cfg.n;
    if (w0.h != n || w0.w != n || w0.b != 1 || w0.c != 1)
        throw ShapeMismatch("ns_solve: w0 must be 1x1x" + std::to_string(n) + "x" +
                            std::to_string(n));

    const double twopi = 2.0 * M_PI;
    std::vector<double> kvec(n);
    for (int i = 0; i < n; ++i) kvec[i] = i <= n / 2 ? i : i - n;
    const int kmax_keep = n / 3; // 2/3 dealiasing

    auto deal = [&](int i) { return std::abs(kvec[i]) <= kmax_keep; };

    // spectral forcing
    ComplexField f_hat(1, 1, n, n);
    {
        Field f(1, 1, n, n);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double s = twopi * (static_cast<double>(x) / n + static_cast<double>(y) / n);
                f.at(0, 0, y, x) = cfg.forcing_amplitude * (std::sin(s) + std::cos(s));
            }
        f_hat = fft2(f);
    }

    ComplexField w_hat = fft2(w0);
    const int records = static_cast<int>(std::round(cfg.horizon / cfg.record_dt));
    Trajectory traj(records, 1, n, n);
    traj.dt_record = cfg.record_dt;
    traj.dx = traj.dy = 1.0 / n;
    traj.channel_names = {"vorticity"};

    ComplexField u_hat(1, 1, n, n), v_hat(1, 1, n, n), wx_hat(1, 1, n, n), wy_hat(1, 1, n, n);

    auto nonlinear = [&](const ComplexField& wh, ComplexField& out) {
        // velocity from the streamfunction, gradients of w, dealias, multiply
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double ky = kvec[i], kx = kvec[j];
                const double k2 = kx * kx + ky * ky;
                const cdouble w = wh.at(0, 0, i, j);
                const cdouble psi = (k2 == 0.0) ? cdouble(0, 0) : w / (4.0 * M_PI * M_PI * k2);
                const bool keep = deal(i) && deal(j);
                const cdouble iw(-w.imag(), w.real());
                const cdouble ipsi(-psi.imag(), psi.real());
                u_hat.at(0, 0, i, j) = keep ? twopi * ky * ipsi : cdouble(0, 0);
                v_hat.at(0, 0, i, j) = keep ? -twopi * kx * ipsi : cdouble(0, 0);
                wx_hat.at(0, 0, i, j) = keep ? twopi * kx * iw : cdouble(0, 0);
                wy_hat.at(0, 0, i, j) = keep ? twopi * ky * iw : cdouble(0, 0);
            }
        ComplexField u = ifft2_complex(u_hat), v = ifft2_complex(v_hat);
        ComplexField wx = ifft2_complex(wx_hat), wy = ifft2_complex(wy_hat);
        ComplexField adv(1, 1, n, n);
        for (std::size_t t = 0; t < adv.data.size(); ++t)
            adv.data[t] = u.data[t].real() * wx.data[t].real() +
                          v.data[t].real() * wy.data[t].real();
        out = fft2_complex(adv);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (!(deal(i) && deal(j))) out.at(0, 0, i, j) = cdouble(0, 0);
        // max velocity magnitude for the CFL estimate
        double umax = 0.0;
        for (std::size_t t = 0; t < u.data.size(); ++t)
            umax = std::max(umax,
                            std::max(std::abs(u.data[t].real()), std::abs(v.data[t].real())));
        u_hat.at(0, 0, 0, 0) = cdouble(umax, 0.0); // stash for the caller
    };

    ComplexField adv_hat(1, 1, n, n);
    double t = 0.0;
    for (int rec = 0; rec < records; ++rec) {
        const double t_target = (rec + 1) * cfg.record_dt;
        while (t < t_target - 1e-12) {
            nonlinear(w_hat, adv_hat);
            const double umax = u_hat.at(0, 0, 0, 0).real();
            double dt = cfg.cfl_safety / (n * std::max(umax, 1e-12));
            dt = std::min(dt, cfg.record_dt);
            const int nsub = std::max(1, static_cast<int>(std::ceil((t_target - t) / dt)));
            dt = (t_target - t) / nsub;

            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double k2 = kvec[i] * kvec[i] + kvec[j] * kvec[j];
                    const double lam = cfg.viscosity * 4.0 * M_PI * M_PI * k2;
                    const cdouble rhs = (1.0 - 0.5 * dt * lam) * w_hat.at(0, 0, i, j) +
                                        dt * (f_hat.at(0, 0, i, j) - adv_hat.at(0, 0, i, j));
                    w_hat.at(0, 0, i, j) = rhs / (1.0 + 0.5 * dt * lam);
                }
            t += dt;
            double wmax = 0.0;
            for (auto v : w_hat.data) wmax = std::max(wmax, std::abs(v));
            if (wmax / (n * n) > 1e6)
                throw Instability("ns_solve: |w| exceeded 1e6 at t = " + std::to_string(t));
        }
        Field w = ifft2(w_hat);
        std::copy(w.data.begin(), w.data.end(), traj.slice(rec, 0));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// shallow-water radial dam break, Rusanov finite volumes
// ---------------------------------------------------------------------------

void SWEConfig::validate() const {
    if (n < 4) throw ConfigError("swe: grid must be at least 4");
    if (gravity <= 0.0) throw ConfigError("swe: gravity must be positive");
    if (records < 1) throw ConfigError("swe: records must be >= 1");
    if (t_end <= 0.0) throw ConfigError("swe: t_end must be positive");
    if (dam_radius <= 0.0) throw ConfigError("swe: dam_radius must be positive");
    if (supersample < 1) throw ConfigError("swe: supersample must be >= 1");
}

double sample_dam_radius(std::uint64_t seed) {
    Rng rng(seed);
    return rng.uniform(0.3, 0.7);
}

namespace {

struct SweState {
    int n;
    std::vector<double> h, hu, hv;
    double& H(int j, int i) { return h[static_cast<std::size_t>(j) * n + i]; }
    double& HU(int j, int i) { return hu[static_cast<std::size_t>(j) * n + i]; }
    double& HV(int j, int i) { return hv[static_cast<std::size_t>(j) * n + i]; }
};

} // namespace

Trajectory swe_dambreak_solve(const SWEConfig& cfg) {
    cfg.validate();
    const int n = cfg.n * cfg.supersample;
    const int ss = cfg.supersample;
    const double g = cfg.gravity;
    const double dx = 2.0 * cfg.domain_half / n;

    SweState s{n, std::vector<double>(static_cast<std::size_t>(n) * n),
               std::vector<double>(static_cast<std::size_t>(n) * n, 0.0),
               std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double x = -cfg.domain_half + (i + 0.5) * dx;
            const double y = -cfg.domain_half + (j + 0.5) * dx;
            s.H(j, i) = std::sqrt(x * x + y * y) < cfg.dam_radius ? 2.0 : 1.0;
        }

    Trajectory traj(cfg.records, 1, cfg.n, cfg.n);
    traj.dt_record = cfg.t_end / cfg.records;
    traj.dx = traj.dy = dx * ss;
    traj.channel_names = {"depth"};

    // reflective ghost lookup: mirror index, flip the normal momentum
    auto cell = [&](int j, int i, double& h, double& hu, double& hv) {
        double sx = 1.0, sy = 1.0;
        if (i < 0) { i = 0; sx = -1.0; }
        if (i >= n) { i = n - 1; sx = -1.0; }
        if (j < 0) { j = 0; sy = -1.0; }
        if (j >= n) { j = n - 1; sy = -1.0; }
        h = s.H(j, i);
        hu = sx * s.HU(j, i);
        hv = sy * s.HV(j, i);
    };

    std::vector<double> fh(static_cast<std::size_t>(n) * (n + 1));
    std::vector<double> fhu(fh.size()), fhv(fh.size());
    std::vector<double> gh(static_cast<std::size_t>(n + 1) * n);
    std::vector<double> ghu(gh.size()), ghv(gh.size());

    double t = 0.0;
    for (int rec = 0; rec < cfg.records; ++rec) {
        const double t_target = (rec + 1) * traj.dt_record;
        while (t < t_target - 1e-14) {
            double amax = 1e-12;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const double h = s.H(j, i);
                    if (h < 1e-8) throw DryCell("swe: dry cell at (" + std::to_string(j) +
                                                "," + std::to_string(i) + ")");
                    const double c = std::sqrt(g * h);
                    amax = std::max(amax, std::max(std::abs(s.HU(j, i) / h),
                                                   std::abs(s.HV(j, i) / h)) + c);
                }
            double dt = cfg.cfl_safety * dx / amax;
            dt = std::min(dt, t_target - t);

            // x-direction Rusanov fluxes at faces i-1/2
            for (int j = 0; j < n; ++j)
                for (int i = 0; i <= n; ++i) {
                    double hL, huL, hvL, hR, huR, hvR;
                    cell(j, i - 1, hL, huL, hvL);
                    cell(j, i, hR, huR, hvR);
                    const double uL = huL / hL, uR = huR / hR;
                    const double a = std::max(std::abs(uL) + std::sqrt(g * hL),
                                              std::abs(uR) + std::sqrt(g * hR));
                    const std::size_t f = static_cast<std::size_t>(j) * (n + 1) + i;
                    fh[f] = 0.5 * (huL + huR) - 0.5 * a * (hR - hL);
                    fhu[f] = 0.5 * (huL * uL + 0.5 * g * hL * hL + huR * uR +
                                    0.5 * g * hR * hR) -
                             0.5 * a * (huR - huL);
                    fhv[f] = 0.5 * (hvL * uL + hvR * uR) - 0.5 * a * (hvR - hvL);
                }
            // y-direction fluxes at faces j-1/2
            for (int j = 0; j <= n; ++j)
                for (int i = 0; i < n; ++i) {
                    double hL, huL, hvL, hR, huR, hvR;
                    cell(j - 1, i, hL, huL, hvL);
                    cell(j, i, hR, huR, hvR);
                    const double vL = hvL / hL, vR = hvR / hR;
                    const double a = std::max(std::abs(vL) + std::sqrt(g * hL),
                                              std::abs(vR) + std::sqrt(g * hR));
                    const std::size_t f = static_cast<std::size_t>(j) * n + i;
                    gh[f] = 0.5 * (hvL + hvR) - 0.5 * a * (hR - hL);
                    ghv[f] = 0.5 * (hvL * vL + 0.5 * g * hL * hL + hvR * vR +
                                    0.5 * g * hR * hR) -
                             0.5 * a * (hvR - hvL);
                    ghu[f] = 0.5 * (huL * vL + huR * vR) - 0.5 * a * (huR - huL);
                }

            const double r = dt / dx;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) {
                    const std::size_t fx = static_cast<std::size_t>(j) * (n + 1) + i;
                    const std::size_t fy = static_cast<std::size_t>(j) * n + i;
                    const std::size_t fy1 = static_cast<std::size_t>(j + 1) * n + i;
                    s.H(j, i) -= r * (fh[fx + 1] - fh[fx] + gh[fy1] - gh[fy]);
                    s.HU(j, i) -= r * (fhu[fx + 1] - fhu[fx] + ghu[fy1] - ghu[fy]);
                    s.HV(j, i) -= r * (fhv[fx + 1] - fhv[fx] + ghv[fy1] - ghv[fy]);
                }
            t += dt;
        }
        // conservative area average down to the recorded resolution
        double* out = traj.slice(rec, 0);
        const double inv = 1.0 / (static_cast<double>(ss) * ss);
        for (int j = 0; j < cfg.n; ++j)
            for (int i = 0; i < cfg.n; ++i) {
                double acc = 0.0;
                for (int jj = 0; jj < ss; ++jj)
                    for (int ii = 0; ii < ss; ++ii) acc += s.H(j * ss + jj, i * ss + ii);
                out[static_cast<std::size_t>(j) * cfg.n + i] = acc * inv;
            }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// local-inertial flood solver
// ---------------------------------------------------------------------------

void FloodConfig::validate() const {
    if (dem.h < 2 || dem.w < 2 || dem.b != 1 || dem.c != 1)
        throw ConfigError("flood: dem must be a 1x1xHxW field, H,W >= 2");
    if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("flood: theta must lie in (0, 1]");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("flood: alpha must lie in (0, 1]");
    if (dx <= 0.0) throw ConfigError("flood: dx must be positive");
    if (record_every <= 0.0 || horizon < record_every)
        throw ConfigError("flood: need horizon >= record_every > 0");
    if (!manning.data.empty() && !manning.same_shape(dem))
        throw ConfigError("flood: manning shape mismatch");
    if (!rain.data.empty() && !rain.same_shape(dem))
        throw ConfigError("flood: rain shape mismatch");
    if (!h0.data.empty() && !h0.same_shape(dem))
        throw ConfigError("flood: h0 shape mismatch");
}

Trajectory flood_solve(const FloodConfig& cfg, FloodStats* stats) {
    cfg.validate();
    const int H = cfg.dem.h, W = cfg.dem.w;
    const double dx = cfg.dx, g = cfg.gravity;
    const double theta = cfg.theta;

    std::vector<double> z(cfg.dem.data);
    std::vector<double> nman(static_cast<std::size_t>(H) * W, 0.03);
    if (!cfg.manning.data.empty()) nman = cfg.manning.data;
    std::vector<double> h(static_cast<std::size_t>(H) * W, 0.0);
    if (!cfg.h0.data.empty()) h = cfg.h0.data;

    std::vector<double> qx(static_cast<std::size_t>(H) * (W + 1), 0.0);
    std::vector<double> qy(static_cast<std::size_t>(H + 1) * W, 0.0);
    std::vector<double> qx_new(qx.size()), qy_new(qy.size());

    auto Z = [&](int j, int i) { return z[static_cast<std::size_t>(j) * W + i]; };
    auto Hc = [&](int j, int i) -> double& { return h[static_cast<std::size_t>(j) * W + i]; };
    auto N = [&](int j, int i) { return nman[static_cast<std::size_t>(j) * W + i]; };
    auto QX = [&](std::vector<double>& q, int j, int i) -> double& {
        return q[static_cast<std::size_t>(j) * (W + 1) + i];
    };
    auto QY = [&](std::vector<double>& q, int j, int i) -> double& {
        return q[static_cast<std::size_t>(j) * W + i];
    };

    const int records = static_cast<int>(std::round(cfg.horizon / cfg.record_every)) + 1;
    Trajectory traj(records, 1, H, W);
    traj.dt_record = cfg.record_every;
    traj.dx = traj.dy = dx;
    traj.channel_names = {"depth"};
    std::copy(h.begin(), h.end(), traj.slice(0, 0));

    FloodStats st;
    double t = 0.0;
    int rec = 1;

    // face update shared by both directions: returns the new discharge
    auto face_update = [&](double q_prev, double q_avg, double hL, double hR, double zL,
                           double zR, double nf, double dt) {
        const double etaL = hL + zL, etaR = hR + zR;
        const double hf = std::max(etaL, etaR) - std::max(zL, zR);
        if (hf < cfg.h_dry) return 0.0;
        const double qhat = theta * q_prev + 0.5 * (1.0 - theta) * q_avg;
        const double slope = (etaR - etaL) / dx;
        return (qhat - g * hf * dt * slope) /
               (1.0 + g * dt * nf * nf * std::abs(qhat) / std::pow(hf, 7.0 / 3.0));
    };

    auto inflow_q = [&](double tnow) {
        if (!cfg.inflow) return 0.0;
        const auto& in = *cfg.inflow;
        if (in.time.empty()) return 0.0;
        if (tnow <= in.time.front()) return in.discharge.front();
        if (tnow >= in.time.back()) return in.discharge.back();
        std::size_t k = 1;
        while (in.time[k] < tnow) ++k;
        const double w = (tnow - in.time[k - 1]) / (in.time[k] - in.time[k - 1]);
        return (1.0 - w) * in.discharge[k - 1] + w * in.discharge[k];
    };

    while (rec < records) {
        const double t_target = rec * cfg.record_every;
        while (t < t_target - 1e-9) {
            double hmax = 0.0;
            for (double v : h) hmax = std::max(hmax, v);
            double dt = cfg.alpha * dx / std::sqrt(g * std::max(hmax, cfg.h_dry));
            dt = std::min(dt, t_target - t);

            // x faces (interior; boundary faces handled below)
            for (int j = 0; j < H; ++j)
                for (int i = 1; i < W; ++i) {
                    const double q_avg = QX(qx, j, i - 1) + QX(qx, j, i + 1);
                    QX(qx_new, j, i) =
                        face_update(QX(qx, j, i), q_avg, Hc(j, i - 1), Hc(j, i), Z(j, i - 1),
                                    Z(j, i), 0.5 * (N(j, i - 1) + N(j, i)), dt);
                }
            // y faces
            for (int j = 1; j < H; ++j)
                for (int i = 0; i < W; ++i) {
                    const double q_avg = QY(qy, j - 1, i) + QY(qy, j + 1, i);
                    QY(qy_new, j, i) =
                        face_update(QY(qy, j, i), q_avg, Hc(j - 1, i), Hc(j, i), Z(j - 1, i),
                                    Z(j, i), 0.5 * (N(j - 1, i) + N(j, i)), dt);
                }

            // closed boundary faces carry zero flux
            for (int j = 0; j < H; ++j) {
                QX(qx_new, j, 0) = 0.0;
                QX(qx_new, j, W) = 0.0;
            }
            for (int i = 0; i < W; ++i) {
                QY(qy_new, 0, i) = 0.0;
                QY(qy_new, H, i) = 0.0;
            }

            // open boundaries: free outfall against a dry ghost cell at the
            // same bed level, outward flow only
            if (cfg.open_boundaries) {
                for (int j = 0; j < H; ++j) {
                    QX(qx_new, j, 0) = std::min(
                        0.0, face_update(QX(qx, j, 0), QX(qx, j, 1), 0.0, Hc(j, 0), Z(j, 0),
                                         Z(j, 0), N(j, 0), dt));
                    QX(qx_new, j, W) = std::max(
                        0.0, face_update(QX(qx, j, W), QX(qx, j, W - 1), Hc(j, W - 1), 0.0,
                                         Z(j, W - 1), Z(j, W - 1), N(j, W - 1), dt));
                }
                for (int i = 0; i < W; ++i) {
                    QY(qy_new, 0, i) = std::min(
                        0.0, face_update(QY(qy, 0, i), QY(qy, 1, i), 0.0, Hc(0, i), Z(0, i),
                                         Z(0, i), N(0, i), dt));
                    QY(qy_new, H, i) = std::max(
                        0.0, face_update(QY(qy, H, i), QY(qy, H - 1, i), Hc(H - 1, i), 0.0,
                                         Z(H - 1, i), Z(H - 1, i), N(H - 1, i), dt));
                }
            }

            // prescribed inflow through boundary faces of listed cells;
            // midpoint evaluation keeps the injected volume dt-independent
            if (cfg.inflow && !cfg.inflow->cells.empty()) {
                const double q_total = inflow_q(t + 0.5 * dt);
                const double q_face =
                    q_total / (static_cast<double>(cfg.inflow->cells.size()) * dx);
                for (int c : cfg.inflow->cells) {
                    switch (cfg.inflow->side) {
                    case FloodInflow::Side::West: QX(qx_new, c, 0) = q_face; break;
                    case FloodInflow::Side::East: QX(qx_new, c, W) = -q_face; break;
                    case FloodInflow::Side::North: QY(qy_new, 0, c) = q_face; break;
                    case FloodInflow::Side::South: QY(qy_new, H, c) = -q_face; break;
                    }
                }
                st.inflow_volume += q_total * dt;
            }

            // positivity limiter: scale each cell's outgoing discharges so it
            // cannot drain below zero within one step
            {
                std::vector<double> lim(static_cast<std::size_t>(H) * W, 1.0);
                auto pos = [](double v) { return v > 0.0 ? v : 0.0; };
                for (int j = 0; j < H; ++j)
                    for (int i = 0; i < W; ++i) {
                        const double out =
                            dt / dx *
                            (pos(QX(qx_new, j, i + 1)) + pos(-QX(qx_new, j, i)) +
                             pos(QY(qy_new, j + 1, i)) + pos(-QY(qy_new, j, i)));
                        if (out > 0.0 && out > Hc(j, i))
                            lim[static_cast<std::size_t>(j) * W + i] = Hc(j, i) / out;
                    }
                auto lim_at = [&](int j, int i) {
                    return lim[static_cast<std::size_t>(j) * W + i];
                };
                for (int j = 0; j < H; ++j)
                    for (int i = 0; i <= W; ++i) {
                        double& q = QX(qx_new, j, i);
                        if (q > 0.0 && i >= 1) q *= lim_at(j, i - 1);
                        else if (q < 0.0 && i < W) q *= lim_at(j, i);
                    }
                for (int j = 0; j <= H; ++j)
                    for (int i = 0; i < W; ++i) {
                        double& q = QY(qy_new, j, i);
                        if (q > 0.0 && j >= 1) q *= lim_at(j - 1, i);
                        else if (q < 0.0 && j < H) q *= lim_at(j, i);
                    }
            }

            std::swap(qx, qx_new);
            std::swap(qy, qy_new);

            // mass update
            const bool raining = !cfg.rain.data.empty() && t >= cfg.rain_start &&
                                 t < cfg.rain_end;
            for (int j = 0; j < H; ++j)
                for (int i = 0; i < W; ++i) {
                    double dh = dt / dx *
                                (QX(qx, j, i) - QX(qx, j, i + 1) + QY(qy, j, i) -
                                 QY(qy, j + 1, i));
                    if (raining) {
                        const double r = cfg.rain.data[static_cast<std::size_t>(j) * W + i];
                        dh += dt * r;
                        st.rain_volume += dt * r * dx * dx;
                    }
                    double& hv = Hc(j, i);
                    hv += dh;
                    if (hv < 0.0) {
                        st.clamped_volume += -hv * dx * dx;
                        hv = 0.0;
                    }
                }

            // outflow accounting over open boundary faces (inflow faces are
            // tallied separately above)
            if (cfg.open_boundaries) {
                auto is_inflow = [&](FloodInflow::Side side, int c) {
                    if (!cfg.inflow || cfg.inflow->side != side) return false;
                    for (int k : cfg.inflow->cells)
                        if (k == c) return true;
                    return false;
                };
                double out = 0.0;
                for (int j = 0; j < H; ++j) {
                    if (!is_inflow(FloodInflow::Side::East, j)) out += QX(qx, j, W);
                    if (!is_inflow(FloodInflow::Side::West, j)) out -= QX(qx, j, 0);
                }
                for (int i = 0; i < W; ++i) {
                    if (!is_inflow(FloodInflow::Side::South, i)) out += QY(qy, H, i);
                    if (!is_inflow(FloodInflow::Side::North, i)) out -= QY(qy, 0, i);
                }
                st.outflow_volume += out * dx * dt;
            }

            double total = 0.0;
            for (double v : h) total += v;
            total *= dx * dx;
            if (st.clamped_volume > 1e-6 * std::max(total, 1e-12) && st.clamped_volume > 1e-9)
                throw NegativeDepth("flood: cumulative negative-depth clamping " +
                                    std::to_string(st.clamped_volume) +
                                    " m^3 exceeds 1e-6 of total volume");
            t += dt;
            st.steps += 1;
        }
        std::copy(h.begin(), h.end(), traj.slice(rec, 0));
        rec += 1;
    }

    double total = 0.0;
    for (double v : h) total += v;
    st.final_volume = total * dx * dx;
    if (stats) *stats = st;
    return traj;
}

// ---------------------------------------------------------------------------
// synthetic terrain
// ---------------------------------------------------------------------------

Field make_synthetic_dem(const std::string& kind, int n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("make_synthetic_dem: n must be >= 2");
    Field dem(1, 1, n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double u = (i + 0.5) / n, v = (j + 0.5) / n;
            double zv;
            if (kind == "bowl") {
                const double r2 = (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5);
                zv = 8.0 * r2 / 0.5;
            } else if (kind == "valley") {
                zv = 20.0 * (u - 0.5) * (u - 0.5) + 6.0 * (1.0 - v);
            } else if (kind == "two-river") {
                const double a = (u - 0.3) * (u - 0.3);
                const double b = (u - 0.7) * (u - 0.7);
                const double mix = std::min(1.0, v * 2.0); // channels merge downstream
                zv = 20.0 * ((1.0 - mix) * std::min(a, b) +
                             mix * (u - 0.5) * (u - 0.5)) +
                     6.0 * (1.0 - v);
            } else {
                throw ConfigError("make_synthetic_dem: unknown kind '" + kind +
                                  "' (bowl|valley|two-river)");
            }
            dem.at(0, 0, j, i) = zv;
        }

    // seeded smooth roughness: a handful of low-frequency sinusoids
    Rng rng(seed);
    for (int mode = 0; mode < 6; ++mode) {
        const double ky = std::floor(rng.uniform(1.0, 5.0));
        const double kx = std::floor(rng.uniform(1.0, 5.0));
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double amp = 0.1 * rng.uniform(0.3, 1.0) / 6.0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double u = (i + 0.5) / n, v = (j + 0.5) / n;
                dem.at(0, 0, j, i) +=
                    amp * std::sin(2.0 * M_PI * (kx * u + ky * v) + phase);
            }
    }
    return dem;
}

} // namespace pefnn
