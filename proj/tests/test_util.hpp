#pragma once

#include <cmath>

#include "pefnn/fft.hpp"
#include "pefnn/rng.hpp"
#include "pefnn/trajectory.hpp"

namespace pefnn::test {

inline Field random_field(int b, int c, int h, int w, std::uint64_t seed) {
    Field f(b, c, h, w);
    Rng rng(seed);
    for (auto& v : f.data) v = rng.uniform(-1.0, 1.0);
    return f;
}

inline double rel_diff(const Field& a, const Field& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num / std::max(den, 1e-30));
}

/// Random real field whose spectrum is confined to |ky|,|kx| <= m,
/// normalized to unit max amplitude.
inline Field band_limited_field(int b, int c, int n, int m, std::uint64_t seed) {
    Rng rng(seed);
    ComplexField spec(b, c, n, n);
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci)
            for (int ky = -m; ky <= m; ++ky)
                for (int kx = -m; kx <= m; ++kx) {
                    if (ky == 0 && kx == 0) {
                        spec.at(bi, ci, 0, 0) = cdouble(rng.uniform(-1, 1), 0.0);
                        continue;
                    }
                    const cdouble v(rng.uniform(-1, 1), rng.uniform(-1, 1));
                    spec.at(bi, ci, (ky + n) % n, (kx + n) % n) = v;
                    spec.at(bi, ci, (n - ky) % n, (n - kx) % n) = std::conj(v);
                }
    Field f = ifft2(spec);
    double mx = 0.0;
    for (double v : f.data) mx = std::max(mx, std::abs(v));
    for (auto& v : f.data) v /= mx;
    return f;
}

/// Synthetic discrete system u_{t+1} = u_t + 0.1 u_t^2 with band-limited
/// initial states; the oracle for polynomial-expressivity tests.
inline Dataset quadratic_system(int n_traj, int slices, int n, int band_m, double amp,
                                std::uint64_t seed) {
    Dataset data;
    for (int k = 0; k < n_traj; ++k) {
        Trajectory traj(slices, 1, n, n);
        Field u = band_limited_field(1, 1, n, band_m, Rng::derive(seed, k));
        for (auto& v : u.data) v *= amp;
        for (int t = 0; t < slices; ++t) {
            std::copy(u.data.begin(), u.data.end(), traj.slice(t, 0));
            Field next = u;
            for (std::size_t i = 0; i < u.data.size(); ++i)
                next.data[i] = u.data[i] + 0.1 * u.data[i] * u.data[i];
            u = next;
        }
        data.push_back(std::move(traj));
    }
    return data;
}

} // namespace pefnn::test
