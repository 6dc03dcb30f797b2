#include "pefnn/kernel.hpp"

#include <cmath>

namespace pefnn {

const char* kernel_mode_name(KernelMode mode) {
    switch (mode) {
    case KernelMode::Dense: return "dense";
    case KernelMode::SingleRotation: return "single";
    case KernelMode::MultipleRotation: return "multiple";
    }
    return "?";
}

KernelMode kernel_mode_from_name(const std::string& name) {
    if (name == "dense") return KernelMode::Dense;
    if (name == "single") return KernelMode::SingleRotation;
    if (name == "multiple") return KernelMode::MultipleRotation;
    throw ConfigError("unknown kernel mode '" + name + "' (dense|single|multiple)");
}

std::size_t KernelShape::filter_free_count() const {
    const std::size_t k = static_cast<std::size_t>(side());
    switch (mode) {
    case KernelMode::Dense:
        return 2 * k * k;
    case KernelMode::SingleRotation:
        // half-plane of complex values + real DC = (k^2 - 1) + 1
        return k * k;
    case KernelMode::MultipleRotation:
        // quadrant plus the north arm of the center cross + real DC
        return 2 * static_cast<std::size_t>(m) * (m + 1) + 1;
    }
    return 0;
}

void KernelParams::init(Rng& rng) {
    const double a = 1.0 / (static_cast<double>(shape.c_in) * shape.side() * shape.side());
    for (auto& v : free) v = rng.uniform(-a, a);
}

namespace {

// Position maps on the centered block, with p = (i, j) and center (m, m):
//   rotp: where a value lands after one CCW quarter turn of the block
//   refp: point reflection about DC (the Hermitian partner)
struct Pos {
    int i, j;
};
inline Pos rotp(Pos p, int m) { return {2 * m - p.j, p.i}; }
inline Pos refp(Pos p, int m) { return {2 * m - p.i, 2 * m - p.j}; }

inline std::size_t idx(Pos p, int k) { return static_cast<std::size_t>(p.i) * k + p.j; }

// Enumerate the owned (free-parameter) slots of one filter in a fixed order,
// calling fn(pos, is_dc). Complex slots consume two consecutive reals, the DC
// slot one.
template <typename Fn>
void for_owned_slots(const KernelShape& s, Fn&& fn) {
    const int m = s.m, k = s.side();
    switch (s.mode) {
    case KernelMode::Dense:
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) fn(Pos{i, j}, false);
        break;
    case KernelMode::SingleRotation:
        // rows above center, then the left half of the center row, then DC
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) fn(Pos{i, j}, false);
        for (int j = 0; j < m; ++j) fn(Pos{m, j}, false);
        fn(Pos{m, m}, true);
        break;
    case KernelMode::MultipleRotation:
        // quadrant i<m, j<m plus the north arm (i<m, j==m), then DC
        for (int i = 0; i < m; ++i)
            for (int j = 0; j <= m; ++j) fn(Pos{i, j}, false);
        fn(Pos{m, m}, true);
        break;
    }
}

} // namespace

MaterializedKernel materialize(const KernelShape& shape, std::span<const double> free) {
    if (free.size() != shape.free_count())
        throw ShapeMismatch("materialize: free vector has " + std::to_string(free.size()) +
                            " entries, expected " + std::to_string(shape.free_count()));
    MaterializedKernel out(shape.c_in, shape.c_out, shape.d_g, shape.m);
    const int k = shape.side(), m = shape.m;
    const std::size_t per_filter = shape.filter_free_count();

    std::size_t filter = 0;
    for (int ci = 0; ci < shape.c_in; ++ci)
        for (int co = 0; co < shape.c_out; ++co)
            for (int g = 0; g < shape.d_g; ++g, ++filter) {
                const double* f = free.data() + filter * per_filter;
                cdouble* blk = out.block(ci, co, g);
                std::size_t off = 0;
                for_owned_slots(shape, [&](Pos p, bool is_dc) {
                    if (is_dc) {
                        blk[idx(p, k)] = cdouble(f[off], 0.0);
                        off += 1;
                        return;
                    }
                    const cdouble v(f[off], f[off + 1]);
                    off += 2;
                    switch (shape.mode) {
                    case KernelMode::Dense:
                        blk[idx(p, k)] = v;
                        break;
                    case KernelMode::SingleRotation:
                        blk[idx(p, k)] = v;
                        blk[idx(refp(p, m), k)] = std::conj(v);
                        break;
                    case KernelMode::MultipleRotation: {
                        const Pos r = rotp(p, m);
                        blk[idx(p, k)] = v;
                        blk[idx(r, k)] = v;
                        blk[idx(refp(p, m), k)] = std::conj(v);
                        blk[idx(refp(r, m), k)] = std::conj(v);
                        break;
                    }
                    }
                });
            }
    return out;
}

MaterializedKernel materialize(const KernelParams& params) {
    return materialize(params.shape, params.free);
}

void materialize_backward(const KernelShape& shape, const MaterializedKernel& dK,
                          std::span<double> grad_free) {
    if (grad_free.size() != shape.free_count())
        throw ShapeMismatch("materialize_backward: gradient vector size mismatch");
    if (dK.c_in != shape.c_in || dK.c_out != shape.c_out || dK.d_g != shape.d_g ||
        dK.m != shape.m)
        throw ShapeMismatch("materialize_backward: cotangent shape mismatch");
    const int k = shape.side(), m = shape.m;
    const std::size_t per_filter = shape.filter_free_count();

    std::size_t filter = 0;
    for (int ci = 0; ci < shape.c_in; ++ci)
        for (int co = 0; co < shape.c_out; ++co)
            for (int g = 0; g < shape.d_g; ++g, ++filter) {
                double* gf = grad_free.data() + filter * per_filter;
                const cdouble* blk = dK.block(ci, co, g);
                std::size_t off = 0;
                for_owned_slots(shape, [&](Pos p, bool is_dc) {
                    if (is_dc) {
                        gf[off] += blk[idx(p, k)].real();
                        off += 1;
                        return;
                    }
                    cdouble gsum = blk[idx(p, k)];
                    switch (shape.mode) {
                    case KernelMode::Dense:
                        break;
                    case KernelMode::SingleRotation:
                        gsum += std::conj(blk[idx(refp(p, m), k)]);
                        break;
                    case KernelMode::MultipleRotation: {
                        const Pos r = rotp(p, m);
                        gsum += blk[idx(r, k)];
                        gsum += std::conj(blk[idx(refp(p, m), k)]);
                        gsum += std::conj(blk[idx(refp(r, m), k)]);
                        break;
                    }
                    }
                    gf[off] += gsum.real();
                    gf[off + 1] += gsum.imag();
                    off += 2;
                });
            }
}

MaterializedKernel group_action_shift(const MaterializedKernel& K, int s) {
    if (K.d_g != 4)
        throw NoGroupAxis("group_action_shift: kernel has no group axis (d_g = " +
                          std::to_string(K.d_g) + ")");
    s = ((s % 4) + 4) % 4;
    MaterializedKernel out(K.c_in, K.c_out, K.d_g, K.m);
    const int k = K.side();
    for (int ci = 0; ci < K.c_in; ++ci)
        for (int co = 0; co < K.c_out; ++co)
            for (int g = 0; g < 4; ++g) {
                const cdouble* src = K.block(ci, co, (g - s + 4) % 4);
                cdouble* dst = out.block(ci, co, g);
                if (s == 0) {
                    std::copy(src, src + static_cast<std::size_t>(k) * k, dst);
                    continue;
                }
                // apply rot90 s times: out[i][j] = in[rho^{-s}(i, j)]
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        Pos p{i, j};
                        for (int t = 0; t < s; ++t) p = Pos{p.j, k - 1 - p.i};
                        dst[static_cast<std::size_t>(i) * k + j] =
                            src[static_cast<std::size_t>(p.i) * k + p.j];
                    }
            }
    return out;
}

} // namespace pefnn
