#include "pefnn/field.hpp"

#include <cmath>

namespace pefnn {

namespace {

// One CCW quarter turn of a square N x N slice: out[i][j] = in[j][N-1-i].
template <typename T>
void rot90_slice(const T* in, T* out, int n) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out[i * n + j] = in[j * n + (n - 1 - i)];
}

template <typename FieldT>
FieldT rot90_impl(const FieldT& f, int s) {
    if (f.h != f.w)
        throw ShapeMismatch("rot90: slices must be square, got " +
                            std::to_string(f.h) + "x" + std::to_string(f.w));
    s = ((s % 4) + 4) % 4;
    FieldT out = f;
    if (s == 0) return out;
    FieldT tmp = f;
    for (int r = 0; r < s; ++r) {
        for (int bi = 0; bi < f.b; ++bi)
            for (int ci = 0; ci < f.c; ++ci)
                rot90_slice(tmp.slice(bi, ci), out.slice(bi, ci), f.h);
        if (r + 1 < s) tmp = out;
    }
    return out;
}

} // namespace

Field rot90(const Field& f, int s) { return rot90_impl(f, s); }

ComplexField rot90(const ComplexField& f, int s) { return rot90_impl(f, s); }

SpectralBlock rot90(const SpectralBlock& blk, int s) {
    s = ((s % 4) + 4) % 4;
    SpectralBlock out = blk;
    if (s == 0) return out;
    const int n = blk.side();
    SpectralBlock tmp = blk;
    for (int r = 0; r < s; ++r) {
        for (int bi = 0; bi < blk.b; ++bi)
            for (int ci = 0; ci < blk.c; ++ci)
                rot90_slice(tmp.slice(bi, ci), out.slice(bi, ci), n);
        if (r + 1 < s) tmp = out;
    }
    return out;
}

Field shift2(const Field& f, int gy, int gx) {
    Field out(f.b, f.c, f.h, f.w, f.dx, f.dy);
    const int h = f.h, w = f.w;
    gy = ((gy % h) + h) % h;
    gx = ((gx % w) + w) % w;
    for (int bi = 0; bi < f.b; ++bi) {
        for (int ci = 0; ci < f.c; ++ci) {
            const double* src = f.slice(bi, ci);
            double* dst = out.slice(bi, ci);
            for (int y = 0; y < h; ++y) {
                const int ys = (y - gy + h) % h;
                for (int x = 0; x < w; ++x) {
                    const int xs = (x - gx + w) % w;
                    dst[y * w + x] = src[ys * w + xs];
                }
            }
        }
    }
    return out;
}

bool all_finite(const Field& f) {
    for (double v : f.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_finite(const Field& f, const char* what) {
    if (!all_finite(f))
        throw NonFinite(std::string(what) + ": non-finite value encountered");
}

} // namespace pefnn
