#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "pefnn/errors.hpp"

namespace pefnn {

using cdouble = std::complex<double>;

/// Dense real-valued batch x channel x H x W array on a uniform grid,
/// row-major with x fastest. Holds the PDE state and all latent features.
struct Field {
    int b = 0, c = 0, h = 0, w = 0;
    double dx = 1.0, dy = 1.0;
    std::vector<double> data;

    Field() = default;
    Field(int b_, int c_, int h_, int w_, double dx_ = 1.0, double dy_ = 1.0)
        : b(b_), c(c_), h(h_), w(w_), dx(dx_), dy(dy_),
          data(static_cast<std::size_t>(b_) * c_ * h_ * w_, 0.0) {}

    double& at(int bi, int ci, int y, int x) {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + y) * w + x];
    }
    double at(int bi, int ci, int y, int x) const {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + y) * w + x];
    }

    /// Pointer to the start of one (b, c) slice of h*w values.
    double* slice(int bi, int ci) {
        return data.data() + (static_cast<std::size_t>(bi) * c + ci) * h * w;
    }
    const double* slice(int bi, int ci) const {
        return data.data() + (static_cast<std::size_t>(bi) * c + ci) * h * w;
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Field& o) const {
        return b == o.b && c == o.c && h == o.h && w == o.w;
    }
};

/// Complex companion of Field (same layout); holds 2D DFT spectra.
struct ComplexField {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<cdouble> data;

    ComplexField() = default;
    ComplexField(int b_, int c_, int h_, int w_)
        : b(b_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(b_) * c_ * h_ * w_, cdouble{0.0, 0.0}) {}

    cdouble& at(int bi, int ci, int y, int x) {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + y) * w + x];
    }
    cdouble at(int bi, int ci, int y, int x) const {
        return data[((static_cast<std::size_t>(bi) * c + ci) * h + y) * w + x];
    }

    cdouble* slice(int bi, int ci) {
        return data.data() + (static_cast<std::size_t>(bi) * c + ci) * h * w;
    }
    const cdouble* slice(int bi, int ci) const {
        return data.data() + (static_cast<std::size_t>(bi) * c + ci) * h * w;
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const ComplexField& o) const {
        return b == o.b && c == o.c && h == o.h && w == o.w;
    }
};

/// Centered (2m+1) x (2m+1) low-frequency block of a spectrum, one block per
/// (b, c). The side length is odd so the DC bin sits exactly at the center
/// and 90-degree rotation about it is an index permutation.
struct SpectralBlock {
    int b = 0, c = 0, m = 0;
    std::vector<cdouble> data;

    SpectralBlock() = default;
    SpectralBlock(int b_, int c_, int m_)
        : b(b_), c(c_), m(m_),
          data(static_cast<std::size_t>(b_) * c_ * side() * side(), cdouble{0.0, 0.0}) {}

    int side() const { return 2 * m + 1; }

    cdouble& at(int bi, int ci, int i, int j) {
        const int k = side();
        return data[((static_cast<std::size_t>(bi) * c + ci) * k + i) * k + j];
    }
    cdouble at(int bi, int ci, int i, int j) const {
        const int k = side();
        return data[((static_cast<std::size_t>(bi) * c + ci) * k + i) * k + j];
    }

    cdouble* slice(int bi, int ci) {
        return data.data() + (static_cast<std::size_t>(bi) * c + ci) * side() * side();
    }
    const cdouble* slice(int bi, int ci) const {
        return data.data() + (static_cast<std::size_t>(bi) * c + ci) * side() * side();
    }
};

/// Rotate every (b, c) slice by s * 90 degrees counterclockwise about the
/// grid center: rot90(A)[i][j] = A[j][N-1-i]. Slices must be square.
Field rot90(const Field& f, int s = 1);
ComplexField rot90(const ComplexField& f, int s = 1);
SpectralBlock rot90(const SpectralBlock& blk, int s = 1);

/// Cyclic shift: result[y][x] = f[(y - gy) mod H][(x - gx) mod W], i.e. the
/// content moves by (+gy, +gx).
Field shift2(const Field& f, int gy, int gx);

/// Throws NonFinite when any entry is NaN/Inf; `what` names the offender.
void require_finite(const Field& f, const char* what);

bool all_finite(const Field& f);

} // namespace pefnn
