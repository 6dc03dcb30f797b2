#pragma once

#include <span>
#include <vector>

#include "pefnn/field.hpp"
#include "pefnn/rng.hpp"

namespace pefnn {

/// Symmetry tying applied to a frequency-domain kernel block.
///   Dense            - every complex entry is free.
///   SingleRotation   - one half-plane free, the other half is its Hermitian
///                      completion (conjugate point reflection about DC).
///   MultipleRotation - one quadrant free; one quadrant is its 90-degree
///                      rotation; the remaining half is the Hermitian
///                      completion of those two. |K| is 90-degree invariant.
enum class KernelMode { Dense, SingleRotation, MultipleRotation };

const char* kernel_mode_name(KernelMode mode);
KernelMode kernel_mode_from_name(const std::string& name);

/// Static description of one spectral kernel: symmetry mode, mode radius m,
/// channel counts and group size (1 = no group axis, 4 = p4).
struct KernelShape {
    KernelMode mode = KernelMode::SingleRotation;
    int m = 1;
    int c_in = 1;
    int c_out = 1;
    int d_g = 1;

    int side() const { return 2 * m + 1; }
    /// Real degrees of freedom per (c_in, c_out, g) filter.
    std::size_t filter_free_count() const;
    std::size_t free_count() const {
        return filter_free_count() * static_cast<std::size_t>(c_in) * c_out * d_g;
    }
};

/// Trainable kernel: shape plus the flat free-parameter vector.
struct KernelParams {
    KernelShape shape;
    std::vector<double> free;

    explicit KernelParams(const KernelShape& s) : shape(s), free(s.free_count(), 0.0) {}

    /// Uniform(-a, a) with a = 1 / (c_in * (2m+1)^2).
    void init(Rng& rng);
};

/// Fully expanded complex kernel, DC-centered, layout [c_in][c_out][g][i][j].
struct MaterializedKernel {
    int c_in = 0, c_out = 0, d_g = 1, m = 0;
    std::vector<cdouble> data;

    MaterializedKernel() = default;
    MaterializedKernel(int ci, int co, int g, int m_)
        : c_in(ci), c_out(co), d_g(g), m(m_),
          data(static_cast<std::size_t>(ci) * co * g * side() * side(), cdouble{0, 0}) {}

    int side() const { return 2 * m + 1; }

    cdouble* block(int ci, int co, int g) {
        return data.data() +
               ((static_cast<std::size_t>(ci) * c_out + co) * d_g + g) * side() * side();
    }
    const cdouble* block(int ci, int co, int g) const {
        return data.data() +
               ((static_cast<std::size_t>(ci) * c_out + co) * d_g + g) * side() * side();
    }
};

/// Expand free parameters into the full kernel. Single/Multiple results
/// satisfy K[-k] == conj(K[k]) bit-exactly by construction.
MaterializedKernel materialize(const KernelShape& shape, std::span<const double> free);
MaterializedKernel materialize(const KernelParams& params);

/// Adjoint of materialize: accumulate the cotangent of every materialized
/// slot into its source free slot (conjugating where the forward conjugated).
void materialize_backward(const KernelShape& shape, const MaterializedKernel& dK,
                          std::span<double> grad_free);

/// Cyclic shift of the group axis by s with each spatial block rotated by
/// s * 90 degrees: out[..., g] = rot90(in[..., (g - s) mod 4], s).
/// Applying with s = 4 is the identity. Requires d_g = 4.
MaterializedKernel group_action_shift(const MaterializedKernel& K, int s);

} // namespace pefnn
