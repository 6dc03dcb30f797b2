#pragma once

#include "pefnn/field.hpp"

namespace pefnn {

/// Unnormalized forward 2D DFT of every (b, c) slice.
ComplexField fft2(const Field& f);

/// Inverse 2D DFT with 1/(H*W) normalization. The result of inverting a
/// Hermitian spectrum is real; if the imaginary residue reaches 1e-9 the
/// spectrum was not Hermitian and ImaginaryResidue is thrown.
Field ifft2(const ComplexField& F);

/// Complex-to-complex transforms without realness assumptions (solver and
/// test plumbing; the public ops above are built on the same plans).
ComplexField fft2_complex(const ComplexField& f);
ComplexField ifft2_complex(const ComplexField& F);

/// Move the DC bin to the center (and back). Exact index permutations,
/// mutual inverses for even and odd sizes.
ComplexField fftshift(const ComplexField& F);
ComplexField ifftshift(const ComplexField& F);

/// Extract the centered (2m+1) x (2m+1) block of a DC-centered spectrum.
/// Throws ModeOverflow when 2m+1 > min(H, W).
SpectralBlock crop_modes(const ComplexField& shifted, int m);

/// Embed a block into a larger DC-centered spectrum, zero elsewhere.
/// crop_modes(pad_modes(B, H, W), m) == B bit-exactly; applying the same
/// block at larger H, W is the zero-shot super-resolution mechanism.
ComplexField pad_modes(const SpectralBlock& block, int H, int W);

namespace fftcore {

/// Reusable per-thread scratch for the slice-level kernels below.
struct Workspace {
    std::vector<cdouble> a, b, c;
};
Workspace& tls_workspace();

/// Fused crop_modes(fftshift(fft2(slice))): writes the centered (2m+1)^2
/// block of the unnormalized spectrum. Identical arithmetic to the public
/// composition, skipping the never-used high modes.
void fft2_block(const double* in, cdouble* block, int h, int w, int m, Workspace& ws);

/// Fused Re(ifft2(ifftshift(pad_modes(block)))), 1/(H*W) normalized.
/// The real-part extraction is what makes Dense-mode kernels usable; its
/// adjoint is fft2_block scaled by 1/(H*W).
void block_ifft2_real(const cdouble* block, double* out, int h, int w, int m, Workspace& ws);

/// In-place 1D transforms along both axes of one h x w complex slice,
/// sign -1 forward / +1 inverse (unnormalized).
void dft2d(cdouble* data, int h, int w, int sign, Workspace& ws);

} // namespace fftcore

} // namespace pefnn
