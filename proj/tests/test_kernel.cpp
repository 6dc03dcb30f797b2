#include <doctest.h>

#include <cmath>

#include "pefnn/fft.hpp"
#include "pefnn/kernel.hpp"
#include "pefnn/rng.hpp"

using namespace pefnn;

namespace {

KernelParams random_kernel(KernelMode mode, int m, int ci = 1, int co = 1, int dg = 1,
                           std::uint64_t seed = 17) {
    KernelParams p(KernelShape{mode, m, ci, co, dg});
    Rng rng(seed);
    for (auto& v : p.free) v = rng.uniform(-1.0, 1.0);
    return p;
}

// real inner product over the materialized tensor viewed as real pairs
double inner(const MaterializedKernel& a, const MaterializedKernel& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        s += a.data[i].real() * b.data[i].real() + a.data[i].imag() * b.data[i].imag();
    return s;
}

bool hermitian_bitexact(const MaterializedKernel& K) {
    const int k = K.side(), m = K.m;
    for (int ci = 0; ci < K.c_in; ++ci)
        for (int co = 0; co < K.c_out; ++co)
            for (int g = 0; g < K.d_g; ++g) {
                const cdouble* blk = K.block(ci, co, g);
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const cdouble v = blk[i * k + j];
                        const cdouble w = blk[(2 * m - i) * k + (2 * m - j)];
                        if (v != std::conj(w)) return false;
                    }
            }
    return true;
}

} // namespace

TEST_SUITE("kernel") {

TEST_CASE("free-parameter counts follow the 100/50/~25 percent formulas") {
    // m=1: Dense 18, SingleRotation 9, MultipleRotation 5
    CHECK(KernelShape{KernelMode::Dense, 1, 1, 1, 1}.free_count() == 18);
    CHECK(KernelShape{KernelMode::SingleRotation, 1, 1, 1, 1}.free_count() == 9);
    CHECK(KernelShape{KernelMode::MultipleRotation, 1, 1, 1, 1}.free_count() == 5);

    for (int m : {1, 2, 3, 12}) {
        const std::size_t k = 2 * m + 1;
        const KernelShape dense{KernelMode::Dense, m, 3, 2, 4};
        const KernelShape single{KernelMode::SingleRotation, m, 3, 2, 4};
        const KernelShape multi{KernelMode::MultipleRotation, m, 3, 2, 4};
        CHECK(dense.free_count() == 3 * 2 * 4 * 2 * k * k);
        CHECK(single.free_count() == 3 * 2 * 4 * k * k);
        CHECK(single.free_count() * 2 == dense.free_count());
        CHECK(multi.free_count() ==
              3 * 2 * 4 * (2 * static_cast<std::size_t>(m) * (m + 1) + 1));
        // ~25% of dense, exact only asymptotically because of the center cross
        const double ratio = static_cast<double>(multi.free_count()) / dense.free_count();
        CHECK(ratio > 0.24);
        CHECK(ratio < 0.29);
    }
}

TEST_CASE("zero free parameters materialize to the zero kernel") {
    for (auto mode : {KernelMode::Dense, KernelMode::SingleRotation,
                      KernelMode::MultipleRotation}) {
        KernelParams p(KernelShape{mode, 2, 2, 2, 1});
        MaterializedKernel K = materialize(p);
        for (auto v : K.data) CHECK(v == cdouble(0.0, 0.0));
    }
}

TEST_CASE("single and multiple rotation kernels are Hermitian bit-exactly") {
    for (auto mode : {KernelMode::SingleRotation, KernelMode::MultipleRotation})
        for (int m : {1, 2, 3}) {
            KernelParams p = random_kernel(mode, m, 2, 2, 1, 100 + m);
            CHECK(hermitian_bitexact(materialize(p)));
        }
}

TEST_CASE("Hermitian kernels have real spatial form") {
    for (auto mode : {KernelMode::SingleRotation, KernelMode::MultipleRotation}) {
        KernelParams p = random_kernel(mode, 3, 1, 1, 1, 7);
        MaterializedKernel K = materialize(p);
        SpectralBlock blk(1, 1, 3);
        std::copy(K.data.begin(), K.data.end(), blk.data.begin());
        ComplexField padded = ifftshift(pad_modes(blk, 16, 16));
        ComplexField spatial = ifft2_complex(padded);
        double max_imag = 0.0;
        for (auto v : spatial.data) max_imag = std::max(max_imag, std::abs(v.imag()));
        CHECK(max_imag < 1e-12);
    }
}

TEST_CASE("multiple rotation kernel magnitude is invariant under 90-degree rotation") {
    KernelParams p = random_kernel(KernelMode::MultipleRotation, 3, 2, 1, 1, 23);
    MaterializedKernel K = materialize(p);
    const int k = K.side();
    for (int ci = 0; ci < K.c_in; ++ci) {
        const cdouble* blk = K.block(ci, 0, 0);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                // value at (i,j) rotates to (k-1-j, i)
                const double a = std::abs(blk[i * k + j]);
                const double b = std::abs(blk[(k - 1 - j) * k + i]);
                CHECK(std::abs(a - b) <= 1e-14);
            }
    }
}

TEST_CASE("dense backward is the cotangent reinterpreted as real pairs") {
    const KernelShape shape{KernelMode::Dense, 1, 1, 1, 1};
    MaterializedKernel dK(1, 1, 1, 1);
    Rng rng(3);
    for (auto& v : dK.data) v = cdouble(rng.uniform(-1, 1), rng.uniform(-1, 1));
    std::vector<double> grad(shape.free_count(), 0.0);
    materialize_backward(shape, dK, grad);
    for (std::size_t i = 0; i < dK.data.size(); ++i) {
        CHECK(grad[2 * i] == dK.data[i].real());
        CHECK(grad[2 * i + 1] == dK.data[i].imag());
    }
}

TEST_CASE("zero cotangent gives zero gradient") {
    const KernelShape shape{KernelMode::MultipleRotation, 2, 2, 1, 1};
    MaterializedKernel dK(2, 1, 1, 2);
    std::vector<double> grad(shape.free_count(), 0.0);
    materialize_backward(shape, dK, grad);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("single-rotation gradient pairs a bin with its conjugated mirror") {
    const int m = 2, k = 5;
    const KernelShape shape{KernelMode::SingleRotation, m, 1, 1, 1};
    MaterializedKernel dK(1, 1, 1, m);
    // cotangent at owned bin (0,1) and its mirror (4,3)
    const cdouble d1(0.3, -0.7), d2(-0.2, 0.9);
    dK.block(0, 0, 0)[0 * k + 1] = d1;
    dK.block(0, 0, 0)[4 * k + 3] = d2;
    std::vector<double> grad(shape.free_count(), 0.0);
    materialize_backward(shape, dK, grad);
    // owned slots enumerate row-major; (0,1) is the second owned slot
    const cdouble expected = d1 + std::conj(d2);
    CHECK(grad[2] == doctest::Approx(expected.real()));
    CHECK(grad[3] == doctest::Approx(expected.imag()));
    double other = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (i != 2 && i != 3) other += std::abs(grad[i]);
    CHECK(other == 0.0);
}

TEST_CASE("materialize adjoint matches the forward to finite-difference accuracy") {
    for (auto mode : {KernelMode::Dense, KernelMode::SingleRotation,
                      KernelMode::MultipleRotation}) {
        KernelParams p = random_kernel(mode, 2, 2, 2, 1, 41);
        Rng rng(97);
        std::vector<double> v(p.free.size());
        for (auto& x : v) x = rng.uniform(-1, 1);
        MaterializedKernel dK = materialize(p); // reuse for shape
        for (auto& x : dK.data) x = cdouble(rng.uniform(-1, 1), rng.uniform(-1, 1));

        const double eps = 1e-6;
        KernelParams pp = p;
        for (std::size_t i = 0; i < v.size(); ++i) pp.free[i] += eps * v[i];
        const double lhs = (inner(materialize(pp), dK) - inner(materialize(p), dK)) / eps;

        std::vector<double> grad(p.free.size(), 0.0);
        materialize_backward(p.shape, dK, grad);
        double rhs = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) rhs += v[i] * grad[i];
        CHECK(std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)) < 1e-6);
    }
}

TEST_CASE("group action shift is an order-4 permutation") {
    KernelParams p = random_kernel(KernelMode::Dense, 2, 2, 2, 4, 13);
    MaterializedKernel K = materialize(p);

    MaterializedKernel s0 = group_action_shift(K, 0);
    for (std::size_t i = 0; i < K.data.size(); ++i) CHECK(s0.data[i] == K.data[i]);

    MaterializedKernel s4 = group_action_shift(K, 4);
    for (std::size_t i = 0; i < K.data.size(); ++i) CHECK(s4.data[i] == K.data[i]);

    MaterializedKernel r = K;
    for (int t = 0; t < 4; ++t) r = group_action_shift(r, 1);
    for (std::size_t i = 0; i < K.data.size(); ++i) CHECK(r.data[i] == K.data[i]);

    // one shift equals rot90 of the cyclically shifted group blocks
    MaterializedKernel s1 = group_action_shift(K, 1);
    for (int g = 0; g < 4; ++g) {
        SpectralBlock src(1, 1, K.m), dst(1, 1, K.m);
        std::copy(K.block(0, 1, (g + 3) % 4), K.block(0, 1, (g + 3) % 4) + 25,
                  src.data.begin());
        std::copy(s1.block(0, 1, g), s1.block(0, 1, g) + 25, dst.data.begin());
        SpectralBlock rot = rot90(src, 1);
        for (std::size_t i = 0; i < rot.data.size(); ++i) CHECK(dst.data[i] == rot.data[i]);
    }
}

TEST_CASE("group action shift requires a group axis") {
    KernelParams p = random_kernel(KernelMode::Dense, 1, 1, 1, 1, 2);
    MaterializedKernel K = materialize(p);
    CHECK_THROWS_AS(group_action_shift(K, 1), NoGroupAxis);
}

TEST_CASE("materialize validates the free vector length") {
    KernelShape shape{KernelMode::Dense, 1, 1, 1, 1};
    std::vector<double> bad(shape.free_count() + 1, 0.0);
    CHECK_THROWS_AS(materialize(shape, bad), ShapeMismatch);
}

} // TEST_SUITE
