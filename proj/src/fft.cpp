#include "pefnn/fft.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace pefnn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// 1D mixed-radix Stockham plan. Data layout is [position][lane] with `lanes`
// contiguous interleaved sequences, so every butterfly inner loop is unit
// stride. Lengths whose prime factors all lie in {2,3,5,...,31} run as
// radix stages; anything with a larger prime factor runs through Bluestein's
// chirp-z algorithm on a power-of-two plan.
// ---------------------------------------------------------------------------

struct Stage {
    int radix;
    std::vector<cdouble> tw; // tw[p*(radix-1) + (u-1)] = w^(p*u), w = exp(sign*2*pi*i/n_cur)
};

struct Fft1d {
    int n = 1;
    int sign = -1;
    std::vector<Stage> stages;

    // Bluestein path (empty stages when active)
    bool bluestein = false;
    int blu_m = 0;                        // padded power-of-two length
    std::vector<cdouble> chirp;           // c_j = exp(sign*i*pi*j^2/n)
    std::vector<cdouble> chirp_kernel_ft; // FFT_m of conj-chirp kernel
    const Fft1d* blu_fwd = nullptr;
    const Fft1d* blu_inv = nullptr;

    void execute(cdouble* data, int lanes, fftcore::Workspace& ws) const;

private:
    void execute_radix(cdouble* data, cdouble* scratch, int lanes) const;
    void execute_bluestein(cdouble* data, int lanes, fftcore::Workspace& ws) const;
};

std::vector<int> factorize(int n) {
    std::vector<int> f;
    while (n % 4 == 0 && n > 4) { f.push_back(4); n /= 4; }
    while (n % 2 == 0) { f.push_back(2); n /= 2; }
    for (int p : {3, 5, 7, 11, 13, 17, 19, 23, 29, 31}) {
        while (n % p == 0) { f.push_back(p); n /= p; }
    }
    if (n > 1) f.clear(); // leftover prime > 31: signal Bluestein
    return f;
}

const Fft1d* get_plan(int n, int sign);

Fft1d* build_plan(int n, int sign) {
    auto plan = new Fft1d;
    plan->n = n;
    plan->sign = sign;
    if (n == 1) return plan;

    std::vector<int> factors = factorize(n);
    if (!factors.empty()) {
        int ncur = n;
        for (int r : factors) {
            Stage st;
            st.radix = r;
            const int m = ncur / r;
            st.tw.resize(static_cast<std::size_t>(m) * (r - 1));
            for (int p = 0; p < m; ++p)
                for (int u = 1; u < r; ++u) {
                    const long long e = static_cast<long long>(p) * u % ncur;
                    const double ang = sign * kTwoPi * static_cast<double>(e) / ncur;
                    st.tw[static_cast<std::size_t>(p) * (r - 1) + (u - 1)] =
                        cdouble(std::cos(ang), std::sin(ang));
                }
            plan->stages.push_back(std::move(st));
            ncur = m;
        }
        return plan;
    }

    // Bluestein: X_k = c_k * (x.c (circ*) conj(c))_k with c_j = e^{sign*i*pi*j^2/n}
    plan->bluestein = true;
    int m = 1;
    while (m < 2 * n - 1) m *= 2;
    plan->blu_m = m;
    plan->chirp.resize(n);
    for (int j = 0; j < n; ++j) {
        const long long e = (static_cast<long long>(j) * j) % (2LL * n);
        const double ang = sign * std::numbers::pi * static_cast<double>(e) / n;
        plan->chirp[j] = cdouble(std::cos(ang), std::sin(ang));
    }
    plan->blu_fwd = get_plan(m, -1);
    plan->blu_inv = get_plan(m, +1);
    std::vector<cdouble> kern(m, cdouble(0.0, 0.0));
    kern[0] = std::conj(plan->chirp[0]);
    for (int j = 1; j < n; ++j) {
        kern[j] = std::conj(plan->chirp[j]);
        kern[m - j] = std::conj(plan->chirp[j]);
    }
    fftcore::Workspace ws;
    plan->blu_fwd->execute(kern.data(), 1, ws);
    plan->chirp_kernel_ft = std::move(kern);
    return plan;
}

std::recursive_mutex plan_mutex;
std::map<std::pair<int, int>, std::unique_ptr<Fft1d>>& plan_cache() {
    static auto* cache = new std::map<std::pair<int, int>, std::unique_ptr<Fft1d>>;
    return *cache;
}

// Plans are built once per (length, sign) and never evicted. The recursive
// mutex covers Bluestein construction, which looks up its inner pow2 plans.
const Fft1d* get_plan(int n, int sign) {
    std::lock_guard<std::recursive_mutex> lock(plan_mutex);
    auto& cache = plan_cache();
    auto& slot = cache[{n, sign}];
    if (!slot) slot.reset(build_plan(n, sign));
    return slot.get();
}

void Fft1d::execute_radix(cdouble* data, cdouble* scratch, int lanes) const {
    cdouble* src = data;
    cdouble* dst = scratch;
    int ncur = n;
    std::size_t s = static_cast<std::size_t>(lanes);

    for (const Stage& st : stages) {
        const int r = st.radix;
        const int m = ncur / r;
        const cdouble* tw = st.tw.data();

        switch (r) {
        case 2:
            for (int p = 0; p < m; ++p) {
                const cdouble w1 = tw[p];
                const cdouble* a0 = src + s * p;
                const cdouble* a1 = src + s * (p + m);
                cdouble* d0 = dst + s * (2 * p);
                cdouble* d1 = dst + s * (2 * p + 1);
                if (p == 0) {
                    for (std::size_t q = 0; q < s; ++q) {
                        const cdouble x0 = a0[q], x1 = a1[q];
                        d0[q] = x0 + x1;
                        d1[q] = x0 - x1;
                    }
                } else {
                    for (std::size_t q = 0; q < s; ++q) {
                        const cdouble x0 = a0[q], x1 = a1[q];
                        d0[q] = x0 + x1;
                        d1[q] = (x0 - x1) * w1;
                    }
                }
            }
            break;
        case 4: {
            const double sg = static_cast<double>(sign);
            for (int p = 0; p < m; ++p) {
                const cdouble w1 = tw[p * 3 + 0];
                const cdouble w2 = tw[p * 3 + 1];
                const cdouble w3 = tw[p * 3 + 2];
                const cdouble* a0 = src + s * p;
                const cdouble* a1 = src + s * (p + m);
                const cdouble* a2 = src + s * (p + 2 * m);
                const cdouble* a3 = src + s * (p + 3 * m);
                cdouble* d0 = dst + s * (4 * p);
                cdouble* d1 = dst + s * (4 * p + 1);
                cdouble* d2 = dst + s * (4 * p + 2);
                cdouble* d3 = dst + s * (4 * p + 3);
                for (std::size_t q = 0; q < s; ++q) {
                    const cdouble x0 = a0[q], x1 = a1[q], x2 = a2[q], x3 = a3[q];
                    const cdouble t0 = x0 + x2, t1 = x0 - x2;
                    const cdouble t2 = x1 + x3, t3 = x1 - x3;
                    const cdouble it3(-sg * t3.imag(), sg * t3.real());
                    const cdouble b0 = t0 + t2;
                    const cdouble b1 = t1 + it3;
                    const cdouble b2 = t0 - t2;
                    const cdouble b3 = t1 - it3;
                    if (p == 0) {
                        d0[q] = b0; d1[q] = b1; d2[q] = b2; d3[q] = b3;
                    } else {
                        d0[q] = b0;
                        d1[q] = b1 * w1;
                        d2[q] = b2 * w2;
                        d3[q] = b3 * w3;
                    }
                }
            }
            break;
        }
        case 3: {
            const double s3 = sign * 0.86602540378443864676372317075294; // sqrt(3)/2
            for (int p = 0; p < m; ++p) {
                const cdouble w1 = tw[p * 2 + 0];
                const cdouble w2 = tw[p * 2 + 1];
                const cdouble* a0 = src + s * p;
                const cdouble* a1 = src + s * (p + m);
                const cdouble* a2 = src + s * (p + 2 * m);
                cdouble* d0 = dst + s * (3 * p);
                cdouble* d1 = dst + s * (3 * p + 1);
                cdouble* d2 = dst + s * (3 * p + 2);
                for (std::size_t q = 0; q < s; ++q) {
                    const cdouble x0 = a0[q], x1 = a1[q], x2 = a2[q];
                    const cdouble t = x1 + x2;
                    const cdouble u = x0 - 0.5 * t;
                    const cdouble v = s3 * (x1 - x2);
                    const cdouble iv(-v.imag(), v.real());
                    d0[q] = x0 + t;
                    if (p == 0) {
                        d1[q] = u + iv;
                        d2[q] = u - iv;
                    } else {
                        d1[q] = (u + iv) * w1;
                        d2[q] = (u - iv) * w2;
                    }
                }
            }
            break;
        }
        case 5: {
            const double c1 = 0.30901699437494742410229341718282;  // cos(2*pi/5)
            const double c2 = -0.80901699437494742410229341718282; // cos(4*pi/5)
            const double s1 = sign * 0.95105651629515357211643933338398; // sin(2*pi/5)
            const double s2 = sign * 0.58778525229247312916870595463907; // sin(4*pi/5)
            for (int p = 0; p < m; ++p) {
                const cdouble* tws = tw + static_cast<std::size_t>(p) * 4;
                const cdouble* a0 = src + s * p;
                const cdouble* a1 = src + s * (p + m);
                const cdouble* a2 = src + s * (p + 2 * m);
                const cdouble* a3 = src + s * (p + 3 * m);
                const cdouble* a4 = src + s * (p + 4 * m);
                cdouble* d = dst + s * (5 * p);
                for (std::size_t q = 0; q < s; ++q) {
                    const cdouble x0 = a0[q];
                    const cdouble t1 = a1[q] + a4[q], t3 = a1[q] - a4[q];
                    const cdouble t2 = a2[q] + a3[q], t4 = a2[q] - a3[q];
                    const cdouble m1 = x0 + c1 * t1 + c2 * t2;
                    const cdouble m2 = x0 + c2 * t1 + c1 * t2;
                    const cdouble w1 = s1 * t3 + s2 * t4;
                    const cdouble w2 = s2 * t3 - s1 * t4;
                    const cdouble iw1(-w1.imag(), w1.real());
                    const cdouble iw2(-w2.imag(), w2.real());
                    d[q] = x0 + t1 + t2;
                    if (p == 0) {
                        d[s + q] = m1 + iw1;
                        d[2 * s + q] = m2 + iw2;
                        d[3 * s + q] = m2 - iw2;
                        d[4 * s + q] = m1 - iw1;
                    } else {
                        d[s + q] = (m1 + iw1) * tws[0];
                        d[2 * s + q] = (m2 + iw2) * tws[1];
                        d[3 * s + q] = (m2 - iw2) * tws[2];
                        d[4 * s + q] = (m1 - iw1) * tws[3];
                    }
                }
            }
            break;
        }
        default: {
            // generic odd prime radix, O(r^2) butterfly
            const int r0 = r;
            std::vector<cdouble> wr(r0);
            for (int j = 0; j < r0; ++j) {
                const double ang = sign * kTwoPi * j / r0;
                wr[j] = cdouble(std::cos(ang), std::sin(ang));
            }
            std::vector<cdouble> acc(r0);
            for (int p = 0; p < m; ++p) {
                const cdouble* tws = tw + static_cast<std::size_t>(p) * (r0 - 1);
                for (std::size_t q = 0; q < s; ++q) {
                    for (int u = 0; u < r0; ++u) {
                        cdouble sum = src[s * p + q];
                        for (int t = 1; t < r0; ++t)
                            sum += src[s * (p + static_cast<std::size_t>(t) * m) + q] *
                                   wr[(u * t) % r0];
                        acc[u] = sum;
                    }
                    dst[s * (static_cast<std::size_t>(r0) * p) + q] = acc[0];
                    for (int u = 1; u < r0; ++u)
                        dst[s * (static_cast<std::size_t>(r0) * p + u) + q] =
                            (p == 0) ? acc[u] : acc[u] * tws[u - 1];
                }
            }
            break;
        }
        }

        ncur = m;
        s *= r;
        std::swap(src, dst);
    }

    if (src != data)
        std::copy(src, src + static_cast<std::size_t>(n) * lanes, data);
}

void Fft1d::execute_bluestein(cdouble* data, int lanes, fftcore::Workspace& ws) const {
    const int m = blu_m;
    std::vector<cdouble> buf(m);
    std::vector<cdouble> lane(n);
    fftcore::Workspace inner; // separate scratch; the pow2 plans use none
    for (int q = 0; q < lanes; ++q) {
        for (int j = 0; j < n; ++j) lane[j] = data[static_cast<std::size_t>(j) * lanes + q];
        std::fill(buf.begin(), buf.end(), cdouble(0.0, 0.0));
        for (int j = 0; j < n; ++j) buf[j] = lane[j] * chirp[j];
        blu_fwd->execute(buf.data(), 1, inner);
        for (int j = 0; j < m; ++j) buf[j] *= chirp_kernel_ft[j];
        blu_inv->execute(buf.data(), 1, inner);
        const double scale = 1.0 / m;
        for (int j = 0; j < n; ++j)
            data[static_cast<std::size_t>(j) * lanes + q] = buf[j] * chirp[j] * scale;
    }
    (void)ws;
}

void Fft1d::execute(cdouble* data, int lanes, fftcore::Workspace& ws) const {
    if (n == 1) return;
    if (bluestein) {
        execute_bluestein(data, lanes, ws);
        return;
    }
    ws.c.resize(static_cast<std::size_t>(n) * lanes);
    execute_radix(data, ws.c.data(), lanes);
}

void transpose(const cdouble* in, cdouble* out, int rows, int cols) {
    constexpr int B = 16;
    for (int i0 = 0; i0 < rows; i0 += B)
        for (int j0 = 0; j0 < cols; j0 += B) {
            const int i1 = std::min(i0 + B, rows);
            const int j1 = std::min(j0 + B, cols);
            for (int i = i0; i < i1; ++i)
                for (int j = j0; j < j1; ++j)
                    out[static_cast<std::size_t>(j) * rows + i] =
                        in[static_cast<std::size_t>(i) * cols + j];
        }
}

int shift_amount(int n) { return n / 2; }

// Unshifted spectrum row/col index of centered frequency offset k in [-m, m].
inline int wrap_index(int k, int n) { return (k % n + n) % n; }

} // namespace

namespace fftcore {

Workspace& tls_workspace() {
    thread_local Workspace ws;
    return ws;
}

void dft2d(cdouble* data, int h, int w, int sign, Workspace& ws) {
    const Fft1d* px = get_plan(w, sign);
    const Fft1d* py = get_plan(h, sign);
    ws.a.resize(static_cast<std::size_t>(h) * w);
    // along x: transpose to [x][y] so lanes (y) are contiguous
    transpose(data, ws.a.data(), h, w);
    px->execute(ws.a.data(), h, ws);
    transpose(ws.a.data(), data, w, h);
    // along y: natural layout already [y][x]
    py->execute(data, w, ws);
}

void fft2_block(const double* in, cdouble* block, int h, int w, int m, Workspace& ws) {
    const int k = 2 * m + 1;
    if (k > h || k > w) throw ModeOverflow("fft2_block: 2m+1 exceeds grid");
    const Fft1d* px = get_plan(w, -1);
    const Fft1d* py = get_plan(h, -1);

    ws.a.resize(static_cast<std::size_t>(h) * w); // [x][y]
    ws.b.resize(static_cast<std::size_t>(h) * k); // [y][kx-sel]

    // widen and transpose to [x][y]
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            ws.a[static_cast<std::size_t>(x) * h + y] =
                cdouble(in[static_cast<std::size_t>(y) * w + x], 0.0);
    px->execute(ws.a.data(), h, ws);

    // keep only the k needed columns kx in [-m, m], compact layout [y][j]
    for (int j = 0; j < k; ++j) {
        const int xs = wrap_index(j - m, w);
        for (int y = 0; y < h; ++y)
            ws.b[static_cast<std::size_t>(y) * k + j] = ws.a[static_cast<std::size_t>(xs) * h + y];
    }
    py->execute(ws.b.data(), k, ws);

    for (int i = 0; i < k; ++i) {
        const int ys = wrap_index(i - m, h);
        for (int j = 0; j < k; ++j)
            block[static_cast<std::size_t>(i) * k + j] = ws.b[static_cast<std::size_t>(ys) * k + j];
    }
}

void block_ifft2_real(const cdouble* block, double* out, int h, int w, int m, Workspace& ws) {
    const int k = 2 * m + 1;
    if (k > h || k > w) throw ModeOverflow("block_ifft2_real: 2m+1 exceeds grid");
    const Fft1d* px = get_plan(w, +1);
    const Fft1d* py = get_plan(h, +1);

    ws.b.assign(static_cast<std::size_t>(h) * k, cdouble(0.0, 0.0)); // [y][kx-sel]
    for (int i = 0; i < k; ++i) {
        const int ys = wrap_index(i - m, h);
        for (int j = 0; j < k; ++j)
            ws.b[static_cast<std::size_t>(ys) * k + j] = block[static_cast<std::size_t>(i) * k + j];
    }
    py->execute(ws.b.data(), k, ws);

    // scatter the k columns into zeroed [x][y], inverse transform along x
    ws.a.assign(static_cast<std::size_t>(h) * w, cdouble(0.0, 0.0));
    for (int j = 0; j < k; ++j) {
        const int xs = wrap_index(j - m, w);
        for (int y = 0; y < h; ++y)
            ws.a[static_cast<std::size_t>(xs) * h + y] = ws.b[static_cast<std::size_t>(y) * k + j];
    }
    px->execute(ws.a.data(), h, ws);

    const double scale = 1.0 / (static_cast<double>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y) * w + x] =
                ws.a[static_cast<std::size_t>(x) * h + y].real() * scale;
}

} // namespace fftcore

ComplexField fft2_complex(const ComplexField& f) {
    ComplexField out = f;
    auto& ws = fftcore::tls_workspace();
    for (int bi = 0; bi < f.b; ++bi)
        for (int ci = 0; ci < f.c; ++ci)
            fftcore::dft2d(out.slice(bi, ci), f.h, f.w, -1, ws);
    return out;
}

ComplexField ifft2_complex(const ComplexField& F) {
    ComplexField out = F;
    auto& ws = fftcore::tls_workspace();
    const double scale = 1.0 / (static_cast<double>(F.h) * F.w);
    for (int bi = 0; bi < F.b; ++bi)
        for (int ci = 0; ci < F.c; ++ci)
            fftcore::dft2d(out.slice(bi, ci), F.h, F.w, +1, ws);
    for (auto& v : out.data) v *= scale;
    return out;
}

ComplexField fft2(const Field& f) {
    ComplexField cf(f.b, f.c, f.h, f.w);
    for (std::size_t i = 0; i < f.data.size(); ++i) cf.data[i] = cdouble(f.data[i], 0.0);
    auto& ws = fftcore::tls_workspace();
    for (int bi = 0; bi < f.b; ++bi)
        for (int ci = 0; ci < f.c; ++ci)
            fftcore::dft2d(cf.slice(bi, ci), f.h, f.w, -1, ws);
    return cf;
}

Field ifft2(const ComplexField& F) {
    ComplexField tmp = F;
    auto& ws = fftcore::tls_workspace();
    for (int bi = 0; bi < F.b; ++bi)
        for (int ci = 0; ci < F.c; ++ci)
            fftcore::dft2d(tmp.slice(bi, ci), F.h, F.w, +1, ws);
    const double scale = 1.0 / (static_cast<double>(F.h) * F.w);
    double max_imag = 0.0;
    Field out(F.b, F.c, F.h, F.w);
    for (std::size_t i = 0; i < tmp.data.size(); ++i) {
        const cdouble v = tmp.data[i] * scale;
        max_imag = std::max(max_imag, std::abs(v.imag()));
        out.data[i] = v.real();
    }
    if (max_imag >= 1e-9)
        throw ImaginaryResidue("ifft2: imaginary residue " + std::to_string(max_imag) +
                               " (spectrum is not Hermitian)");
    return out;
}

namespace {

ComplexField roll2(const ComplexField& F, int ry, int rx) {
    ComplexField out(F.b, F.c, F.h, F.w);
    const int h = F.h, w = F.w;
    for (int bi = 0; bi < F.b; ++bi)
        for (int ci = 0; ci < F.c; ++ci) {
            const cdouble* src = F.slice(bi, ci);
            cdouble* dst = out.slice(bi, ci);
            for (int y = 0; y < h; ++y) {
                const int yd = (y + ry) % h;
                for (int x = 0; x < w; ++x)
                    dst[static_cast<std::size_t>(yd) * w + (x + rx) % w] =
                        src[static_cast<std::size_t>(y) * w + x];
            }
        }
    return out;
}

} // namespace

ComplexField fftshift(const ComplexField& F) {
    return roll2(F, shift_amount(F.h), shift_amount(F.w));
}

ComplexField ifftshift(const ComplexField& F) {
    return roll2(F, F.h - shift_amount(F.h), F.w - shift_amount(F.w));
}

SpectralBlock crop_modes(const ComplexField& shifted, int m) {
    const int k = 2 * m + 1;
    if (k > shifted.h || k > shifted.w)
        throw ModeOverflow("crop_modes: 2m+1 = " + std::to_string(k) + " exceeds grid " +
                           std::to_string(shifted.h) + "x" + std::to_string(shifted.w));
    const int cy = shifted.h / 2, cx = shifted.w / 2;
    SpectralBlock blk(shifted.b, shifted.c, m);
    for (int bi = 0; bi < shifted.b; ++bi)
        for (int ci = 0; ci < shifted.c; ++ci)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                    blk.at(bi, ci, i, j) = shifted.at(bi, ci, cy - m + i, cx - m + j);
    return blk;
}

ComplexField pad_modes(const SpectralBlock& block, int H, int W) {
    const int k = block.side();
    if (k > H || k > W)
        throw ModeOverflow("pad_modes: 2m+1 = " + std::to_string(k) + " exceeds grid " +
                           std::to_string(H) + "x" + std::to_string(W));
    const int cy = H / 2, cx = W / 2;
    ComplexField out(block.b, block.c, H, W);
    for (int bi = 0; bi < block.b; ++bi)
        for (int ci = 0; ci < block.c; ++ci)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                    out.at(bi, ci, cy - block.m + i, cx - block.m + j) = block.at(bi, ci, i, j);
    return out;
}

} // namespace pefnn
