#include "pefnn/model.hpp"

#include <cmath>
#include <cstring>

#include "pefnn/fft.hpp"
#include "pefnn/rng.hpp"

namespace pefnn {

// ---------------------------------------------------------------------------
// config / params
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (d_z < 1) throw ConfigError("model: d_z must be >= 1");
    if (m < 1) throw ConfigError("model: mode radius m must be >= 1");
    if (d_g != 1 && d_g != 4) throw ConfigError("model: d_g must be 1 or 4");
    if (dt <= 0.0) throw ConfigError("model: dt must be positive");
    if (pad < 0) throw ConfigError("model: pad must be >= 0");
    if (in_channels < 1 || out_channels < 1)
        throw ConfigError("model: channel counts must be >= 1");
}

Integrator integrator_from_name(const std::string& name) {
    if (name == "euler") return Integrator::Euler;
    if (name == "rk3") return Integrator::RK3;
    throw ConfigError("unknown integrator '" + name + "' (euler|rk3)");
}

const char* integrator_name(Integrator i) {
    return i == Integrator::Euler ? "euler" : "rk3";
}

Activation activation_from_name(const std::string& name) {
    if (name == "none") return Activation::None;
    if (name == "gelu") return Activation::Gelu;
    throw ConfigError("unknown activation '" + name + "' (none|gelu)");
}

const char* activation_name(Activation a) {
    return a == Activation::None ? "none" : "gelu";
}

std::size_t ModelParams::add(const std::string& name, std::vector<int> shape) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    const std::size_t offset = values.size();
    entries_.push_back({name, offset, count, std::move(shape)});
    values.resize(offset + count, 0.0);
    return offset;
}

KernelShape ModelParams::kernel_shape() const {
    return KernelShape{config_.kernel_mode, config_.m, config_.d_z, config_.d_z,
                       config_.d_g};
}

ModelParams::ModelParams(const ModelConfig& cfg) : config_(cfg) {
    cfg.validate();
    const int dz = cfg.d_z, dg = cfg.d_g;
    offs_.p_w = add("p.weight", {dz, cfg.in_channels});
    offs_.p_b = add("p.bias", {dz});
    const KernelShape ks = kernel_shape();
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string base = "layers." + std::to_string(l) + ".";
        LayerOffsets lo;
        lo.kernel = add(base + "kernel", {static_cast<int>(ks.free_count())});
        lo.res_w = add(base + "res.weight", {dz, dz, dg});
        lo.res_b = add(base + "res.bias", {dz});
        lo.mlp1_w = add(base + "mlp1.weight", {dz, dz, dg});
        lo.mlp1_b = add(base + "mlp1.bias", {dz});
        lo.mlp2_w = add(base + "mlp2.weight", {dz, dz, dg});
        lo.mlp2_b = add(base + "mlp2.bias", {dz});
        offs_.layers.push_back(lo);
    }
    offs_.q1_w = add("q1.weight", {dz, dz});
    offs_.q1_b = add("q1.bias", {dz});
    offs_.q2_w = add("q2.weight", {cfg.out_channels, dz});
    offs_.q2_b = add("q2.bias", {cfg.out_channels});
}

std::span<double> ModelParams::at(const std::string& name) {
    for (const auto& e : entries_)
        if (e.name == name) return {values.data() + e.offset, e.count};
    throw ConfigError("unknown parameter tensor '" + name + "'");
}

std::span<const double> ModelParams::at(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return {values.data() + e.offset, e.count};
    throw ConfigError("unknown parameter tensor '" + name + "'");
}

void ModelParams::init(std::uint64_t seed) {
    Rng rng(seed);
    const KernelShape ks = kernel_shape();
    const double kernel_a =
        1.0 / (static_cast<double>(ks.c_in) * ks.side() * ks.side());
    for (const auto& e : entries_) {
        double* p = values.data() + e.offset;
        if (e.name.find(".kernel") != std::string::npos) {
            for (std::size_t i = 0; i < e.count; ++i) p[i] = rng.uniform(-kernel_a, kernel_a);
        } else if (e.name.find("bias") != std::string::npos) {
            for (std::size_t i = 0; i < e.count; ++i) p[i] = 0.0;
        } else {
            // fan-in = product of all but the leading (output) dimension
            std::size_t fan_in = 1;
            for (std::size_t d = 1; d < e.shape.size(); ++d)
                fan_in *= static_cast<std::size_t>(e.shape[d]);
            const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < e.count; ++i) p[i] = rng.uniform(-a, a);
        }
    }
}

std::size_t parameter_count(const ModelConfig& cfg) {
    return ModelParams(cfg).size();
}

KernelPack materialize_kernels(const ModelParams& params) {
    const ModelConfig& cfg = params.config();
    const KernelShape ks = params.kernel_shape();
    KernelPack pack;
    for (int l = 0; l < cfg.n_layers; ++l) {
        std::span<const double> free{
            params.values.data() + params.offsets().layers[l].kernel, ks.free_count()};
        pack.base.push_back(materialize(ks, free));
        if (cfg.d_g == 4) {
            std::array<MaterializedKernel, 4> rots{
                group_action_shift(pack.base.back(), 0),
                group_action_shift(pack.base.back(), 1),
                group_action_shift(pack.base.back(), 2),
                group_action_shift(pack.base.back(), 3)};
            pack.rotated.push_back(std::move(rots));
        }
    }
    return pack;
}

// ---------------------------------------------------------------------------
// small field helpers
// ---------------------------------------------------------------------------

namespace {

Field zeros_like(const Field& f) { return Field(f.b, f.c, f.h, f.w, f.dx, f.dy); }

void axpy(double a, const Field& x, Field& y) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

Field scaled(const Field& x, double a) {
    Field out = x;
    for (auto& v : out.data) v *= a;
    return out;
}

Field pad_field(const Field& f, int p) {
    if (p == 0) return f;
    Field out(f.b, f.c, f.h + 2 * p, f.w + 2 * p, f.dx, f.dy);
    for (int bi = 0; bi < f.b; ++bi)
        for (int ci = 0; ci < f.c; ++ci)
            for (int y = 0; y < f.h; ++y)
                std::memcpy(out.slice(bi, ci) + static_cast<std::size_t>(y + p) * out.w + p,
                            f.slice(bi, ci) + static_cast<std::size_t>(y) * f.w,
                            sizeof(double) * f.w);
    return out;
}

Field crop_field(const Field& f, int p, double dx = 1.0, double dy = 1.0) {
    if (p == 0) return f;
    Field out(f.b, f.c, f.h - 2 * p, f.w - 2 * p, dx, dy);
    for (int bi = 0; bi < f.b; ++bi)
        for (int ci = 0; ci < f.c; ++ci)
            for (int y = 0; y < out.h; ++y)
                std::memcpy(out.slice(bi, ci) + static_cast<std::size_t>(y) * out.w,
                            f.slice(bi, ci) + static_cast<std::size_t>(y + p) * f.w + p,
                            sizeof(double) * out.w);
    return out;
}

// Branch-free exp (Cody-Waite reduction + degree-10 Taylor, ~1e-13 relative
// on the clamped range). libm exp cannot vectorize without fast-math, and
// the activation sits on the training hot path.
inline double vec_exp(double x) {
    x = x < -40.0 ? -40.0 : (x > 40.0 ? 40.0 : x);
    const double n = std::nearbyint(x * 1.4426950408889634074);
    const double r = x - n * 0.693147180369123816490 - n * 1.90821492927058770002e-10;
    double p = 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const std::int64_t bits = (static_cast<std::int64_t>(n) + 1023) << 52;
    double scale;
    std::memcpy(&scale, &bits, 8);
    return p * scale;
}

// smooth gate x * sigmoid(1.702 x), the standard sigmoid approximation of
// GELU
constexpr double kActSlope = 1.702;

inline double act_df(Activation a, double x) {
    if (a == Activation::None) return 1.0;
    const double s = 1.0 / (1.0 + vec_exp(-kActSlope * x));
    return s + kActSlope * x * s * (1.0 - s);
}

Field apply_act(Activation a, const Field& pre) {
    if (a == Activation::None) return pre;
    Field out = pre;
    double* __restrict__ v = out.data.data();
    const std::size_t n = out.data.size();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) v[i] = v[i] / (1.0 + vec_exp(-kActSlope * v[i]));
    return out;
}

// Pointwise (1x1) group convolution. Weights [co][ci][gk] are shared across
// output group slots via the cyclic structure
//   out[co, g'] = sum_{ci, gk} W[co][ci][gk] * in[ci, (gk + g') mod dg] + b[co]
// which is a plain channel-mixing linear map when dg = 1.
struct GroupLinear {
    const double* w;
    const double* b; // may be null
    int ci, co, dg;
};

void group_linear_forward(const GroupLinear& gl, const Field& in, Field& out) {
    const int dg = gl.dg;
    const std::size_t npix = static_cast<std::size_t>(in.h) * in.w;
    for (int bi = 0; bi < in.b; ++bi)
        for (int co = 0; co < gl.co; ++co)
            for (int gp = 0; gp < dg; ++gp) {
                double* __restrict__ o = out.slice(bi, co * dg + gp);
                const double bias = gl.b ? gl.b[co] : 0.0;
                for (std::size_t p = 0; p < npix; ++p) o[p] = bias;
                for (int ci = 0; ci < gl.ci; ++ci)
                    for (int gk = 0; gk < dg; ++gk) {
                        const double wv = gl.w[(static_cast<std::size_t>(co) * gl.ci + ci) * dg + gk];
                        const double* __restrict__ x = in.slice(bi, ci * dg + (gk + gp) % dg);
#pragma omp simd
                        for (std::size_t p = 0; p < npix; ++p) o[p] += wv * x[p];
                    }
            }
}

void group_linear_backward(const GroupLinear& gl, const Field& in, const Field& dout,
                           Field& din_acc, double* dw, double* db) {
    const int dg = gl.dg;
    const std::size_t npix = static_cast<std::size_t>(in.h) * in.w;
    for (int bi = 0; bi < in.b; ++bi)
        for (int co = 0; co < gl.co; ++co)
            for (int gp = 0; gp < dg; ++gp) {
                const double* dy = dout.slice(bi, co * dg + gp);
                if (db) {
                    double s = 0.0;
#pragma omp simd reduction(+ : s)
                    for (std::size_t p = 0; p < npix; ++p) s += dy[p];
                    db[co] += s;
                }
                for (int ci = 0; ci < gl.ci; ++ci)
                    for (int gk = 0; gk < dg; ++gk) {
                        const std::size_t wi = (static_cast<std::size_t>(co) * gl.ci + ci) * dg + gk;
                        const double wv = gl.w[wi];
                        const int cin = ci * dg + (gk + gp) % dg;
                        double* __restrict__ dx = din_acc.slice(bi, cin);
                        const double* __restrict__ x = in.slice(bi, cin);
                        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                        for (std::size_t p = 0; p < npix; ++p) {
                            dx[p] += wv * dy[p];
                            acc += x[p] * dy[p];
                        }
                        dw[wi] += acc;
                    }
            }
}

std::size_t block_len(int m) {
    return static_cast<std::size_t>(2 * m + 1) * (2 * m + 1);
}

} // namespace

// ---------------------------------------------------------------------------
// MC-Fourier layer
// ---------------------------------------------------------------------------

namespace {

// Spectral path of one layer: retained-mode transform, kernel contraction,
// inverse transform back to a real field.
void spectral_forward(const Field& f, const ModelConfig& cfg, const KernelPack& pack,
                      int layer, std::vector<cdouble>& X, Field& out) {
    const int m = cfg.m, dz = cfg.d_z, dg = cfg.d_g;
    const std::size_t k2 = block_len(m);
    auto& ws = fftcore::tls_workspace();
    const std::size_t nch = static_cast<std::size_t>(dz) * dg;

    X.assign(static_cast<std::size_t>(f.b) * nch * k2, cdouble(0, 0));
    for (int bi = 0; bi < f.b; ++bi)
        for (std::size_t ch = 0; ch < nch; ++ch)
            fftcore::fft2_block(f.slice(bi, static_cast<int>(ch)),
                                X.data() + (bi * nch + ch) * k2, f.h, f.w, m, ws);

    std::vector<cdouble> Y(static_cast<std::size_t>(f.b) * nch * k2, cdouble(0, 0));
    for (int bi = 0; bi < f.b; ++bi)
        for (int co = 0; co < dz; ++co)
            for (int gp = 0; gp < dg; ++gp) {
                cdouble* y = Y.data() + (bi * nch + static_cast<std::size_t>(co) * dg + gp) * k2;
                const MaterializedKernel& K =
                    dg == 4 ? pack.rotated[layer][gp] : pack.base[layer];
                for (int ci = 0; ci < dz; ++ci)
                    for (int g = 0; g < dg; ++g) {
                        const cdouble* x =
                            X.data() + (bi * nch + static_cast<std::size_t>(ci) * dg + g) * k2;
                        const cdouble* kb = K.block(ci, co, g);
                        for (std::size_t t = 0; t < k2; ++t) y[t] += x[t] * kb[t];
                    }
            }

    out = zeros_like(f);
    for (int bi = 0; bi < f.b; ++bi)
        for (std::size_t ch = 0; ch < nch; ++ch)
            fftcore::block_ifft2_real(Y.data() + (bi * nch + ch) * k2,
                                      out.slice(bi, static_cast<int>(ch)), f.h, f.w, m, ws);
}

// Adjoint of spectral_forward. Accumulates the layer-input cotangent into
// din and the kernel cotangent into dK (base orientation).
void spectral_backward(const Field& dout, const std::vector<cdouble>& X,
                       const ModelConfig& cfg, const KernelPack& pack, int layer,
                       Field& din_acc, MaterializedKernel& dK) {
    const int m = cfg.m, dz = cfg.d_z, dg = cfg.d_g;
    const std::size_t k2 = block_len(m);
    auto& ws = fftcore::tls_workspace();
    const std::size_t nch = static_cast<std::size_t>(dz) * dg;
    const double inv_hw = 1.0 / (static_cast<double>(dout.h) * dout.w);

    std::vector<cdouble> dY(static_cast<std::size_t>(dout.b) * nch * k2);
    for (int bi = 0; bi < dout.b; ++bi)
        for (std::size_t ch = 0; ch < nch; ++ch) {
            cdouble* dy = dY.data() + (bi * nch + ch) * k2;
            fftcore::fft2_block(dout.slice(bi, static_cast<int>(ch)), dy, dout.h, dout.w, m, ws);
            for (std::size_t t = 0; t < k2; ++t) dy[t] *= inv_hw;
        }

    std::vector<cdouble> dX(static_cast<std::size_t>(dout.b) * nch * k2, cdouble(0, 0));
    std::vector<MaterializedKernel> dKR;
    if (dg == 4)
        for (int gp = 0; gp < 4; ++gp) dKR.emplace_back(dz, dz, 4, m);

    for (int bi = 0; bi < dout.b; ++bi)
        for (int co = 0; co < dz; ++co)
            for (int gp = 0; gp < dg; ++gp) {
                const cdouble* dy =
                    dY.data() + (bi * nch + static_cast<std::size_t>(co) * dg + gp) * k2;
                const MaterializedKernel& K =
                    dg == 4 ? pack.rotated[layer][gp] : pack.base[layer];
                MaterializedKernel& dKacc = dg == 4 ? dKR[gp] : dK;
                for (int ci = 0; ci < dz; ++ci)
                    for (int g = 0; g < dg; ++g) {
                        const std::size_t xoff =
                            (bi * nch + static_cast<std::size_t>(ci) * dg + g) * k2;
                        const cdouble* x = X.data() + xoff;
                        cdouble* dx = dX.data() + xoff;
                        const cdouble* kb = K.block(ci, co, g);
                        cdouble* dkb = dKacc.block(ci, co, g);
                        for (std::size_t t = 0; t < k2; ++t) {
                            dx[t] += dy[t] * std::conj(kb[t]);
                            dkb[t] += std::conj(x[t]) * dy[t];
                        }
                    }
            }

    if (dg == 4) {
        // adjoint of the group-action rotation is its inverse permutation
        for (int gp = 0; gp < 4; ++gp) {
            MaterializedKernel folded = group_action_shift(dKR[gp], -gp);
            for (std::size_t i = 0; i < dK.data.size(); ++i) dK.data[i] += folded.data[i];
        }
    }

    const double hw = static_cast<double>(dout.h) * dout.w;
    Field tmp(1, 1, dout.h, dout.w);
    for (int bi = 0; bi < dout.b; ++bi)
        for (std::size_t ch = 0; ch < nch; ++ch) {
            fftcore::block_ifft2_real(dX.data() + (bi * nch + ch) * k2, tmp.slice(0, 0),
                                      dout.h, dout.w, m, ws);
            double* d = din_acc.slice(bi, static_cast<int>(ch));
            const double* t = tmp.slice(0, 0);
            for (std::size_t p = 0; p < static_cast<std::size_t>(dout.h) * dout.w; ++p)
                d[p] += hw * t[p];
        }
}

Field layer_forward(const Field& f, int layer, const ModelParams& params,
                    const KernelPack& pack, LayerTape* tape) {
    const ModelConfig& cfg = params.config();
    const auto& lo = params.offsets().layers[layer];
    const double* pv = params.values.data();
    const int dz = cfg.d_z, dg = cfg.d_g;

    LayerTape local;
    LayerTape& t = tape ? *tape : local;

    spectral_forward(f, cfg, pack, layer, t.block_in, t.spectral);

    t.mlp_pre = zeros_like(f);
    group_linear_forward({pv + lo.mlp1_w, pv + lo.mlp1_b, dz, dz, dg}, t.spectral, t.mlp_pre);
    t.mlp_hidden = apply_act(cfg.activation, t.mlp_pre);

    Field out = zeros_like(f);
    group_linear_forward({pv + lo.mlp2_w, pv + lo.mlp2_b, dz, dz, dg}, t.mlp_hidden, out);

    // residual path W_l f
    Field res = zeros_like(f);
    group_linear_forward({pv + lo.res_w, pv + lo.res_b, dz, dz, dg}, f, res);
    axpy(1.0, res, out);
    return out;
}

// Backward of layer_forward; returns nothing, accumulates din and grads.
void layer_backward(const Field& f_in, const Field& dout, int layer,
                    const ModelParams& params, const KernelPack& pack,
                    const LayerTape& t, Field& din_acc, std::span<double> grads,
                    MaterializedKernel& dK) {
    const ModelConfig& cfg = params.config();
    const auto& lo = params.offsets().layers[layer];
    const double* pv = params.values.data();
    double* gv = grads.data();
    const int dz = cfg.d_z, dg = cfg.d_g;

    // residual path
    group_linear_backward({pv + lo.res_w, pv + lo.res_b, dz, dz, dg}, f_in, dout, din_acc,
                          gv + lo.res_w, gv + lo.res_b);

    // MLP second layer
    Field dhidden = zeros_like(dout);
    group_linear_backward({pv + lo.mlp2_w, pv + lo.mlp2_b, dz, dz, dg}, t.mlp_hidden, dout,
                          dhidden, gv + lo.mlp2_w, gv + lo.mlp2_b);

    // activation
    Field dpre = dhidden;
    if (cfg.activation != Activation::None) {
        double* __restrict__ d = dpre.data.data();
        const double* __restrict__ pre = t.mlp_pre.data.data();
        const std::size_t n = dpre.data.size();
#pragma omp simd
        for (std::size_t i = 0; i < n; ++i) {
            const double s = 1.0 / (1.0 + vec_exp(-kActSlope * pre[i]));
            d[i] *= s + kActSlope * pre[i] * s * (1.0 - s);
        }
    }

    // MLP first layer
    Field dspectral = zeros_like(dout);
    group_linear_backward({pv + lo.mlp1_w, pv + lo.mlp1_b, dz, dz, dg}, t.spectral, dpre,
                          dspectral, gv + lo.mlp1_w, gv + lo.mlp1_b);

    spectral_backward(dspectral, t.block_in, cfg, pack, layer, din_acc, dK);
}

} // namespace

Field mc_fourier_layer(const Field& f, int layer, const ModelParams& params,
                       const KernelPack& pack, LayerTape* tape) {
    const ModelConfig& cfg = params.config();
    if (f.c != cfg.latent_channels())
        throw ShapeMismatch("mc_fourier_layer: expected " +
                            std::to_string(cfg.latent_channels()) + " latent channels, got " +
                            std::to_string(f.c));
    if (2 * cfg.m + 1 > std::min(f.h, f.w))
        throw ModeOverflow("mc_fourier_layer: 2m+1 exceeds grid");
    return layer_forward(f, layer, params, pack, tape);
}

// ---------------------------------------------------------------------------
// F_hat and the explicit step
// ---------------------------------------------------------------------------

Field Model::fhat(const Field& u, FhatTape* tape) const {
    KernelPack pack = materialize_kernels(params_);
    return fhat(u, pack, tape);
}

Field Model::fhat(const Field& u, const KernelPack& pack, FhatTape* tape) const {
    const ModelConfig& cfg = config_;
    if (u.c != cfg.in_channels)
        throw ShapeMismatch("fhat: expected " + std::to_string(cfg.in_channels) +
                            " input channels, got " + std::to_string(u.c));
    const auto& offs = params_.offsets();
    const double* pv = params_.values.data();
    const int dz = cfg.d_z, dg = cfg.d_g;

    FhatTape local;
    FhatTape& t = tape ? *tape : local;
    t.input = u;

    // lift: plain linear in -> d_z, replicated over the group axis
    Field lifted(u.b, cfg.latent_channels(), u.h, u.w, u.dx, u.dy);
    {
        const std::size_t npix = static_cast<std::size_t>(u.h) * u.w;
        for (int bi = 0; bi < u.b; ++bi)
            for (int c = 0; c < dz; ++c) {
                double* dst0 = lifted.slice(bi, c * dg);
                for (std::size_t p = 0; p < npix; ++p) dst0[p] = pv[offs.p_b + c];
                for (int ic = 0; ic < cfg.in_channels; ++ic) {
                    const double wv = pv[offs.p_w + static_cast<std::size_t>(c) * cfg.in_channels + ic];
                    const double* x = u.slice(bi, ic);
                    for (std::size_t p = 0; p < npix; ++p) dst0[p] += wv * x[p];
                }
                for (int g = 1; g < dg; ++g)
                    std::memcpy(lifted.slice(bi, c * dg + g), dst0, sizeof(double) * npix);
            }
    }

    t.feats.clear();
    t.feats.reserve(cfg.n_layers + 1);
    t.feats.push_back(pad_field(lifted, cfg.pad));
    if (2 * cfg.m + 1 > std::min(t.feats[0].h, t.feats[0].w))
        throw ModeOverflow("fhat: 2m+1 = " + std::to_string(2 * cfg.m + 1) +
                           " exceeds padded grid " + std::to_string(t.feats[0].h) + "x" +
                           std::to_string(t.feats[0].w));

    t.layers.assign(cfg.n_layers, LayerTape{});
    for (int l = 0; l < cfg.n_layers; ++l)
        t.feats.push_back(layer_forward(t.feats[l], l, params_, pack, &t.layers[l]));

    // element-wise product fusion over the depth features
    Field fused = scaled(t.feats[1], cfg.fusion_scale);
    for (int l = 2; l <= cfg.n_layers; ++l)
        for (std::size_t i = 0; i < fused.data.size(); ++i)
            fused.data[i] *= cfg.fusion_scale * t.feats[l].data[i];
    if (!all_finite(fused))
        throw NonFinite("fhat: product fusion produced a non-finite value");

    // group average before decoding makes the output exactly p4-invariant
    if (dg == 4) {
        t.q_in = Field(fused.b, dz, fused.h, fused.w, fused.dx, fused.dy);
        const std::size_t npix = static_cast<std::size_t>(fused.h) * fused.w;
        for (int bi = 0; bi < fused.b; ++bi)
            for (int c = 0; c < dz; ++c) {
                double* dst = t.q_in.slice(bi, c);
                for (int g = 0; g < 4; ++g) {
                    const double* src = fused.slice(bi, c * 4 + g);
                    if (g == 0)
                        for (std::size_t p = 0; p < npix; ++p) dst[p] = 0.25 * src[p];
                    else
                        for (std::size_t p = 0; p < npix; ++p) dst[p] += 0.25 * src[p];
                }
            }
    } else {
        t.q_in = std::move(fused);
    }

    // decoder Q: two pointwise layers
    t.q_pre = Field(t.q_in.b, dz, t.q_in.h, t.q_in.w, t.q_in.dx, t.q_in.dy);
    group_linear_forward({pv + offs.q1_w, pv + offs.q1_b, dz, dz, 1}, t.q_in, t.q_pre);
    t.q_hidden = apply_act(cfg.activation, t.q_pre);
    Field out_pad(t.q_in.b, cfg.out_channels, t.q_in.h, t.q_in.w, u.dx, u.dy);
    group_linear_forward({pv + offs.q2_w, pv + offs.q2_b, dz, cfg.out_channels, 1},
                         t.q_hidden, out_pad);

    Field out = crop_field(out_pad, cfg.pad, u.dx, u.dy);
    require_finite(out, "fhat output");
    return out;
}

Field Model::step(const Field& u, StepTape* tape) const {
    const double dt = config_.dt;
    StepTape local;
    StepTape& t = tape ? *tape : local;
    t.input = u;
    t.stage_inputs.clear();
    t.stages.clear();

    auto rhs = [&](const Field& v, FhatTape* ft) -> Field {
        if (fhat_hook) {
            t.used_hook = true;
            return fhat_hook(v);
        }
        return fhat(v, t.kernels, ft);
    };

    if (!fhat_hook) t.kernels = materialize_kernels(params_);

    if (config_.integrator == Integrator::Euler) {
        t.stages.resize(1);
        t.stage_inputs.push_back(u);
        Field k1 = rhs(u, &t.stages[0]);
        Field out = u;
        axpy(dt, k1, out);
        require_finite(out, "step output");
        return out;
    }

    // SSP third-order Runge-Kutta
    t.stages.resize(3);
    t.stage_inputs.push_back(u);
    Field k1 = rhs(u, &t.stages[0]);
    Field s1 = u;
    axpy(dt, k1, s1);

    t.stage_inputs.push_back(s1);
    Field k2 = rhs(s1, &t.stages[1]);
    Field s2 = scaled(u, 0.75);
    axpy(0.25, s1, s2);
    axpy(0.25 * dt, k2, s2);

    t.stage_inputs.push_back(s2);
    Field k3 = rhs(s2, &t.stages[2]);
    Field out = scaled(u, 1.0 / 3.0);
    axpy(2.0 / 3.0, s2, out);
    axpy(2.0 / 3.0 * dt, k3, out);
    require_finite(out, "step output");
    return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace {

// Backward through one fhat evaluation; returns the input cotangent and
// accumulates parameter gradients (kernel cotangents into dK).
Field fhat_backward(const Model& model, const FhatTape& t, const KernelPack& pack,
                    const Field& dout, std::span<double> grads,
                    std::vector<MaterializedKernel>& dK) {
    const ModelConfig& cfg = model.config();
    const ModelParams& params = model.params();
    const auto& offs = params.offsets();
    const double* pv = params.values.data();
    double* gv = grads.data();
    const int dz = cfg.d_z, dg = cfg.d_g;

    // adjoint of the final crop: embed into the padded grid
    Field dq_out = pad_field(dout, cfg.pad);

    // decoder
    Field dq_hidden = zeros_like(t.q_hidden);
    group_linear_backward({pv + offs.q2_w, pv + offs.q2_b, dz, cfg.out_channels, 1},
                          t.q_hidden, dq_out, dq_hidden, gv + offs.q2_w, gv + offs.q2_b);
    Field dq_pre = dq_hidden;
    if (cfg.activation != Activation::None)
        for (std::size_t i = 0; i < dq_pre.data.size(); ++i)
            dq_pre.data[i] *= act_df(cfg.activation, t.q_pre.data[i]);
    Field dq_in = zeros_like(t.q_in);
    group_linear_backward({pv + offs.q1_w, pv + offs.q1_b, dz, dz, 1}, t.q_in, dq_pre,
                          dq_in, gv + offs.q1_w, gv + offs.q1_b);

    // group average adjoint
    Field dfused(dq_in.b, cfg.latent_channels(), dq_in.h, dq_in.w);
    if (dg == 4) {
        const std::size_t npix = static_cast<std::size_t>(dq_in.h) * dq_in.w;
        for (int bi = 0; bi < dq_in.b; ++bi)
            for (int c = 0; c < dz; ++c) {
                const double* src = dq_in.slice(bi, c);
                for (int g = 0; g < 4; ++g) {
                    double* dst = dfused.slice(bi, c * 4 + g);
                    for (std::size_t p = 0; p < npix; ++p) dst[p] = 0.25 * src[p];
                }
            }
    } else {
        dfused = dq_in;
    }

    // product fusion adjoint via prefix/suffix products of the scaled features
    const int nl = cfg.n_layers;
    const double fs = cfg.fusion_scale;
    std::vector<Field> dfeats(nl + 1);
    for (int l = 0; l <= nl; ++l) dfeats[l] = zeros_like(t.feats[l]);
    {
        const std::size_t n = dfused.data.size();
        std::vector<Field> prefix(nl + 1), suffix(nl + 2);
        prefix[0] = zeros_like(t.feats[1]);
        for (auto& v : prefix[0].data) v = 1.0;
        suffix[nl + 1] = prefix[0];
        for (int l = 1; l <= nl; ++l) {
            prefix[l] = prefix[l - 1];
            for (std::size_t i = 0; i < n; ++i) prefix[l].data[i] *= fs * t.feats[l].data[i];
        }
        for (int l = nl; l >= 1; --l) {
            suffix[l] = suffix[l + 1];
            for (std::size_t i = 0; i < n; ++i) suffix[l].data[i] *= fs * t.feats[l].data[i];
        }
        for (int l = 1; l <= nl; ++l)
            for (std::size_t i = 0; i < n; ++i)
                dfeats[l].data[i] =
                    dfused.data[i] * prefix[l - 1].data[i] * suffix[l + 1].data[i] * fs;
    }

    // layers in reverse; each adds its input cotangent onto dfeats[l-1]
    for (int l = nl - 1; l >= 0; --l)
        layer_backward(t.feats[l], dfeats[l + 1], l, params, pack, t.layers[l],
                       dfeats[l], grads, dK[l]);

    // lift adjoint: un-pad, sum group replicas, linear transpose
    Field dlift = crop_field(dfeats[0], cfg.pad);
    Field din(t.input.b, cfg.in_channels, t.input.h, t.input.w, t.input.dx, t.input.dy);
    {
        const std::size_t npix = static_cast<std::size_t>(din.h) * din.w;
        std::vector<double> gsum(npix);
        for (int bi = 0; bi < din.b; ++bi)
            for (int c = 0; c < dz; ++c) {
                std::fill(gsum.begin(), gsum.end(), 0.0);
                for (int g = 0; g < dg; ++g) {
                    const double* src = dlift.slice(bi, c * dg + g);
                    for (std::size_t p = 0; p < npix; ++p) gsum[p] += src[p];
                }
                double bsum = 0.0;
                for (std::size_t p = 0; p < npix; ++p) bsum += gsum[p];
                gv[offs.p_b + c] += bsum;
                for (int ic = 0; ic < cfg.in_channels; ++ic) {
                    const double wv =
                        pv[offs.p_w + static_cast<std::size_t>(c) * cfg.in_channels + ic];
                    const double* x = t.input.slice(bi, ic);
                    double* dd = din.slice(bi, ic);
                    double acc = 0.0;
                    for (std::size_t p = 0; p < npix; ++p) {
                        dd[p] += wv * gsum[p];
                        acc += x[p] * gsum[p];
                    }
                    gv[offs.p_w + static_cast<std::size_t>(c) * cfg.in_channels + ic] += acc;
                }
            }
    }
    return din;
}

} // namespace

void Model::backward(StepTape& tape, const Field& dout, std::span<double> grads,
                     Field* du) const {
    if (tape.consumed)
        throw TapeConsumed("backward: tape already consumed; run a new forward");
    if (tape.used_hook)
        throw ConfigError("backward: the analytic test hook has no backward pass");
    if (grads.size() != params_.size())
        throw ShapeMismatch("backward: gradient buffer size mismatch");
    tape.consumed = true;

    const double dt = config_.dt;
    const KernelShape ks = params_.kernel_shape();
    std::vector<MaterializedKernel> dK;
    dK.reserve(config_.n_layers);
    for (int l = 0; l < config_.n_layers; ++l)
        dK.emplace_back(ks.c_in, ks.c_out, ks.d_g, ks.m);

    Field din;
    if (config_.integrator == Integrator::Euler) {
        // out = u + dt * F(u)
        Field dk1 = scaled(dout, dt);
        din = fhat_backward(*this, tape.stages[0], tape.kernels, dk1, grads, dK);
        axpy(1.0, dout, din);
    } else {
        // out = u/3 + 2/3 s2 + 2/3 dt F(s2); s2 = 3/4 u + 1/4 s1 + 1/4 dt F(s1);
        // s1 = u + dt F(u)
        Field dk3 = scaled(dout, 2.0 / 3.0 * dt);
        Field ds2 = fhat_backward(*this, tape.stages[2], tape.kernels, dk3, grads, dK);
        axpy(2.0 / 3.0, dout, ds2);

        Field dk2 = scaled(ds2, 0.25 * dt);
        Field ds1 = fhat_backward(*this, tape.stages[1], tape.kernels, dk2, grads, dK);
        axpy(0.25, ds2, ds1);

        Field dk1 = scaled(ds1, dt);
        din = fhat_backward(*this, tape.stages[0], tape.kernels, dk1, grads, dK);
        axpy(1.0, ds1, din);
        axpy(0.75, ds2, din);
        axpy(1.0 / 3.0, dout, din);
    }

    for (int l = 0; l < config_.n_layers; ++l) {
        const std::size_t off = params_.offsets().layers[l].kernel;
        materialize_backward(ks, dK[l], grads.subspan(off, ks.free_count()));
    }

    if (du) *du = std::move(din);
}

} // namespace pefnn
