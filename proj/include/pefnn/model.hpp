#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pefnn/field.hpp"
#include "pefnn/kernel.hpp"

namespace pefnn {

enum class Integrator { Euler, RK3 };
enum class Activation { None, Gelu };

/// Architecture hyperparameters of the network.
struct ModelConfig {
    int n_layers = 4;      // number of MC-Fourier layers
    int d_z = 10;          // latent channels
    int m = 12;            // mode radius, retained block is (2m+1)^2
    KernelMode kernel_mode = KernelMode::SingleRotation;
    int d_g = 1;           // group size: 1 (none) or 4 (p4)
    int in_channels = 1;
    int out_channels = 1;
    double dt = 1.0;       // time spacing of the explicit update
    Integrator integrator = Integrator::Euler;
    int pad = 0;           // zero padding per spatial side for non-periodic data
    Activation activation = Activation::Gelu; // inside the per-layer MLP and Q
    double fusion_scale = 1.0;                // rescales each feature before the product

    void validate() const;
    int latent_channels() const { return d_z * d_g; }
    bool operator==(const ModelConfig&) const = default;
};

struct ParamEntry {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
    std::vector<int> shape;
};

/// All trainable values in one flat vector with a named manifest. The
/// optimizer, checkpoints and gradient checks all address parameters as
/// (name, offset, shape) into this vector.
class ModelParams {
public:
    explicit ModelParams(const ModelConfig& cfg);

    const ModelConfig& config() const { return config_; }
    const std::vector<ParamEntry>& manifest() const { return entries_; }
    std::size_t size() const { return values.size(); }

    std::span<double> at(const std::string& name);
    std::span<const double> at(const std::string& name) const;

    /// Seeded default initialization (uniform fan-in scaling; kernel free
    /// parameters use 1/(c_in*(2m+1)^2)).
    void init(std::uint64_t seed);

    std::vector<double> values;

    /// Offsets resolved once for the forward/backward inner loops.
    struct LayerOffsets {
        std::size_t kernel, res_w, res_b, mlp1_w, mlp1_b, mlp2_w, mlp2_b;
    };
    struct Offsets {
        std::size_t p_w, p_b;
        std::vector<LayerOffsets> layers;
        std::size_t q1_w, q1_b, q2_w, q2_b;
    };
    const Offsets& offsets() const { return offs_; }
    KernelShape kernel_shape() const;

private:
    ModelConfig config_;
    std::vector<ParamEntry> entries_;
    Offsets offs_;

    std::size_t add(const std::string& name, std::vector<int> shape);
};

/// Kernels materialized once per forward/backward pass (they do not depend
/// on the input). For d_g = 4 the four group-action-shifted copies are kept
/// so each output group slot reads its rotated kernel directly.
struct KernelPack {
    std::vector<MaterializedKernel> base;                   // per layer
    std::vector<std::array<MaterializedKernel, 4>> rotated; // per layer, d_g = 4 only
};
KernelPack materialize_kernels(const ModelParams& params);

/// Saved intermediates of one MC-Fourier layer forward.
struct LayerTape {
    std::vector<cdouble> block_in; // retained spectrum of the layer input
    Field spectral;                // real field after the inverse transform
    Field mlp_pre;                 // pre-activation of the MLP hidden layer
    Field mlp_hidden;              // activated hidden layer
};

/// Saved intermediates of one evaluation of the nonlinear right-hand side.
struct FhatTape {
    Field input;
    std::vector<Field> feats; // feats[0] = lifted (padded); feats[l] = layer l output
    std::vector<LayerTape> layers;
    Field q_in;  // fused features after group averaging (decoder input)
    Field q_pre; // decoder hidden pre-activation
    Field q_hidden;
};

/// Record of one step() forward, sufficient for one backward pass.
struct StepTape {
    Field input;
    std::vector<Field> stage_inputs; // per integrator stage
    std::vector<FhatTape> stages;
    KernelPack kernels;
    bool consumed = false;
    bool used_hook = false;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg) : config_(cfg), params_(cfg) {
        cfg.validate();
    }

    const ModelConfig& config() const { return config_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }

    void init_params(std::uint64_t seed) { params_.init(seed); }

    /// Nonlinear right-hand side F_hat(u): lift, MC-Fourier layers, product
    /// fusion across depths, group average, decode.
    Field fhat(const Field& u, FhatTape* tape = nullptr) const;
    Field fhat(const Field& u, const KernelPack& pack, FhatTape* tape = nullptr) const;

    /// One explicit time step (forward Euler or third-order Runge-Kutta).
    Field step(const Field& u, StepTape* tape = nullptr) const;

    /// Reverse-mode gradients of <output, dout> for every parameter,
    /// accumulated into grads (laid out like params().values). The gradient
    /// with respect to the step input lands in du when given (needed for
    /// backpropagation through time).
    void backward(StepTape& tape, const Field& dout, std::span<double> grads,
                  Field* du = nullptr) const;

    /// When set, step() integrates this analytic right-hand side instead of
    /// the network (integrator-order tests). Forward only.
    std::function<Field(const Field&)> fhat_hook;

private:
    ModelConfig config_;
    ModelParams params_;
};

/// One MC-Fourier layer: spectral multiply on the retained modes, pointwise
/// MLP, plus the linear residual path. Exposed for layer-level tests.
Field mc_fourier_layer(const Field& f, int layer, const ModelParams& params,
                       const KernelPack& pack, LayerTape* tape = nullptr);

/// Total trainable parameter count for a config (used for matched-budget
/// comparisons between kernel modes).
std::size_t parameter_count(const ModelConfig& cfg);

Integrator integrator_from_name(const std::string& name);
const char* integrator_name(Integrator i);
Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

} // namespace pefnn
