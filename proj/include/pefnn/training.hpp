#pragma once

#include <iosfwd>
#include <optional>

#include "pefnn/model.hpp"
#include "pefnn/trajectory.hpp"

namespace pefnn {

enum class Strategy { Markov, Recurrent };

Strategy strategy_from_name(const std::string& name);
const char* strategy_name(Strategy s);

struct TrainConfig {
    Strategy strategy = Strategy::Markov;
    int epochs = 100;
    int batch_size = 8;
    double lr0 = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    double grad_clip = 0.0; // max global norm; 0 disables
    int t_roll = 0;         // recurrent rollout length; 0 = full horizon

    void validate() const;
};

/// Cosine decay: lr(0) = lr0 and lr(total) = 0 exactly.
double cosine_lr(double lr0, int epoch, int total_epochs);

/// Adam moment accumulators, laid out like the flat parameter vector.
struct AdamState {
    std::vector<double> m, v;
    long steps = 0;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        steps = 0;
    }
    bool initialized() const { return !m.empty(); }
};

/// One Adam update with decoupled weight decay (decay applied to the
/// parameters directly, not through the moments).
void adam_update(std::span<double> params, std::span<const double> grads,
                 AdamState& state, double lr, const TrainConfig& cfg);

/// Mean over the batch of per-sample ||pred - truth||_2 / ||truth||_2,
/// differentiable; dpred carries d(loss)/d(pred).
struct LossResult {
    double value = 0.0;
    Field dpred;
};
LossResult relative_l2_loss(const Field& pred, const Field& truth);
double relative_l2_value(const Field& pred, const Field& truth);

/// Loss and parameter gradient of one Markov sample batch
/// (relative L2 of step(u) against target). Gradients accumulate.
double markov_loss_grad(const Model& model, const Field& u, const Field& target,
                        std::span<double> grads);

/// Loss and parameter gradient of one recurrent rollout batch: t_roll
/// autoregressive steps from slice 0, per-step relative L2 averaged, with
/// backpropagation through time across all steps.
double rollout_loss_grad(const Model& model, const Dataset& data,
                         const std::vector<int>& batch, int t_roll,
                         std::span<double> grads);

struct EpochStats {
    int epoch;
    double lr, train_loss, valid_loss;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    void write_csv(std::ostream& os) const;
};

/// Markov training: every (u_t, u_{t+1}) pair is one supervised sample.
/// `state` carries optimizer moments across resumes; start_epoch shifts the
/// cosine schedule accordingly.
TrainHistory train_markov(Model& model, const Dataset& train, const Dataset* valid,
                          const TrainConfig& cfg, AdamState* state = nullptr,
                          int start_epoch = 0, int end_epoch = -1);

/// Recurrent training: autoregressive rollout from the first slice with the
/// loss backpropagated through time.
TrainHistory train_recurrent(Model& model, const Dataset& train, const Dataset* valid,
                             const TrainConfig& cfg, AdamState* state = nullptr,
                             int start_epoch = 0, int end_epoch = -1);

} // namespace pefnn
