#pragma once

#include <iosfwd>

#include "pefnn/model.hpp"
#include "pefnn/trajectory.hpp"

namespace pefnn {

/// Rollout evaluation summary. Per-step rows aggregate over trajectories;
/// the headline L_RMSE is the mean of per-trajectory values.
struct EvalReport {
    struct StepRow {
        int step;
        double l_rmse;
        double l_m;
    };
    std::vector<StepRow> steps;
    std::vector<double> per_traj_l_rmse;
    double aggregate_l_rmse = 0.0;
    double momentum_loss_mean = 0.0;  // mean over steps
    double momentum_loss_final = 0.0; // last step
    double wall_seconds = 0.0;

    /// Columns exactly `step,l_rmse,l_m`.
    void write_csv(std::ostream& os) const;
};

/// Mean over samples of ||pred - truth||_2 / ||truth||_2.
double l_rmse(const Field& preds, const Field& truths);

/// || sum_b M_pred - sum_b M_ref ||_2 / N with momentum under unit mass
/// (per-sample spatial sum, one component per channel) and N = H*W.
double momentum_loss(const Field& preds, const Field& truths);
std::vector<double> momentum_loss_per_channel(const Field& preds, const Field& truths);

/// Autoregressive rollout from slice `start`, compared against slices
/// start+1 .. start+t_steps of each trajectory. Deterministic. When
/// `predictions` is given it receives the predicted trajectories
/// (slice 0 = the initial truth slice).
EvalReport rollout_eval(const Model& model, const Dataset& data, int t_steps,
                        int start = 0, Dataset* predictions = nullptr);

/// Zero-shot super-resolution protocol: the unchanged model runs on the
/// fine-grid dataset (pad_modes embeds the same kernel block into the larger
/// spectrum). Throws ModeOverflow when the retained block does not fit.
EvalReport superres_eval(const Model& model, const Dataset& fine_data, int t_steps,
                         int start = 0);

} // namespace pefnn
