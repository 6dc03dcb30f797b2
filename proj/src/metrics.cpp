#include "pefnn/metrics.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "pefnn/training.hpp"

namespace pefnn {

void EvalReport::write_csv(std::ostream& os) const {
    os << "step,l_rmse,l_m\n";
    char buf[120];
    for (const auto& row : steps) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.step, row.l_rmse, row.l_m);
        os << buf;
    }
}

double l_rmse(const Field& preds, const Field& truths) {
    return relative_l2_value(preds, truths);
}

std::vector<double> momentum_loss_per_channel(const Field& preds, const Field& truths) {
    if (!preds.same_shape(truths)) throw ShapeMismatch("momentum_loss: shape mismatch");
    const std::size_t npix = static_cast<std::size_t>(preds.h) * preds.w;
    std::vector<double> per(preds.c, 0.0);
    for (int bi = 0; bi < preds.b; ++bi)
        for (int ci = 0; ci < preds.c; ++ci) {
            const double* p = preds.slice(bi, ci);
            const double* t = truths.slice(bi, ci);
            double sp = 0.0, st = 0.0;
            for (std::size_t i = 0; i < npix; ++i) {
                sp += p[i];
                st += t[i];
            }
            per[ci] += sp - st;
        }
    for (auto& v : per) v = std::abs(v) / static_cast<double>(npix);
    return per;
}

double momentum_loss(const Field& preds, const Field& truths) {
    const std::vector<double> per = momentum_loss_per_channel(preds, truths);
    double s = 0.0;
    for (double v : per) s += v * v;
    return std::sqrt(s);
}

EvalReport rollout_eval(const Model& model, const Dataset& data, int t_steps, int start,
                        Dataset* predictions) {
    if (data.empty()) throw DataError("rollout_eval: empty dataset");
    const auto t0 = std::chrono::steady_clock::now();

    int horizon = data[0].t;
    for (const auto& traj : data) horizon = std::min(horizon, traj.t);
    if (start < 0 || start >= horizon - 1)
        throw DataError("rollout_eval: start slice out of range");
    const int steps = std::min(t_steps, horizon - 1 - start);
    if (steps < 1) throw DataError("rollout_eval: no steps to evaluate");

    EvalReport rep;
    rep.steps.resize(steps);
    rep.per_traj_l_rmse.assign(data.size(), 0.0);
    std::vector<double> step_err(steps, 0.0);
    std::vector<std::vector<double>> dmom(steps); // per step, per channel sums

    if (predictions) {
        predictions->clear();
        predictions->reserve(data.size());
    }

    for (std::size_t k = 0; k < data.size(); ++k) {
        const Trajectory& traj = data[k];
        Field u = traj.field_at(start);
        Trajectory pred_traj;
        if (predictions) {
            pred_traj = Trajectory(steps + 1, traj.c, traj.h, traj.w);
            pred_traj.dt_record = traj.dt_record;
            pred_traj.dx = traj.dx;
            pred_traj.dy = traj.dy;
            pred_traj.channel_names = traj.channel_names;
            std::copy(u.data.begin(), u.data.end(), pred_traj.slice(0, 0));
        }
        double traj_err = 0.0;
        for (int s = 0; s < steps; ++s) {
            u = model.step(u);
            const Field truth = traj.field_at(start + 1 + s);
            const double err = relative_l2_value(u, truth);
            traj_err += err;
            step_err[s] += err;
            // momentum sums accumulate over trajectories before the norm
            if (dmom[s].empty()) dmom[s].assign(traj.c, 0.0);
            const std::size_t npix = static_cast<std::size_t>(u.h) * u.w;
            for (int c = 0; c < traj.c; ++c) {
                double sp = 0.0, st = 0.0;
                for (std::size_t i = 0; i < npix; ++i) {
                    sp += u.slice(0, c)[i];
                    st += truth.slice(0, c)[i];
                }
                dmom[s][c] += sp - st;
            }
            if (predictions) std::copy(u.data.begin(), u.data.end(), pred_traj.slice(s + 1, 0));
        }
        rep.per_traj_l_rmse[k] = traj_err / steps;
        if (predictions) predictions->push_back(std::move(pred_traj));
    }

    const std::size_t npix = static_cast<std::size_t>(data[0].h) * data[0].w;
    for (int s = 0; s < steps; ++s) {
        double m2 = 0.0;
        for (double v : dmom[s]) m2 += (v / npix) * (v / npix);
        rep.steps[s] = {start + 1 + s, step_err[s] / static_cast<double>(data.size()),
                        std::sqrt(m2)};
        rep.momentum_loss_mean += std::sqrt(m2) / steps;
    }
    rep.momentum_loss_final = rep.steps.back().l_m;
    for (double v : rep.per_traj_l_rmse) rep.aggregate_l_rmse += v;
    rep.aggregate_l_rmse /= static_cast<double>(data.size());
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

EvalReport superres_eval(const Model& model, const Dataset& fine_data, int t_steps,
                         int start) {
    if (fine_data.empty()) throw DataError("superres_eval: empty dataset");
    const int side = std::min(fine_data[0].h, fine_data[0].w) + 2 * model.config().pad;
    if (2 * model.config().m + 1 > side)
        throw ModeOverflow("superres_eval: retained block 2m+1 = " +
                           std::to_string(2 * model.config().m + 1) +
                           " does not fit the evaluation grid");
    return rollout_eval(model, fine_data, t_steps, start);
}

} // namespace pefnn
