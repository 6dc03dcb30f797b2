#include "pefnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "pefnn/rng.hpp"

namespace pefnn {

Strategy strategy_from_name(const std::string& name) {
    if (name == "markov") return Strategy::Markov;
    if (name == "recurrent") return Strategy::Recurrent;
    throw ConfigError("unknown strategy '" + name + "' (markov|recurrent)");
}

const char* strategy_name(Strategy s) {
    return s == Strategy::Markov ? "markov" : "recurrent";
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("train: adam betas must lie in (0, 1)");
    if (lr0 <= 0.0) throw ConfigError("train: lr0 must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
    if (t_roll < 0) throw ConfigError("train: t_roll must be >= 0");
}

double cosine_lr(double lr0, int epoch, int total_epochs) {
    if (total_epochs <= 0) return lr0;
    const double x = M_PI * static_cast<double>(epoch) / total_epochs;
    return lr0 * 0.5 * (1.0 + std::cos(x));
}

void adam_update(std::span<double> params, std::span<const double> grads,
                 AdamState& state, double lr, const TrainConfig& cfg) {
    if (!state.initialized()) state.init(params.size());
    if (state.m.size() != params.size() || grads.size() != params.size())
        throw ShapeMismatch("adam_update: state/gradient size mismatch");
    state.steps += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
    const double eps = 1e-8;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + cfg.weight_decay * params[i]);
    }
}

LossResult relative_l2_loss(const Field& pred, const Field& truth) {
    if (!pred.same_shape(truth))
        throw ShapeMismatch("relative_l2_loss: shape mismatch");
    const std::size_t per = static_cast<std::size_t>(pred.c) * pred.h * pred.w;
    LossResult res;
    res.dpred = Field(pred.b, pred.c, pred.h, pred.w, pred.dx, pred.dy);
    double total = 0.0;
    for (int bi = 0; bi < pred.b; ++bi) {
        const double* p = pred.data.data() + bi * per;
        const double* t = truth.data.data() + bi * per;
        double diff2 = 0.0, ref2 = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = p[i] - t[i];
            diff2 += d * d;
            ref2 += t[i] * t[i];
        }
        const double ref = std::sqrt(ref2);
        if (ref < 1e-30)
            throw ZeroReference("relative_l2_loss: truth norm below 1e-30 in sample " +
                                std::to_string(bi));
        const double diff = std::sqrt(diff2);
        total += diff / ref;
        if (diff > 0.0) {
            const double scale = 1.0 / (static_cast<double>(pred.b) * diff * ref);
            double* dp = res.dpred.data.data() + bi * per;
            for (std::size_t i = 0; i < per; ++i) dp[i] = scale * (p[i] - t[i]);
        }
    }
    res.value = total / pred.b;
    return res;
}

double relative_l2_value(const Field& pred, const Field& truth) {
    return relative_l2_loss(pred, truth).value;
}

Field gather_batch(const Dataset& data, const std::vector<int>& traj_idx, int ti) {
    const Trajectory& first = data[traj_idx[0]];
    Field batch(static_cast<int>(traj_idx.size()), first.c, first.h, first.w, first.dx,
                first.dy);
    const std::size_t per = static_cast<std::size_t>(first.c) * first.h * first.w;
    for (std::size_t bi = 0; bi < traj_idx.size(); ++bi)
        std::copy(data[traj_idx[bi]].slice(ti, 0), data[traj_idx[bi]].slice(ti, 0) + per,
                  batch.data.begin() + bi * per);
    return batch;
}

Field gather_batch(const Dataset& data, const std::vector<std::pair<int, int>>& samples) {
    const Trajectory& first = data[samples[0].first];
    Field batch(static_cast<int>(samples.size()), first.c, first.h, first.w, first.dx,
                first.dy);
    const std::size_t per = static_cast<std::size_t>(first.c) * first.h * first.w;
    for (std::size_t bi = 0; bi < samples.size(); ++bi)
        std::copy(data[samples[bi].first].slice(samples[bi].second, 0),
                  data[samples[bi].first].slice(samples[bi].second, 0) + per,
                  batch.data.begin() + bi * per);
    return batch;
}

void TrainHistory::write_csv(std::ostream& os) const {
    os << "epoch,lr,train_loss,valid_loss\n";
    char buf[160];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.lr,
                      e.train_loss, e.valid_loss);
        os << buf;
    }
}

namespace {

void clip_gradients(std::vector<double>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double norm2 = 0.0;
    for (double g : grads) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& g : grads) g *= s;
    }
}

// seeded Fisher-Yates so shuffles are platform independent
template <typename T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform() * i);
        std::swap(v[i - 1], v[j]);
    }
}

double markov_valid_loss(const Model& model, const Dataset& valid) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& traj : valid)
        for (int ti = 0; ti + 1 < traj.t; ++ti) {
            total += relative_l2_value(model.step(traj.field_at(ti)), traj.field_at(ti + 1));
            count += 1;
        }
    return count ? total / static_cast<double>(count) : 0.0;
}

double rollout_valid_loss(const Model& model, const Dataset& valid, int t_roll) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& traj : valid) {
        const int steps = std::min(t_roll, traj.t - 1);
        Field u = traj.field_at(0);
        double acc = 0.0;
        for (int s = 1; s <= steps; ++s) {
            u = model.step(u);
            acc += relative_l2_value(u, traj.field_at(s));
        }
        total += acc / steps;
        count += 1;
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

} // namespace

double markov_loss_grad(const Model& model, const Field& u, const Field& target,
                        std::span<double> grads) {
    StepTape tape;
    Field pred = model.step(u, &tape);
    LossResult loss = relative_l2_loss(pred, target);
    model.backward(tape, loss.dpred, grads);
    return loss.value;
}

double rollout_loss_grad(const Model& model, const Dataset& data,
                         const std::vector<int>& batch, int t_roll,
                         std::span<double> grads) {
    std::vector<StepTape> tapes(t_roll);
    std::vector<Field> cotangents(t_roll);
    Field u = gather_batch(data, batch, 0);
    double loss_val = 0.0;
    for (int s = 0; s < t_roll; ++s) {
        Field pred = model.step(u, &tapes[s]);
        Field target = gather_batch(data, batch, s + 1);
        LossResult part = relative_l2_loss(pred, target);
        loss_val += part.value / t_roll;
        cotangents[s] = part.dpred;
        for (auto& v : cotangents[s].data) v /= t_roll;
        u = std::move(pred);
    }
    Field du;
    for (int s = t_roll - 1; s >= 0; --s) {
        Field cot = cotangents[s];
        if (s < t_roll - 1)
            for (std::size_t i = 0; i < cot.data.size(); ++i) cot.data[i] += du.data[i];
        model.backward(tapes[s], cot, grads, &du);
    }
    return loss_val;
}

TrainHistory train_markov(Model& model, const Dataset& train, const Dataset* valid,
                          const TrainConfig& cfg, AdamState* state, int start_epoch,
                          int end_epoch) {
    if (end_epoch < 0) end_epoch = cfg.epochs;
    cfg.validate();
    std::vector<std::pair<int, int>> samples;
    for (std::size_t k = 0; k < train.size(); ++k) {
        if (train[k].t < 2)
            throw DataError("train_markov: trajectory " + std::to_string(k) +
                            " has fewer than 2 time slices");
        for (int ti = 0; ti + 1 < train[k].t; ++ti) samples.push_back({static_cast<int>(k), ti});
    }

    AdamState local;
    AdamState& opt = state ? *state : local;
    if (!opt.initialized()) opt.init(model.params().size());

    TrainHistory history;
    std::vector<double> grads(model.params().size());

    for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
        const double lr = cosine_lr(cfg.lr0, epoch, cfg.epochs);
        Rng shuffle_rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_inplace(samples, shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t pos = 0; pos < samples.size(); pos += cfg.batch_size) {
            const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, samples.size() - pos);
            std::vector<std::pair<int, int>> batch(samples.begin() + pos,
                                                   samples.begin() + pos + bsz);
            std::vector<std::pair<int, int>> next = batch;
            for (auto& s : next) s.second += 1;

            Field u = gather_batch(train, batch);
            Field target = gather_batch(train, next);

            try {
                std::fill(grads.begin(), grads.end(), 0.0);
                const double loss = markov_loss_grad(model, u, target, grads);
                clip_gradients(grads, cfg.grad_clip);
                adam_update(model.params().values, grads, opt, lr, cfg);
                epoch_loss += loss * static_cast<double>(bsz);
                seen += bsz;
            } catch (const NonFinite& e) {
                throw NonFinite("train_markov: " + std::string(e.what()) + " (epoch " +
                                std::to_string(epoch) + ")");
            }
        }
        const double train_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
        const double valid_loss = valid ? markov_valid_loss(model, *valid) : train_loss;
        history.epochs.push_back({epoch, lr, train_loss, valid_loss});
    }
    return history;
}

TrainHistory train_recurrent(Model& model, const Dataset& train, const Dataset* valid,
                             const TrainConfig& cfg, AdamState* state, int start_epoch,
                             int end_epoch) {
    if (end_epoch < 0) end_epoch = cfg.epochs;
    cfg.validate();
    if (train.empty()) throw DataError("train_recurrent: empty dataset");
    int horizon = train[0].t - 1;
    for (const auto& traj : train) horizon = std::min(horizon, traj.t - 1);
    const int t_roll = cfg.t_roll > 0 ? cfg.t_roll : horizon;
    for (std::size_t k = 0; k < train.size(); ++k)
        if (train[k].t < t_roll + 1)
            throw DataError("train_recurrent: trajectory " + std::to_string(k) + " has " +
                            std::to_string(train[k].t) + " slices, need t_roll+1 = " +
                            std::to_string(t_roll + 1));

    AdamState local;
    AdamState& opt = state ? *state : local;
    if (!opt.initialized()) opt.init(model.params().size());

    TrainHistory history;
    std::vector<double> grads(model.params().size());
    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
        const double lr = cosine_lr(cfg.lr0, epoch, cfg.epochs);
        Rng shuffle_rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_inplace(order, shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, order.size() - pos);
            std::vector<int> batch(order.begin() + pos, order.begin() + pos + bsz);

            try {
                std::fill(grads.begin(), grads.end(), 0.0);
                const double loss = rollout_loss_grad(model, train, batch, t_roll, grads);
                clip_gradients(grads, cfg.grad_clip);
                adam_update(model.params().values, grads, opt, lr, cfg);
                epoch_loss += loss * static_cast<double>(bsz);
                seen += bsz;
            } catch (const NonFinite& e) {
                throw NonFinite("train_recurrent: " + std::string(e.what()) + " (epoch " +
                                std::to_string(epoch) + ")");
            }
        }
        const double train_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
        const double valid_loss =
            valid ? rollout_valid_loss(model, *valid, t_roll) : train_loss;
        history.epochs.push_back({epoch, lr, train_loss, valid_loss});
    }
    return history;
}

} // namespace pefnn
