#include <doctest.h>

#include <cmath>

#include "pefnn/metrics.hpp"
#include "test_util.hpp"

using namespace pefnn;
using namespace pefnn::test;

namespace {

Trajectory trajectory_from(const std::vector<Field>& slices) {
    Trajectory traj(static_cast<int>(slices.size()), slices[0].c, slices[0].h, slices[0].w);
    traj.dx = slices[0].dx;
    traj.dy = slices[0].dy;
    for (std::size_t t = 0; t < slices.size(); ++t)
        std::copy(slices[t].data.begin(), slices[t].data.end(),
                  traj.slice(static_cast<int>(t), 0));
    return traj;
}

Model identity_model(int m = 2) {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_z = 2;
    cfg.m = m;
    Model model(cfg); // all-zero parameters: fhat == 0, step == identity
    return model;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("l_rmse definitional cases") {
    Field truth = random_field(2, 1, 8, 8, 1);
    CHECK(l_rmse(truth, truth) == 0.0);

    Field scaled = truth;
    for (auto& v : scaled.data) v *= 1.5;
    CHECK(l_rmse(scaled, truth) == doctest::Approx(0.5).epsilon(1e-13));

    // two samples with per-sample errors 0.1 and 0.3 average to 0.2
    Field t2(2, 1, 4, 4), p2(2, 1, 4, 4);
    for (int i = 0; i < 16; ++i) {
        t2.data[i] = 1.0;
        t2.data[16 + i] = 1.0;
        p2.data[i] = 1.1;
        p2.data[16 + i] = 1.3;
    }
    CHECK(l_rmse(p2, t2) == doctest::Approx(0.2).epsilon(1e-13));

    // scale-reporting, not scale-invariant
    for (double a : {0.25, 0.5, 2.0, 3.5}) {
        Field pa = truth;
        for (auto& v : pa.data) v *= a;
        CHECK(l_rmse(pa, truth) == doctest::Approx(std::abs(a - 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("momentum loss definitional cases") {
    Field truth = random_field(1, 1, 8, 8, 2);
    CHECK(momentum_loss(truth, truth) == 0.0);

    const double c = 0.37;
    Field shiftc = truth;
    for (auto& v : shiftc.data) v += c;
    CHECK(momentum_loss(shiftc, truth) == doctest::Approx(c).epsilon(1e-12));

    // exact invariance to zero-spatial-mean perturbations
    Field pert = truth;
    Rng rng(3);
    std::vector<double> noise(64);
    double mean = 0.0;
    for (auto& v : noise) { v = rng.uniform(-1, 1); mean += v; }
    mean /= 64.0;
    for (int i = 0; i < 64; ++i) pert.data[i] += noise[i] - mean;
    CHECK(momentum_loss(pert, truth) < 1e-14);
}

TEST_CASE("identity model on a static trajectory scores zero") {
    Field s = random_field(1, 1, 12, 12, 4);
    Trajectory traj = trajectory_from({s, s, s, s});
    Model model = identity_model();
    EvalReport rep = rollout_eval(model, {traj}, 3);
    for (const auto& row : rep.steps) {
        CHECK(row.l_rmse == 0.0);
        CHECK(row.l_m == 0.0);
    }
    CHECK(rep.aggregate_l_rmse == 0.0);
}

TEST_CASE("identity model error equals the truth's drift from its first slice") {
    std::vector<Field> slices;
    for (int t = 0; t < 4; ++t) slices.push_back(random_field(1, 1, 10, 10, 100 + t));
    Trajectory traj = trajectory_from(slices);
    Model model = identity_model();
    EvalReport rep = rollout_eval(model, {traj}, 3);
    for (int s = 0; s < 3; ++s) {
        const double drift = rel_diff(slices[0], slices[s + 1]);
        CHECK(rep.steps[s].l_rmse == doctest::Approx(drift).epsilon(1e-12));
    }
}

TEST_CASE("report aggregate equals the mean of per-trajectory values") {
    Dataset data;
    for (int k = 0; k < 5; ++k) {
        std::vector<Field> slices;
        for (int t = 0; t < 5; ++t)
            slices.push_back(random_field(1, 1, 8, 8, 1000 + 10 * k + t));
        data.push_back(trajectory_from(slices));
    }
    Model model = identity_model();
    EvalReport rep = rollout_eval(model, data, 4);
    double mean = 0.0;
    for (double v : rep.per_traj_l_rmse) mean += v;
    mean /= static_cast<double>(rep.per_traj_l_rmse.size());
    CHECK(std::abs(rep.aggregate_l_rmse - mean) < 1e-12);
}

TEST_CASE("error injected at the first step never lowers the aggregate error") {
    // slowly drifting smooth truth: the identity model tracks it closely, so
    // injected noise is near-orthogonal to the residual and can only hurt
    const Field base = band_limited_field(1, 1, 10, 3, 300);
    const Field trend = band_limited_field(1, 1, 10, 3, 301);
    std::vector<Field> slices;
    for (int t = 0; t < 5; ++t) {
        Field s = base;
        for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] += 0.02 * t * trend.data[i];
        slices.push_back(s);
    }
    Trajectory traj = trajectory_from(slices);
    Model model = identity_model();
    const double base_err = rollout_eval(model, {traj}, 4).aggregate_l_rmse;

    for (int seed = 0; seed < 20; ++seed) {
        // manual rollout with noise added to the step-1 output
        Field u = traj.field_at(0);
        Rng rng(7000 + seed);
        double total = 0.0;
        for (int s = 0; s < 4; ++s) {
            u = model.step(u);
            if (s == 0)
                for (auto& v : u.data) v += 0.1 * rng.uniform(-1, 1);
            total += rel_diff(u, traj.field_at(s + 1));
        }
        CHECK(total / 4.0 >= base_err - 1e-12);
    }
}

TEST_CASE("superres on band-limited data reproduces the coarse error") {
    const int n_lo = 32, n_hi = 64, m = 3;
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.d_z = 3;
    cfg.m = m;
    cfg.activation = Activation::None;
    Model model(cfg);
    model.init_params(9);

    // band-limited truth trajectory and its exact spectral upsampling
    std::vector<Field> lo, hi;
    for (int t = 0; t < 4; ++t) {
        Field f = band_limited_field(1, 1, n_lo, m, 500 + t);
        lo.push_back(f);
        ComplexField fine =
            ifftshift(pad_modes(crop_modes(fftshift(fft2(f)), m), n_hi, n_hi));
        const double scale =
            static_cast<double>(n_hi) * n_hi / (static_cast<double>(n_lo) * n_lo);
        for (auto& v : fine.data) v *= scale;
        hi.push_back(ifft2(fine));
    }
    EvalReport coarse = rollout_eval(model, {trajectory_from(lo)}, 3);
    EvalReport fine = superres_eval(model, {trajectory_from(hi)}, 3);
    CHECK(std::abs(coarse.aggregate_l_rmse - fine.aggregate_l_rmse) < 1e-6);

    // same resolution reduces to rollout_eval exactly
    EvalReport same = superres_eval(model, {trajectory_from(lo)}, 3);
    CHECK(std::abs(same.aggregate_l_rmse - coarse.aggregate_l_rmse) < 1e-12);
}

TEST_CASE("superres runs at four times the training resolution") {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.d_z = 2;
    cfg.m = 5;
    Model model(cfg);
    model.init_params(3);
    std::vector<Field> slices;
    for (int t = 0; t < 3; ++t) slices.push_back(random_field(1, 1, 64, 64, 600 + t));
    EvalReport rep = superres_eval(model, {trajectory_from(slices)}, 2);
    CHECK(rep.steps.size() == 2);

    // and rejects grids the block does not fit
    std::vector<Field> tiny;
    for (int t = 0; t < 3; ++t) tiny.push_back(random_field(1, 1, 8, 8, 700 + t));
    CHECK_THROWS_AS(superres_eval(model, {trajectory_from(tiny)}, 2), ModeOverflow);
}

} // TEST_SUITE
