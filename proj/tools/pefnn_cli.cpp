// pefnn - spectral neural PDE surrogate toolkit
//
// Subcommands: gen-ns / gen-swe / gen-flood (reference-solver datasets),
// train, eval / rollout / superres (evaluation protocols), gradcheck.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure, 5 I/O.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pefnn/fft.hpp"
#include "pefnn/io.hpp"
#include "pefnn/metrics.hpp"
#include "pefnn/solvers.hpp"

using namespace pefnn;
using nlohmann::json;

namespace {

json config_echo(const RunConfig& rc, const std::string& command) {
    json j;
    j["command"] = command;
    json cfg;
    for (const auto& [k, v] : rc.entries()) cfg[k] = v;
    j["config"] = cfg;
    return j;
}

void write_sidecar(const std::string& out_path, const json& j) {
    write_text_atomic(out_path + ".json", j.dump(2) + "\n");
}

bool read_dtype_f64(const RunConfig& rc) {
    const std::string dtype = rc.get("data.dtype", "f32");
    if (dtype == "f32") return false;
    if (dtype == "f64") return true;
    throw ConfigError("data.dtype must be f32 or f64, got '" + dtype + "'");
}

// ---------------------------------------------------------------------------
// dataset generation
// ---------------------------------------------------------------------------

int cmd_gen_ns(const std::string& config_path, const std::string& out_path) {
    RunConfig rc = RunConfig::from_file(config_path);
    NSConfig cfg;
    cfg.n = rc.get_int("ns.grid", 64);
    cfg.viscosity = rc.get_double("ns.viscosity", 1e-3);
    cfg.horizon = rc.get_double("ns.horizon", 50.0);
    cfg.record_dt = rc.get_double("ns.record_dt", 1.0);
    cfg.forcing_amplitude = rc.get_double("ns.forcing_amplitude", 0.1);
    cfg.alpha_grf = rc.get_double("ns.grf_alpha", 2.5);
    cfg.tau_grf = rc.get_double("ns.grf_tau", 7.0);
    const int n_traj = rc.get_int("ns.trajectories", 20);
    const std::uint64_t seed = rc.get_u64("ns.seed", 0);
    const bool f64 = read_dtype_f64(rc);
    rc.allow_prefixes({"model.", "train.", "swe.", "flood."});
    rc.ensure_all_consumed();
    cfg.validate();

    Dataset data;
    data.reserve(n_traj);
    for (int k = 0; k < n_traj; ++k) {
        cfg.seed = Rng::derive(seed, k);
        data.push_back(ns_solve(grf_sample(cfg), cfg));
    }
    write_dataset(out_path, data, f64, config_echo(rc, "gen-ns").dump());
    std::printf("gen-ns: %d trajectories, grid %dx%d, %d slices every %g -> %s\n", n_traj,
                cfg.n, cfg.n, data[0].t, cfg.record_dt, out_path.c_str());
    return 0;
}

int cmd_gen_swe(const std::string& config_path, const std::string& out_path) {
    RunConfig rc = RunConfig::from_file(config_path);
    SWEConfig cfg;
    cfg.n = rc.get_int("swe.grid", 128);
    cfg.records = rc.get_int("swe.records", 25);
    cfg.t_end = rc.get_double("swe.t_end", 1.0);
    cfg.gravity = rc.get_double("swe.gravity", 1.0);
    cfg.cfl_safety = rc.get_double("swe.cfl", 0.4);
    cfg.supersample = rc.get_int("swe.supersample", 2);
    const int n_traj = rc.get_int("swe.trajectories", 20);
    const std::uint64_t seed = rc.get_u64("swe.seed", 0);
    const bool f64 = read_dtype_f64(rc);
    rc.allow_prefixes({"model.", "train.", "ns.", "flood."});
    rc.ensure_all_consumed();

    Dataset data;
    data.reserve(n_traj);
    for (int k = 0; k < n_traj; ++k) {
        cfg.dam_radius = sample_dam_radius(Rng::derive(seed, k));
        cfg.seed = Rng::derive(seed, k);
        data.push_back(swe_dambreak_solve(cfg));
    }
    write_dataset(out_path, data, f64, config_echo(rc, "gen-swe").dump());
    std::printf("gen-swe: %d trajectories, grid %dx%d, %d slices over t=(0,%g] -> %s\n",
                n_traj, cfg.n, cfg.n, cfg.records, cfg.t_end, out_path.c_str());
    return 0;
}

int cmd_gen_flood(const std::string& config_path, const std::string& out_path) {
    RunConfig rc = RunConfig::from_file(config_path);
    const int n = rc.get_int("flood.grid", 64);
    const std::string dem_kind = rc.get("flood.dem", "valley");
    const double manning = rc.get_double("flood.manning", 0.05);
    const double rain_mmh = rc.get_double("flood.rain_mmh", 20.0);
    const double rain_hours = rc.get_double("flood.rain_hours", 1.0);
    const double horizon_h = rc.get_double("flood.horizon_hours", 2.0);
    const double record_s = rc.get_double("flood.record_seconds", 30.0);
    const double dx = rc.get_double("flood.dx", 480.0);
    const double theta = rc.get_double("flood.theta", 0.7);
    const double alpha = rc.get_double("flood.alpha", 0.7);
    const bool open_bc = rc.get_bool("flood.open_boundaries", true);
    const double inflow_q = rc.get_double("flood.inflow_discharge", 0.0);
    const int n_traj = rc.get_int("flood.trajectories", 8);
    const std::uint64_t seed = rc.get_u64("flood.seed", 0);
    const bool f64 = read_dtype_f64(rc);
    rc.allow_prefixes({"model.", "train.", "ns.", "swe."});
    rc.ensure_all_consumed();

    Dataset data;
    FloodStats stats_last;
    for (int k = 0; k < n_traj; ++k) {
        const std::uint64_t tseed = Rng::derive(seed, k);
        FloodConfig cfg;
        cfg.dem = make_synthetic_dem(dem_kind, n, tseed);
        cfg.dx = dx;
        cfg.theta = theta;
        cfg.alpha = alpha;
        cfg.manning = Field(1, 1, n, n);
        for (auto& v : cfg.manning.data) v = manning;
        cfg.horizon = horizon_h * 3600.0;
        cfg.record_every = record_s;
        cfg.open_boundaries = open_bc;
        // storm pulse: spatially smooth rain, per-trajectory intensity
        Rng rng(Rng::derive(tseed, 1));
        const double scale = rng.uniform(0.5, 1.5);
        cfg.rain = Field(1, 1, n, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double u = (i + 0.5) / n, v = (j + 0.5) / n;
                const double bump =
                    1.0 + 0.5 * std::sin(2 * M_PI * (u + rng.uniform(0, 0.0))) *
                              std::sin(M_PI * v);
                cfg.rain.at(0, 0, j, i) = scale * rain_mmh * 1e-3 / 3600.0 * bump;
            }
        cfg.rain_end = rain_hours * 3600.0;
        if (inflow_q > 0.0) {
            FloodInflow in;
            in.side = FloodInflow::Side::North;
            const int w0 = n / 2 - n / 16, w1 = n / 2 + n / 16;
            for (int i = w0; i < w1; ++i) in.cells.push_back(i);
            in.time = {0.0, cfg.horizon};
            in.discharge = {inflow_q, inflow_q};
            cfg.inflow = in;
        }
        data.push_back(flood_solve(cfg, &stats_last));
    }
    json echo = config_echo(rc, "gen-flood");
    echo["theta"] = theta;
    echo["alpha"] = alpha;
    echo["last_run"] = {{"steps", stats_last.steps},
                        {"final_volume_m3", stats_last.final_volume},
                        {"rain_volume_m3", stats_last.rain_volume},
                        {"outflow_volume_m3", stats_last.outflow_volume},
                        {"clamped_volume_m3", stats_last.clamped_volume}};
    write_dataset(out_path, data, f64, echo.dump());
    std::printf("gen-flood: %d trajectories, grid %dx%d, %d slices every %gs -> %s\n",
                n_traj, n, n, data[0].t, record_s, out_path.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainOverrides {
    int epochs = -1;       // -1: use config
    std::string strategy;  // empty: use config
    int t_roll = -1;
    int stop_after = -1;   // stop after N epochs (schedule still spans epochs)
};

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, const std::string& resume_path,
              std::string history_path, const TrainOverrides& ov) {
    RunConfig rc = RunConfig::from_file(config_path);
    Dataset all = read_dataset(data_path);
    if (all.empty()) throw DataError("train: dataset is empty");

    // dataset channel counts are the defaults; the config may override
    ModelConfig mc = read_model_config(rc);
    if (!rc.has("model.in_channels")) mc.in_channels = all[0].c;
    if (!rc.has("model.out_channels")) mc.out_channels = all[0].c;
    TrainConfig tc = read_train_config(rc);
    const double valid_fraction = rc.get_double("train.valid_fraction", 0.1);
    rc.allow_prefixes({"ns.", "swe.", "flood.", "data."});
    rc.ensure_all_consumed();
    if (ov.epochs >= 0) tc.epochs = ov.epochs;
    if (!ov.strategy.empty()) tc.strategy = strategy_from_name(ov.strategy);
    if (ov.t_roll >= 0) tc.t_roll = ov.t_roll;

    int n_valid = static_cast<int>(std::lround(valid_fraction * all.size()));
    if (all.size() >= 2 && valid_fraction > 0.0) n_valid = std::max(1, n_valid);
    n_valid = std::min<int>(n_valid, static_cast<int>(all.size()) - 1);
    Dataset train_set(all.begin(), all.end() - n_valid);
    Dataset valid_set(all.end() - n_valid, all.end());

    Model model(mc);
    model.init_params(tc.seed);
    AdamState opt;
    opt.init(model.params().size());
    int start_epoch = 0;

    if (!resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_path);
        const std::string diff = diff_configs(ckpt.config, mc);
        if (!diff.empty())
            throw ConfigError("train: checkpoint config differs from the requested one:\n" +
                              diff);
        model.params().values = ckpt.values;
        if (ckpt.optimizer) opt = *ckpt.optimizer;
        start_epoch = ckpt.epochs_done;
    }

    TrainHistory history;
    std::vector<double> best_values = model.params().values;
    double best_valid = 1e300;
    int best_epoch = start_epoch;
    const int last_epoch =
        ov.stop_after >= 0 ? std::min(tc.epochs, start_epoch + ov.stop_after) : tc.epochs;

    for (int epoch = start_epoch; epoch < last_epoch; ++epoch) {
        TrainHistory part =
            tc.strategy == Strategy::Markov
                ? train_markov(model, train_set, valid_set.empty() ? nullptr : &valid_set,
                               tc, &opt, epoch, epoch + 1)
                : train_recurrent(model, train_set,
                                  valid_set.empty() ? nullptr : &valid_set, tc, &opt, epoch,
                                  epoch + 1);
        history.epochs.push_back(part.epochs.front());
        const auto& e = history.epochs.back();
        if (e.valid_loss < best_valid) {
            best_valid = e.valid_loss;
            best_values = model.params().values;
            best_epoch = epoch + 1;
        }
        std::printf("epoch %4d  lr %.3e  train %.6e  valid %.6e\n", e.epoch, e.lr,
                    e.train_loss, e.valid_loss);
    }

    std::ostringstream csv;
    history.write_csv(csv);
    if (history_path.empty()) history_path = out_path + ".history.csv";
    write_text_atomic(history_path, csv.str());

    std::ostringstream digest;
    if (!history.epochs.empty())
        digest << "epochs=" << history.epochs.size()
               << ";final_train=" << history.epochs.back().train_loss
               << ";best_valid=" << best_valid << ";history_crc="
               << crc32(csv.str().data(), csv.str().size());

    // <out>.last carries the final state and optimizer for bit-exact resume;
    // <out> carries the best-validation parameters
    save_checkpoint(out_path + ".last", model, &opt, last_epoch, digest.str());
    if (!history.epochs.empty()) model.params().values = best_values;
    save_checkpoint(out_path, model, nullptr, history.epochs.empty() ? 0 : best_epoch,
                    digest.str());

    json side = config_echo(rc, "train");
    side["dataset"] = data_path;
    side["trajectories_train"] = train_set.size();
    side["trajectories_valid"] = valid_set.size();
    side["best_valid"] = history.epochs.empty() ? -1.0 : best_valid;
    side["best_epoch"] = best_epoch;
    write_sidecar(out_path, side);
    std::printf("train: saved %s (best valid %.6e at epoch %d)\n", out_path.c_str(),
                history.epochs.empty() ? -1.0 : best_valid, best_epoch);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& out_path, int start, int steps, bool superres,
             const std::string& dump_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Model model = model_from_checkpoint(ckpt);
    Dataset data = read_dataset(data_path);
    if (data.empty()) throw DataError("eval: dataset is empty");
    if (steps <= 0) steps = data[0].t - 1 - start;

    Dataset predictions;
    EvalReport rep = superres
                         ? superres_eval(model, data, steps, start)
                         : rollout_eval(model, data, steps, start,
                                        dump_path.empty() ? nullptr : &predictions);

    std::ostringstream csv;
    rep.write_csv(csv);
    write_text_atomic(out_path, csv.str());

    json side;
    side["command"] = superres ? "superres" : "eval";
    side["checkpoint"] = ckpt_path;
    side["dataset"] = data_path;
    side["start"] = start;
    side["steps"] = steps;
    side["aggregate_l_rmse"] = rep.aggregate_l_rmse;
    side["momentum_loss_mean"] = rep.momentum_loss_mean;
    side["momentum_loss_final"] = rep.momentum_loss_final;
    side["wall_seconds"] = rep.wall_seconds;
    write_sidecar(out_path, side);

    if (!dump_path.empty())
        write_dataset(dump_path, predictions, true, side.dump());

    std::printf("%s: L_RMSE %.6e, momentum loss mean %.6e final %.6e (%.2fs)\n",
                superres ? "superres" : "eval", rep.aggregate_l_rmse,
                rep.momentum_loss_mean, rep.momentum_loss_final, rep.wall_seconds);
    return 0;
}

// ---------------------------------------------------------------------------
// gradient check
// ---------------------------------------------------------------------------

double gradcheck_mode(KernelMode mode, bool corrupt, double& recurrent_worst) {
    ModelConfig mc;
    mc.n_layers = 2;
    mc.d_z = 3;
    mc.m = 2;
    mc.d_g = mode == KernelMode::MultipleRotation ? 4 : 1;
    mc.kernel_mode = mode;
    mc.dt = 0.7;
    Model model(mc);
    model.init_params(61);

    // synthetic band-limited pair data
    Dataset data;
    for (int k = 0; k < 2; ++k) {
        Trajectory traj(4, 1, 8, 8);
        Rng rng(100 + k);
        ComplexField spec(1, 1, 8, 8);
        for (int ky = -2; ky <= 2; ++ky)
            for (int kx = -2; kx <= 2; ++kx) {
                if (ky == 0 && kx == 0) continue;
                const cdouble v(rng.uniform(-1, 1), rng.uniform(-1, 1));
                spec.at(0, 0, (ky + 8) % 8, (kx + 8) % 8) = v;
                spec.at(0, 0, (8 - ky) % 8, (8 - kx) % 8) = std::conj(v);
            }
        Field u = ifft2(spec);
        for (int t = 0; t < 4; ++t) {
            std::copy(u.data.begin(), u.data.end(), traj.slice(t, 0));
            for (auto& v : u.data) v += 0.05 * v * v;
        }
        data.push_back(std::move(traj));
    }

    const double eps = 1e-5;
    auto check_path = [&](auto&& loss_grad, int n_slots) {
        std::vector<double> grads(model.params().size(), 0.0);
        loss_grad(grads);
        if (corrupt) {
            // negative control: break one adjoint entry
            std::size_t worst_slot = 0;
            for (std::size_t i = 0; i < grads.size(); ++i)
                if (std::abs(grads[i]) > std::abs(grads[worst_slot])) worst_slot = i;
            grads[worst_slot] *= 1.1;
        }
        Rng pick(7);
        std::vector<double> dummy(model.params().size());
        double worst = 0.0;
        for (int trial = 0; trial < n_slots; ++trial) {
            const std::size_t slot =
                corrupt && trial == 0
                    ? [&] {
                          std::size_t w = 0;
                          for (std::size_t i = 0; i < grads.size(); ++i)
                              if (std::abs(grads[i]) > std::abs(grads[w])) w = i;
                          return w;
                      }()
                    : static_cast<std::size_t>(pick.uniform() * model.params().size());
            double& v = model.params().values[slot];
            const double save = v;
            std::fill(dummy.begin(), dummy.end(), 0.0);
            v = save + eps;
            const double jp = loss_grad(dummy);
            std::fill(dummy.begin(), dummy.end(), 0.0);
            v = save - eps;
            const double jm = loss_grad(dummy);
            v = save;
            const double fd = (jp - jm) / (2 * eps);
            const double ad = grads[slot];
            worst = std::max(worst, std::abs(fd - ad) /
                                        std::max({std::abs(fd), std::abs(ad), 1e-4}));
        }
        return worst;
    };

    const Field u0 = data[0].field_at(0);
    const Field u1 = data[0].field_at(1);
    const double markov_worst = check_path(
        [&](std::span<double> g) { return markov_loss_grad(model, u0, u1, g); }, 50);
    recurrent_worst = check_path(
        [&](std::span<double> g) {
            return rollout_loss_grad(model, data, {0, 1}, 3, g);
        },
        25);
    return markov_worst;
}

int cmd_gradcheck(bool corrupt) {
    double overall = 0.0;
    for (auto mode : {KernelMode::Dense, KernelMode::SingleRotation,
                      KernelMode::MultipleRotation}) {
        double rec_worst = 0.0;
        const double markov_worst = gradcheck_mode(mode, corrupt, rec_worst);
        std::printf("gradcheck %-8s  markov worst %.3e  recurrent(3-step) worst %.3e\n",
                    kernel_mode_name(mode), markov_worst, rec_worst);
        overall = std::max({overall, markov_worst, rec_worst});
    }
    std::printf("gradcheck overall worst relative error %.3e (threshold 1e-5)\n", overall);
    if (overall < 1e-5) {
        std::printf("gradcheck: PASS\n");
        return 0;
    }
    std::printf("gradcheck: FAIL\n");
    return 4;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"pefnn: momentum-conserving spectral PDE surrogate toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, ckpt_path, resume_path, history_path,
        dump_path;
    int start = 0, steps = 0;
    bool corrupt = false;
    TrainOverrides ov;

    auto* gen_ns = app.add_subcommand("gen-ns", "generate Navier-Stokes vorticity data");
    gen_ns->add_option("--config", config_path, "run config file")->required();
    gen_ns->add_option("--out", out_path, "output dataset path")->required();

    auto* gen_swe = app.add_subcommand("gen-swe", "generate shallow-water dam-break data");
    gen_swe->add_option("--config", config_path)->required();
    gen_swe->add_option("--out", out_path)->required();

    auto* gen_flood = app.add_subcommand("gen-flood", "generate synthetic flood data");
    gen_flood->add_option("--config", config_path)->required();
    gen_flood->add_option("--out", out_path)->required();

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--config", config_path)->required();
    train->add_option("--data", data_path)->required();
    train->add_option("--out", out_path, "checkpoint output path")->required();
    train->add_option("--resume", resume_path, "checkpoint (.last) to resume from");
    train->add_option("--history", history_path, "history CSV path");
    train->add_option("--epochs", ov.epochs, "override train.epochs");
    train->add_option("--strategy", ov.strategy, "override train.strategy");
    train->add_option("--t-roll", ov.t_roll, "override train.t_roll (recurrent rollout)");
    train->add_option("--stop-after", ov.stop_after,
                      "stop after N epochs (cosine schedule still spans train.epochs)");

    auto* eval = app.add_subcommand("eval", "rollout evaluation against ground truth");
    eval->add_option("--checkpoint", ckpt_path)->required();
    eval->add_option("--data", data_path)->required();
    eval->add_option("--out", out_path, "report CSV path")->required();
    eval->add_option("--start", start, "initial slice index");
    eval->add_option("--steps", steps, "rollout length (default: full horizon)");

    auto* rollout = app.add_subcommand("rollout", "eval with optional prediction dump");
    rollout->add_option("--checkpoint", ckpt_path)->required();
    rollout->add_option("--data", data_path)->required();
    rollout->add_option("--out", out_path)->required();
    rollout->add_option("--start", start);
    rollout->add_option("--steps", steps);
    rollout->add_option("--dump", dump_path, "write predictions as a dataset");

    auto* superres = app.add_subcommand("superres", "zero-shot super-resolution protocol");
    superres->add_option("--checkpoint", ckpt_path)->required();
    superres->add_option("--data", data_path, "fine-grid dataset")->required();
    superres->add_option("--out", out_path)->required();
    superres->add_option("--start", start);
    superres->add_option("--steps", steps);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference adjoint check");
    gradcheck->add_flag("--corrupt", corrupt,
                        "negative control: deliberately corrupt one gradient");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (gen_ns->parsed()) return cmd_gen_ns(config_path, out_path);
    if (gen_swe->parsed()) return cmd_gen_swe(config_path, out_path);
    if (gen_flood->parsed()) return cmd_gen_flood(config_path, out_path);
    if (train->parsed())
        return cmd_train(config_path, data_path, out_path, resume_path, history_path, ov);
    if (eval->parsed()) return cmd_eval(ckpt_path, data_path, out_path, start, steps, false, "");
    if (rollout->parsed())
        return cmd_eval(ckpt_path, data_path, out_path, start, steps, false, dump_path);
    if (superres->parsed())
        return cmd_eval(ckpt_path, data_path, out_path, start, steps, true, "");
    if (gradcheck->parsed()) return cmd_gradcheck(corrupt);
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const ShapeMismatch& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 5;
    } catch (const std::runtime_error& e) {
        // numeric family: NonFinite, Instability, DryCell, NegativeDepth,
        // ModeOverflow, ImaginaryResidue, ZeroReference, TapeConsumed, ...
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
