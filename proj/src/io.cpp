#include "pefnn/io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pefnn {

using nlohmann::json;

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

// ---------------------------------------------------------------------------
// low-level binary helpers (the formats are little-endian by contract; this
// code targets little-endian hosts and verifies that at compile time)
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "dataset/checkpoint formats are little-endian");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    out.append(reinterpret_cast<const char*>(&v), 8);
}

std::uint32_t take_u32(const std::string& s, std::size_t& off) {
    if (off + 4 > s.size()) throw DataError("unexpected end of file");
    std::uint32_t v;
    std::memcpy(&v, s.data() + off, 4);
    off += 4;
    return v;
}

std::uint64_t take_u64(const std::string& s, std::size_t& off) {
    if (off + 8 > s.size()) throw DataError("unexpected end of file");
    std::uint64_t v;
    std::memcpy(&v, s.data() + off, 8);
    off += 8;
    return v;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open '" + tmp + "' for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
    write_file_atomic(path, content);
}

std::string read_text(const std::string& path) { return read_file(path); }

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

void write_dataset(const std::string& path, const Dataset& data, bool store_f64,
                   const std::string& sidecar_json) {
    if (data.empty()) throw DataError("write_dataset: empty dataset");
    const Trajectory& first = data[0];
    for (const auto& traj : data)
        if (traj.t != first.t || traj.c != first.c || traj.h != first.h || traj.w != first.w)
            throw DataError("write_dataset: trajectories must share one shape");

    std::string out;
    out.reserve(64 + data.size() * first.data.size() * (store_f64 ? 8 : 4));
    out.append("PEFN", 4);
    put_u32(out, 1); // format version
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    put_u32(out, static_cast<std::uint32_t>(first.t));
    put_u32(out, static_cast<std::uint32_t>(first.c));
    put_u32(out, static_cast<std::uint32_t>(first.h));
    put_u32(out, static_cast<std::uint32_t>(first.w));
    out.push_back(store_f64 ? char(1) : char(0));
    out.append(7, char(0)); // reserved

    const std::size_t payload_start = out.size();
    for (const auto& traj : data) {
        if (store_f64) {
            out.append(reinterpret_cast<const char*>(traj.data.data()),
                       traj.data.size() * sizeof(double));
        } else {
            for (double v : traj.data) {
                const float f = static_cast<float>(v);
                out.append(reinterpret_cast<const char*>(&f), sizeof(float));
            }
        }
    }
    put_u32(out, crc32(out.data() + payload_start, out.size() - payload_start));
    write_file_atomic(path, out);

    json side;
    if (!sidecar_json.empty()) side = json::parse(sidecar_json);
    side["dt_record"] = first.dt_record;
    side["dx"] = first.dx;
    side["dy"] = first.dy;
    side["channel_names"] = first.channel_names;
    write_file_atomic(path + ".json", side.dump(2) + "\n");
}

DatasetInfo peek_dataset(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 36 + 4 || s.compare(0, 4, "PEFN") != 0)
        throw DataError("'" + path + "' is not a dataset file (bad magic)");
    std::size_t off = 4;
    DatasetInfo info;
    info.version = take_u32(s, off);
    if (info.version != 1)
        throw DataError("unsupported dataset format version " + std::to_string(info.version));
    info.n_trajectories = take_u32(s, off);
    info.t = take_u32(s, off);
    info.channels = take_u32(s, off);
    info.h = take_u32(s, off);
    info.w = take_u32(s, off);
    info.f64 = s[off] != 0;
    return info;
}

Dataset read_dataset(const std::string& path) {
    const std::string s = read_file(path);
    const DatasetInfo info = peek_dataset(path);
    const std::size_t per =
        static_cast<std::size_t>(info.t) * info.channels * info.h * info.w;
    const std::size_t elem = info.f64 ? 8 : 4;
    const std::size_t payload = per * info.n_trajectories * elem;
    if (s.size() != 36 + payload + 4)
        throw DataError("dataset '" + path + "': declared sizes do not match file length");
    const std::uint32_t want = crc32(s.data() + 36, payload);
    std::uint32_t got;
    std::memcpy(&got, s.data() + 36 + payload, 4);
    if (want != got)
        throw DataError("dataset '" + path + "': CRC mismatch (corrupted payload)");

    double dt_record = 1.0, dx = 1.0, dy = 1.0;
    std::vector<std::string> names;
    {
        std::ifstream side(path + ".json");
        if (side) {
            json j = json::parse(side, nullptr, false);
            if (!j.is_discarded()) {
                dt_record = j.value("dt_record", 1.0);
                dx = j.value("dx", 1.0);
                dy = j.value("dy", 1.0);
                if (j.contains("channel_names"))
                    names = j["channel_names"].get<std::vector<std::string>>();
            }
        }
    }

    Dataset data;
    data.reserve(info.n_trajectories);
    const char* p = s.data() + 36;
    for (std::uint32_t k = 0; k < info.n_trajectories; ++k) {
        Trajectory traj(static_cast<int>(info.t), static_cast<int>(info.channels),
                        static_cast<int>(info.h), static_cast<int>(info.w));
        traj.dt_record = dt_record;
        traj.dx = dx;
        traj.dy = dy;
        traj.channel_names = names;
        if (info.f64) {
            std::memcpy(traj.data.data(), p, per * 8);
            p += per * 8;
        } else {
            for (std::size_t i = 0; i < per; ++i) {
                float f;
                std::memcpy(&f, p, 4);
                p += 4;
                traj.data[i] = static_cast<double>(f);
            }
        }
        data.push_back(std::move(traj));
    }
    return data;
}

// ---------------------------------------------------------------------------
// model config <-> json
// ---------------------------------------------------------------------------

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["n_layers"] = cfg.n_layers;
    j["d_z"] = cfg.d_z;
    j["m"] = cfg.m;
    j["kernel_mode"] = kernel_mode_name(cfg.kernel_mode);
    j["d_g"] = cfg.d_g;
    j["in_channels"] = cfg.in_channels;
    j["out_channels"] = cfg.out_channels;
    j["dt"] = cfg.dt;
    j["integrator"] = integrator_name(cfg.integrator);
    j["pad"] = cfg.pad;
    j["activation"] = activation_name(cfg.activation);
    j["fusion_scale"] = cfg.fusion_scale;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig cfg;
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.d_z = j.at("d_z").get<int>();
    cfg.m = j.at("m").get<int>();
    cfg.kernel_mode = kernel_mode_from_name(j.at("kernel_mode").get<std::string>());
    cfg.d_g = j.at("d_g").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.out_channels = j.at("out_channels").get<int>();
    cfg.dt = j.at("dt").get<double>();
    cfg.integrator = integrator_from_name(j.at("integrator").get<std::string>());
    cfg.pad = j.at("pad").get<int>();
    cfg.activation = activation_from_name(j.at("activation").get<std::string>());
    cfg.fusion_scale = j.at("fusion_scale").get<double>();
    return cfg;
}

std::string diff_configs(const ModelConfig& a, const ModelConfig& b) {
    std::ostringstream os;
    auto cmp = [&](const char* name, auto va, auto vb) {
        if (va != vb) os << "  " << name << ": " << va << " vs " << vb << "\n";
    };
    cmp("n_layers", a.n_layers, b.n_layers);
    cmp("d_z", a.d_z, b.d_z);
    cmp("m", a.m, b.m);
    cmp("kernel_mode", kernel_mode_name(a.kernel_mode), kernel_mode_name(b.kernel_mode));
    cmp("d_g", a.d_g, b.d_g);
    cmp("in_channels", a.in_channels, b.in_channels);
    cmp("out_channels", a.out_channels, b.out_channels);
    cmp("dt", a.dt, b.dt);
    cmp("integrator", integrator_name(a.integrator), integrator_name(b.integrator));
    cmp("pad", a.pad, b.pad);
    cmp("activation", activation_name(a.activation), activation_name(b.activation));
    cmp("fusion_scale", a.fusion_scale, b.fusion_scale);
    return os.str();
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Model& model,
                     const AdamState* optimizer, int epochs_done,
                     const std::string& history_digest) {
    json meta;
    meta["format_version"] = 1;
    meta["config"] = json::parse(model_config_to_json(model.config()));
    json manifest = json::array();
    for (const auto& e : model.params().manifest())
        manifest.push_back({{"name", e.name}, {"offset", e.offset}, {"shape", e.shape}});
    meta["manifest"] = manifest;
    meta["epochs_done"] = epochs_done;
    meta["history_digest"] = history_digest;
    meta["has_optimizer"] = optimizer != nullptr && optimizer->initialized();
    const std::string meta_text = meta.dump();

    std::string out;
    out.append("PEFC", 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out.append(meta_text);
    const auto& values = model.params().values;
    put_u64(out, values.size());
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * 8);
    if (optimizer != nullptr && optimizer->initialized()) {
        put_u64(out, static_cast<std::uint64_t>(optimizer->steps));
        out.append(reinterpret_cast<const char*>(optimizer->m.data()),
                   optimizer->m.size() * 8);
        out.append(reinterpret_cast<const char*>(optimizer->v.data()),
                   optimizer->v.size() * 8);
    }
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 12 || s.compare(0, 4, "PEFC") != 0)
        throw DataError("'" + path + "' is not a checkpoint (bad magic)");
    std::size_t off = 4;
    const std::uint32_t version = take_u32(s, off);
    if (version != 1)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t meta_len = take_u32(s, off);
    if (off + meta_len > s.size()) throw DataError("checkpoint metadata truncated");
    json meta = json::parse(s.substr(off, meta_len));
    off += meta_len;

    Checkpoint ckpt;
    ckpt.config = model_config_from_json(meta.at("config").dump());
    ckpt.epochs_done = meta.value("epochs_done", 0);
    ckpt.history_digest = meta.value("history_digest", "");

    const std::uint64_t count = take_u64(s, off);
    if (off + count * 8 > s.size()) throw DataError("checkpoint parameter block truncated");
    ckpt.values.resize(count);
    std::memcpy(ckpt.values.data(), s.data() + off, count * 8);
    off += count * 8;

    if (meta.value("has_optimizer", false)) {
        AdamState st;
        st.steps = static_cast<long>(take_u64(s, off));
        st.m.resize(count);
        st.v.resize(count);
        if (off + 2 * count * 8 > s.size())
            throw DataError("checkpoint optimizer block truncated");
        std::memcpy(st.m.data(), s.data() + off, count * 8);
        off += count * 8;
        std::memcpy(st.v.data(), s.data() + off, count * 8);
        off += count * 8;
        ckpt.optimizer = std::move(st);
    }

    // manifest consistency against a freshly-built layout
    ModelParams fresh(ckpt.config);
    if (fresh.size() != ckpt.values.size())
        throw DataError("checkpoint parameter count " + std::to_string(ckpt.values.size()) +
                        " does not match config layout " + std::to_string(fresh.size()));
    const json& manifest = meta.at("manifest");
    if (manifest.size() != fresh.manifest().size())
        throw DataError("checkpoint manifest length mismatch");
    for (std::size_t i = 0; i < fresh.manifest().size(); ++i) {
        if (manifest[i].at("name").get<std::string>() != fresh.manifest()[i].name ||
            manifest[i].at("offset").get<std::size_t>() != fresh.manifest()[i].offset)
            throw DataError("checkpoint manifest entry '" +
                            manifest[i].at("name").get<std::string>() +
                            "' does not match the config layout");
    }
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model model(ckpt.config);
    model.params().values = ckpt.values;
    return model;
}

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig rc;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto ltrim = line.find_first_not_of(" \t\r\n");
        if (ltrim == std::string::npos) continue;
        const auto rtrim = line.find_last_not_of(" \t\r\n");
        line = line.substr(ltrim, rtrim - ltrim + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) +
                                           ": empty key");
        if (rc.kv_.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        rc.kv_[key] = value;
    }
    return rc;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_text(read_file(path));
}

std::string RunConfig::get(const std::string& key, const std::string& def) const {
    consumed_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

int RunConfig::get_int(const std::string& key, int def) const {
    const std::string v = get(key, "");
    if (v.empty()) return def;
    try {
        std::size_t pos;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' = '" + v + "' is not an integer");
    }
}

double RunConfig::get_double(const std::string& key, double def) const {
    const std::string v = get(key, "");
    if (v.empty()) return def;
    try {
        std::size_t pos;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' = '" + v + "' is not a number");
    }
}

bool RunConfig::get_bool(const std::string& key, bool def) const {
    const std::string v = get(key, "");
    if (v.empty()) return def;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' = '" + v + "' is not a boolean");
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t def) const {
    const std::string v = get(key, "");
    if (v.empty()) return def;
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' = '" + v + "' is not an integer");
    }
}

void RunConfig::allow_prefixes(const std::vector<std::string>& prefixes) const {
    for (const auto& [key, value] : kv_)
        for (const auto& p : prefixes)
            if (key.rfind(p, 0) == 0) {
                consumed_.insert(key);
                break;
            }
}

void RunConfig::ensure_all_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : kv_)
        if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
        throw ConfigError("config: unknown keys (typo?): " + unknown);
}

ModelConfig read_model_config(const RunConfig& rc) {
    ModelConfig cfg;
    cfg.n_layers = rc.get_int("model.layers", cfg.n_layers);
    cfg.d_z = rc.get_int("model.d_z", cfg.d_z);
    cfg.m = rc.get_int("model.modes", cfg.m);
    cfg.kernel_mode = kernel_mode_from_name(
        rc.get("model.kernel", kernel_mode_name(cfg.kernel_mode)));
    cfg.d_g = rc.get_int("model.group", cfg.d_g);
    cfg.in_channels = rc.get_int("model.in_channels", cfg.in_channels);
    cfg.out_channels = rc.get_int("model.out_channels", cfg.out_channels);
    cfg.dt = rc.get_double("model.dt", cfg.dt);
    cfg.integrator =
        integrator_from_name(rc.get("model.integrator", integrator_name(cfg.integrator)));
    cfg.pad = rc.get_int("model.pad", cfg.pad);
    cfg.activation =
        activation_from_name(rc.get("model.activation", activation_name(cfg.activation)));
    cfg.fusion_scale = rc.get_double("model.fusion_scale", cfg.fusion_scale);
    cfg.validate();
    return cfg;
}

TrainConfig read_train_config(const RunConfig& rc) {
    TrainConfig cfg;
    cfg.strategy = strategy_from_name(rc.get("train.strategy", strategy_name(cfg.strategy)));
    cfg.epochs = rc.get_int("train.epochs", cfg.epochs);
    cfg.batch_size = rc.get_int("train.batch_size", cfg.batch_size);
    cfg.lr0 = rc.get_double("train.lr0", cfg.lr0);
    cfg.beta1 = rc.get_double("train.beta1", cfg.beta1);
    cfg.beta2 = rc.get_double("train.beta2", cfg.beta2);
    cfg.weight_decay = rc.get_double("train.weight_decay", cfg.weight_decay);
    cfg.seed = rc.get_u64("train.seed", cfg.seed);
    cfg.grad_clip = rc.get_double("train.grad_clip", cfg.grad_clip);
    cfg.t_roll = rc.get_int("train.t_roll", cfg.t_roll);
    cfg.validate();
    return cfg;
}

} // namespace pefnn
