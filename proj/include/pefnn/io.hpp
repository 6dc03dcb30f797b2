#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "pefnn/model.hpp"
#include "pefnn/training.hpp"

namespace pefnn {

/// CRC-32 (reflected 0xEDB88320, zlib convention).
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

// ---------------------------------------------------------------------------
// Dataset files: magic "PEFN", version, counts, dtype, payload (traj, t, c,
// y, x) little-endian, CRC32 footer over the payload. A JSON sidecar at
// <path>.json carries grid spacing, record cadence, channel names and the
// resolved generator config.
// ---------------------------------------------------------------------------

struct DatasetInfo {
    std::uint32_t version = 1;
    std::uint32_t n_trajectories = 0, t = 0, channels = 0, h = 0, w = 0;
    bool f64 = false;
};

void write_dataset(const std::string& path, const Dataset& data, bool store_f64 = false,
                   const std::string& sidecar_json = "");
Dataset read_dataset(const std::string& path);
DatasetInfo peek_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Checkpoints: model config + named flat parameter vector, optional
// optimizer state, training-history digest. Round trips are bit-exact.
// ---------------------------------------------------------------------------

struct Checkpoint {
    ModelConfig config;
    std::vector<double> values;
    std::optional<AdamState> optimizer;
    int epochs_done = 0;
    std::string history_digest;
};

void save_checkpoint(const std::string& path, const Model& model,
                     const AdamState* optimizer = nullptr, int epochs_done = 0,
                     const std::string& history_digest = "");
Checkpoint load_checkpoint(const std::string& path);

/// Rebuild a model from a checkpoint (validates the manifest layout).
Model model_from_checkpoint(const Checkpoint& ckpt);

/// Human-readable field-by-field difference of two configs; empty when equal.
std::string diff_configs(const ModelConfig& a, const ModelConfig& b);

ModelConfig model_config_from_json(const std::string& json_text);
std::string model_config_to_json(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Plain-text key = value run configuration. Every key a command supports is
// consumed through get(); unconsumed keys are typos and a hard error.
// ---------------------------------------------------------------------------

class RunConfig {
public:
    RunConfig() = default;
    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    std::string get(const std::string& key, const std::string& def) const;
    int get_int(const std::string& key, int def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    /// Marks every key under the given section prefixes as consumed.
    /// Commands call this for the sections other commands own, so one config
    /// file can cover the whole pipeline while typos in a command's own
    /// section stay hard errors.
    void allow_prefixes(const std::vector<std::string>& prefixes) const;

    /// Throws ConfigError naming every key that was never consumed.
    void ensure_all_consumed() const;

    /// Resolved key/value view (for metadata sidecars).
    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
    mutable std::set<std::string> consumed_;
};

/// Shared config-block readers used by the CLI and the acceptance suite.
ModelConfig read_model_config(const RunConfig& rc);
TrainConfig read_train_config(const RunConfig& rc);

/// Atomic text-file write (temp + rename).
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

} // namespace pefnn
