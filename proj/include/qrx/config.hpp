// JSON experiment configuration and channel-profile files.
//
// A profile file lists taps: {"name": "...", "taps": [{"delay_ns": ...,
// "power_db": ..., "k_factor_db": optional}, ...]}. An experiment file is
// versioned ("schema_version": 1) with sections: link, model, train, quant,
// eval; every CLI verb reads the sections it needs. See README for the full
// schema.

#pragma once

#include <json.hpp>

#include <filesystem>

#include "qrx/train.hpp"

namespace qrx {

using json = nlohmann::json;

inline ChannelProfile profile_from_json(const json& j, const std::string& source) {
    ChannelProfile p;
    try {
        p.name = j.at("name").get<std::string>();
        for (const auto& t : j.at("taps")) {
            ChannelTap tap;
            tap.delay_ns = t.at("delay_ns").get<double>();
            tap.power_db = t.at("power_db").get<double>();
            if (t.contains("k_factor_db")) tap.k_factor_db = t["k_factor_db"].get<double>();
            p.taps.push_back(tap);
        }
    } catch (const json::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }
    p.validate();
    return p;
}

inline ChannelProfile load_profile_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open profile file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return profile_from_json(j, path);
}

inline ChannelProfile load_profile(const std::string& dir, const std::string& name) {
    const auto path = std::filesystem::path(dir) / (name + ".json");
    if (!std::filesystem::exists(path))
        throw FileError("unknown channel profile '" + name + "' (no " + path.string() + ")");
    return load_profile_file(path.string());
}

struct VelocityBand {
    std::string name;
    double lo_mps = 0.0;
    double hi_mps = 0.0;
};

struct ReceiverSpec {
    std::string name;        // fp32|qat-4|qat-8|ptq-4|ptq-8|ls-lmmse|perfect-csi
    std::string model_path;  // empty for the classical receivers

    bool is_neural() const { return name != "ls-lmmse" && name != "perfect-csi"; }
};

inline void validate_receiver_name(const std::string& name) {
    static const char* allowed[] = {"fp32", "qat-4", "qat-8", "ptq-4",
                                    "ptq-8", "ls-lmmse", "perfect-csi"};
    for (const char* a : allowed)
        if (name == a) return;
    throw ConfigError("unknown receiver '" + name + "'");
}

struct EvalConfig {
    std::vector<std::string> profiles;  // test channel profiles
    std::vector<VelocityBand> bands = {{"low", 0.0, 5.1},
                                       {"medium", 10.0, 20.0},
                                       {"high", 25.0, 40.0}};
    std::vector<double> ebn0_grid;  // strictly increasing
    std::vector<ReceiverSpec> receivers;
    double delay_spread_ns = 50.0;
    int blocks_per_point = 600;
    int target_errors = 100;
    int max_decode_iters = 25;
    std::uint64_t seed = 7;
    bool record_blocks = false;  // keep per-block error flags (tests)

    void validate() const {
        if (profiles.empty()) throw ConfigError("eval: no channel profiles");
        if (bands.empty()) throw ConfigError("eval: no velocity bands");
        if (ebn0_grid.size() < 1) throw ConfigError("eval: empty Eb/N0 grid");
        for (std::size_t i = 1; i < ebn0_grid.size(); ++i)
            if (!(ebn0_grid[i] > ebn0_grid[i - 1]))
                throw ConfigError("eval: Eb/N0 grid must be strictly increasing");
        if (receivers.empty()) throw ConfigError("eval: at least one receiver required");
        for (const auto& r : receivers) validate_receiver_name(r.name);
        if (blocks_per_point < 100) throw ConfigError("eval: block budget must be >= 100");
        if (target_errors < 1) throw ConfigError("eval: target_errors must be >= 1");
        for (const auto& b : bands)
            if (b.hi_mps < b.lo_mps) throw ConfigError("eval: empty velocity band " + b.name);
    }
};

struct ExperimentConfig {
    LinkConfig link;
    TrainConfig train;
    std::vector<std::string> train_profiles = {"tdl_a", "tdl_c", "tdl_e"};
    std::vector<std::string> val_profiles = {"tdl_b", "tdl_d"};
    int model_blocks = 2;
    int model_width = 16;
    bool noise_plane = true;
    QuantSpec quant{4, Granularity::PerTensor};
    EvalConfig eval;
    std::string ldpc_alist = "data/ldpc/n648_r12.alist";
    std::string profiles_dir = "configs/profiles";

    void validate() const {
        link.validate();
        train.validate();
        quant.validate();
        eval.validate();
        if (train_profiles.empty() || val_profiles.empty())
            throw ConfigError("train/val profile lists must be non-empty");
        if (model_blocks < 1 || model_width < 2) throw ConfigError("bad model section");
    }
};

namespace detail {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline std::vector<double> parse_grid(const json& j) {
    if (j.is_array()) return j.get<std::vector<double>>();
    const double start = j.at("start").get<double>();
    const double stop = j.at("stop").get<double>();
    const double step = j.at("step").get<double>();
    if (step <= 0) throw ConfigError("eval: grid step must be positive");
    std::vector<double> grid;
    for (double v = start; v <= stop + 1e-9; v += step) grid.push_back(v);
    return grid;
}

} // namespace detail

inline ExperimentConfig experiment_from_json(const json& j, const std::string& source) {
    ExperimentConfig cfg;
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw ConfigError(source + ": unsupported schema_version");
        if (j.contains("link")) {
            const auto& l = j["link"];
            detail::read_if(l, "n_sym", cfg.link.n_sym);
            detail::read_if(l, "n_sc", cfg.link.n_sc);
            detail::read_if(l, "n_rx", cfg.link.n_rx);
            detail::read_if(l, "bits_per_symbol", cfg.link.bits_per_symbol);
            detail::read_if(l, "code_rate", cfg.link.code_rate);
            detail::read_if(l, "dmrs_symbols", cfg.link.dmrs_symbols);
            detail::read_if(l, "carrier_hz", cfg.link.carrier_hz);
            detail::read_if(l, "scs_hz", cfg.link.scs_hz);
            detail::read_if(l, "pilot_seed", cfg.link.pilot_seed);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            detail::read_if(m, "blocks", cfg.model_blocks);
            detail::read_if(m, "width", cfg.model_width);
            detail::read_if(m, "noise_plane", cfg.noise_plane);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            detail::read_if(t, "profiles", cfg.train_profiles);
            detail::read_if(t, "val_profiles", cfg.val_profiles);
            if (t.contains("ebn0_db")) {
                cfg.train.ebn0_lo_db = t["ebn0_db"].at(0).get<double>();
                cfg.train.ebn0_hi_db = t["ebn0_db"].at(1).get<double>();
            }
            if (t.contains("velocity_mps")) {
                cfg.train.velocity_lo = t["velocity_mps"].at(0).get<double>();
                cfg.train.velocity_hi = t["velocity_mps"].at(1).get<double>();
            }
            if (t.contains("delay_spread_ns")) {
                cfg.train.delay_spread_lo_ns = t["delay_spread_ns"].at(0).get<double>();
                cfg.train.delay_spread_hi_ns = t["delay_spread_ns"].at(1).get<double>();
            }
            detail::read_if(t, "batch", cfg.train.batch);
            detail::read_if(t, "fp32_steps", cfg.train.fp32_steps);
            detail::read_if(t, "fp32_lr", cfg.train.fp32_lr);
            detail::read_if(t, "qat_steps", cfg.train.qat_steps);
            detail::read_if(t, "qat_lr", cfg.train.qat_lr);
            detail::read_if(t, "eval_every", cfg.train.eval_every);
            detail::read_if(t, "patience", cfg.train.patience);
            detail::read_if(t, "val_batches", cfg.train.val_batches);
            detail::read_if(t, "seed", cfg.train.seed);
        }
        if (j.contains("quant")) {
            const auto& q = j["quant"];
            detail::read_if(q, "bitwidth", cfg.quant.bitwidth);
            if (q.contains("granularity")) {
                const auto g = q["granularity"].get<std::string>();
                if (g == "per_tensor")
                    cfg.quant.granularity = Granularity::PerTensor;
                else if (g == "per_channel")
                    cfg.quant.granularity = Granularity::PerChannel;
                else
                    throw ConfigError(source + ": granularity must be per_tensor or per_channel");
            }
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            detail::read_if(e, "profiles", cfg.eval.profiles);
            if (e.contains("bands")) {
                cfg.eval.bands.clear();
                for (const auto& [name, range] : e["bands"].items())
                    cfg.eval.bands.push_back(
                        {name, range.at(0).get<double>(), range.at(1).get<double>()});
            }
            if (e.contains("ebn0_grid")) cfg.eval.ebn0_grid = detail::parse_grid(e["ebn0_grid"]);
            if (e.contains("receivers")) {
                for (const auto& r : e["receivers"]) {
                    ReceiverSpec spec;
                    spec.name = r.at("name").get<std::string>();
                    if (r.contains("model")) spec.model_path = r["model"].get<std::string>();
                    cfg.eval.receivers.push_back(spec);
                }
            }
            detail::read_if(e, "delay_spread_ns", cfg.eval.delay_spread_ns);
            detail::read_if(e, "blocks_per_point", cfg.eval.blocks_per_point);
            detail::read_if(e, "target_errors", cfg.eval.target_errors);
            detail::read_if(e, "max_decode_iters", cfg.eval.max_decode_iters);
            detail::read_if(e, "seed", cfg.eval.seed);
        }
        detail::read_if(j, "ldpc_alist", cfg.ldpc_alist);
        detail::read_if(j, "profiles_dir", cfg.profiles_dir);
    } catch (const json::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }
    if (cfg.eval.ebn0_grid.empty())
        for (double v = 0.0; v <= 12.0 + 1e-9; v += 0.5) cfg.eval.ebn0_grid.push_back(v);
    return cfg;
}

inline ExperimentConfig load_experiment(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    auto cfg = experiment_from_json(j, path);
    cfg.validate();
    return cfg;
}

// Resolves profile names and the LDPC code into a runnable training setup.
inline TrainSetup make_train_setup(const ExperimentConfig& cfg) {
    TrainSetup setup;
    setup.link = cfg.link;
    setup.code = std::make_shared<LdpcCode>(LdpcCode::from_alist(cfg.ldpc_alist));
    setup.constellation = make_constellation(cfg.link.bits_per_symbol);
    for (const auto& name : cfg.train_profiles)
        setup.train_profiles.push_back(load_profile(cfg.profiles_dir, name));
    for (const auto& name : cfg.val_profiles)
        setup.val_profiles.push_back(load_profile(cfg.profiles_dir, name));
    setup.cfg = cfg.train;
    setup.validate();
    return setup;
}

} // namespace qrx
