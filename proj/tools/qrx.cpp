// qrx: train and evaluate quantized neural OFDM receivers.
//
// Verbs:
//   train  -c cfg.json --out dir          fp32 pre-training
//   ptq    -c cfg.json -m fp32.qrxm       post-training quantization
//   qat    -c cfg.json -m fp32.qrxm       quantization-aware fine-tuning
//   sweep  -c cfg.json --out dir          Monte-Carlo BLER sweep + CSV + SVG
//   report -m a.qrxm -m b.qrxm ...        model size / compression table
//
// Exit codes: 0 success, 2 configuration error, 3 missing model/profile
// file, 4 numerical failure.

#include <CLI11.hpp>

#include <iostream>

#include "qrx/sweep_plot.hpp"

using namespace qrx;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::string profiles_dir;
    int threads = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void apply_overrides(ExperimentConfig& cfg, const CommonArgs& args) {
    if (!args.profiles_dir.empty()) cfg.profiles_dir = args.profiles_dir;
    if (args.seed_set) {
        cfg.train.seed = args.seed;
        cfg.eval.seed = args.seed;
    }
}

std::string out_path(const CommonArgs& args, const std::string& name) {
    std::filesystem::create_directories(args.out_dir);
    return (std::filesystem::path(args.out_dir) / name).string();
}

int cmd_train(const CommonArgs& args) {
    auto cfg = load_experiment(args.config_path);
    apply_overrides(cfg, args);
    auto setup = make_train_setup(cfg);

    Rng init_rng(setup.cfg.seed, 0x1417);
    auto model = NrxModel<float>::init(
        NrxConfig::for_link(cfg.link, cfg.model_blocks, cfg.model_width, cfg.noise_plane),
        init_rng);
    std::cout << "training fp32: " << model.weight_count() << " parameters, "
              << setup.cfg.fp32_steps << " steps\n";
    auto result = train_fp32(model, setup);
    write_train_log(out_path(args, "train_fp32_log.csv"), result.log);
    save_model(model, out_path(args, "model_fp32.qrxm"));
    std::cout << "best validation BCE " << result.best_val_bce
              << (result.stopped_early ? " (early stop)" : "") << "\n";
    std::cout << "wrote " << out_path(args, "model_fp32.qrxm") << "\n";
    return 0;
}

int cmd_ptq(const CommonArgs& args, const std::string& model_path, int bitwidth_override,
            const std::string& granularity_override) {
    auto cfg = load_experiment(args.config_path);
    apply_overrides(cfg, args);
    QuantSpec spec = cfg.quant;
    if (bitwidth_override > 0) spec.bitwidth = bitwidth_override;
    if (granularity_override == "per_channel") spec.granularity = Granularity::PerChannel;
    if (granularity_override == "per_tensor") spec.granularity = Granularity::PerTensor;

    auto fp32 = load_model(model_path);
    auto model = run_ptq(fp32, spec);
    const auto name = "model_ptq" + std::to_string(spec.bitwidth) + ".qrxm";
    save_model(model, out_path(args, name));

    auto setup = make_train_setup(cfg);
    std::cout << "validation BCE: fp32 " << evaluate_bce(fp32, setup) << ", ptq-"
              << spec.bitwidth << " " << evaluate_bce(model, setup) << "\n";
    std::cout << "wrote " << out_path(args, name) << "\n";
    return 0;
}

int cmd_qat(const CommonArgs& args, const std::string& model_path, int bitwidth_override,
            const std::string& granularity_override) {
    auto cfg = load_experiment(args.config_path);
    apply_overrides(cfg, args);
    QuantSpec spec = cfg.quant;
    if (bitwidth_override > 0) spec.bitwidth = bitwidth_override;
    if (granularity_override == "per_channel") spec.granularity = Granularity::PerChannel;
    if (granularity_override == "per_tensor") spec.granularity = Granularity::PerTensor;

    auto setup = make_train_setup(cfg);
    auto fp32 = load_model(model_path);
    std::cout << "QAT fine-tuning at b=" << spec.bitwidth << ", " << setup.cfg.qat_steps
              << " steps, lr " << setup.cfg.qat_lr << "\n";
    TrainResult result;
    auto model = run_qat(fp32, spec, setup, &result);
    const auto name = "model_qat" + std::to_string(spec.bitwidth) + ".qrxm";
    write_train_log(out_path(args, "train_qat" + std::to_string(spec.bitwidth) + "_log.csv"),
                    result.log);
    save_model(model, out_path(args, name));
    std::cout << "best validation BCE " << result.best_val_bce << ", bound projections "
              << result.projections << "\n";
    std::cout << "wrote " << out_path(args, name) << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<std::string>& model_overrides) {
    auto cfg = load_experiment(args.config_path);
    apply_overrides(cfg, args);

    SweepContext ctx;
    ctx.link = cfg.link;
    ctx.code = std::make_shared<LdpcCode>(LdpcCode::from_alist(cfg.ldpc_alist));
    ctx.constellation = make_constellation(cfg.link.bits_per_symbol);
    ctx.eval = cfg.eval;
    ctx.threads = std::max(1, args.threads);
    for (const auto& name : cfg.eval.profiles)
        ctx.profiles.push_back(load_profile(cfg.profiles_dir, name));

    // --model name=path overrides the config's receiver model paths.
    std::map<std::string, std::string> paths;
    for (const auto& spec : cfg.eval.receivers)
        if (spec.is_neural()) paths[spec.name] = spec.model_path;
    for (const auto& ov : model_overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--model expects name=path, got '" + ov + "'");
        paths[ov.substr(0, eq)] = ov.substr(eq + 1);
    }
    for (const auto& spec : cfg.eval.receivers) {
        if (!spec.is_neural()) continue;
        const auto& path = paths.at(spec.name);
        if (path.empty())
            throw ConfigError("receiver '" + spec.name + "' has no model path");
        ctx.models.emplace(spec.name, load_model(path));
    }

    std::cout << "sweep: " << ctx.profiles.size() << " profile(s), " << cfg.eval.bands.size()
              << " band(s), " << cfg.eval.ebn0_grid.size() << " grid points, "
              << cfg.eval.blocks_per_point << " blocks/point, " << ctx.threads << " thread(s)\n";
    auto result = run_sweep(ctx);
    emit_csv(result, out_path(args, "sweep.csv"));
    emit_plot(result, out_path(args, "bler.svg"));

    for (const auto& profile : ctx.profiles) {
        for (const auto& band : cfg.eval.bands) {
            std::cout << profile.name << " / " << band.name << ":\n";
            for (const auto& spec : cfg.eval.receivers) {
                auto at10 = snr_at_target(result, spec.name, profile.name, band.name, 0.10);
                auto at1 = snr_at_target(result, spec.name, profile.name, band.name, 0.01);
                auto fmt = [](const SnrAtTarget& t) {
                    if (!t.reached) return std::string("not reached");
                    char buf[48];
                    std::snprintf(buf, sizeof(buf), "%.2f dB%s", t.ebn0_db,
                                  t.ambiguous ? " (ambiguous)" : "");
                    return std::string(buf);
                };
                std::cout << "  " << spec.name << ": 10% BLER @ " << fmt(at10)
                          << ", 1% BLER @ " << fmt(at1) << "\n";
            }
        }
    }
    std::cout << "wrote " << out_path(args, "sweep.csv") << " and " << out_path(args, "bler.svg")
              << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& models) {
    auto rows = report_compression(models);
    std::printf("%-40s %-6s %-5s %12s %10s\n", "model", "mode", "bits", "bytes", "ratio");
    for (const auto& r : rows)
        std::printf("%-40s %-6s %-5d %12ju %9.2fx\n", r.path.c_str(), r.mode.c_str(), r.bitwidth,
                    static_cast<std::uintmax_t>(r.bytes), r.ratio_vs_fp32);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantized neural OFDM receiver experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string model_path;
    int bitwidth = 0;
    std::string granularity;
    std::vector<std::string> model_overrides;
    std::vector<std::string> report_models;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("-c,--config", args.config_path, "experiment config (JSON)");
        if (needs_config) opt->required();
        sub->add_option("-o,--out", args.out_dir, "output directory");
        sub->add_option("--profiles", args.profiles_dir, "channel profile directory override");
        sub->add_option("--threads", args.threads, "worker threads (sweep)");
        sub->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
            args.seed_set = true;
        });
    };

    auto* train = app.add_subcommand("train", "fp32 pre-training");
    add_common(train, true);

    auto* ptq = app.add_subcommand("ptq", "post-training quantization");
    add_common(ptq, true);
    ptq->add_option("-m,--model", model_path, "fp32 model file")->required();
    ptq->add_option("-b,--bits", bitwidth, "bitwidth override");
    ptq->add_option("--granularity", granularity, "per_tensor|per_channel");

    auto* qat = app.add_subcommand("qat", "quantization-aware fine-tuning");
    add_common(qat, true);
    qat->add_option("-m,--model", model_path, "fp32 model file")->required();
    qat->add_option("-b,--bits", bitwidth, "bitwidth override");
    qat->add_option("--granularity", granularity, "per_tensor|per_channel");

    auto* sweep = app.add_subcommand("sweep", "Monte-Carlo BLER sweep");
    add_common(sweep, true);
    sweep->add_option("--model", model_overrides, "receiver model override name=path");

    auto* report = app.add_subcommand("report", "model size report");
    report->add_option("-m,--model", report_models, "model files")->required();

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(args);
        if (ptq->parsed()) return cmd_ptq(args, model_path, bitwidth, granularity);
        if (qat->parsed()) return cmd_qat(args, model_path, bitwidth, granularity);
        if (sweep->parsed()) return cmd_sweep(args, model_overrides);
        if (report->parsed()) return cmd_report(report_models);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const FileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const LdpcError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const QuantError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
