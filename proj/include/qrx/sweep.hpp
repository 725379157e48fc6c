// Monte-Carlo BLER sweeps across receivers.
//
// Paired-realization design: at every grid point all receivers consume the
// identical (channel, noise, payload) draw, so receiver orderings are free
// of Monte-Carlo noise. Blocks use counter-derived RNG streams keyed by
// (seed, point, block index); counts are order-independent sums, so results
// do not depend on the worker count. Early stopping is evaluated on chunk
// boundaries, which keeps the number of simulated blocks deterministic.

#pragma once

#include <atomic>
#include <map>
#include <thread>

#include "qrx/config.hpp"

namespace qrx {

struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
};

// 95% Wilson score interval for a binomial proportion.
inline WilsonInterval wilson_interval(long errors, long blocks, double z = 1.959963985) {
    if (blocks <= 0) return {0.0, 1.0};
    const double n = static_cast<double>(blocks);
    const double p = static_cast<double>(errors) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct SweepRow {
    std::string receiver;
    std::string profile;
    std::string band;
    double ebn0_db = 0.0;
    long blocks = 0;
    long errors = 0;
    std::vector<std::uint8_t> block_errors;  // per-slot error counts, if recorded

    double bler() const { return blocks > 0 ? static_cast<double>(errors) / blocks : 0.0; }
    WilsonInterval wilson() const { return wilson_interval(errors, blocks); }
};

struct SweepResult {
    std::vector<SweepRow> rows;

    const SweepRow* find(const std::string& receiver, const std::string& profile,
                         const std::string& band, double ebn0_db) const {
        for (const auto& r : rows)
            if (r.receiver == receiver && r.profile == profile && r.band == band &&
                std::abs(r.ebn0_db - ebn0_db) < 1e-9)
                return &r;
        return nullptr;
    }

    std::vector<const SweepRow*> series(const std::string& receiver, const std::string& profile,
                                        const std::string& band) const {
        std::vector<const SweepRow*> out;
        for (const auto& r : rows)
            if (r.receiver == receiver && r.profile == profile && r.band == band)
                out.push_back(&r);
        std::sort(out.begin(), out.end(),
                  [](const SweepRow* a, const SweepRow* b) { return a->ebn0_db < b->ebn0_db; });
        return out;
    }
};

struct SweepContext {
    LinkConfig link;
    std::shared_ptr<const LdpcCode> code;
    Constellation constellation;
    std::vector<ChannelProfile> profiles;              // aligned with eval.profiles
    std::map<std::string, NrxModel<float>> models;     // keyed by receiver name
    EvalConfig eval;
    int threads = 1;
};

namespace detail {

struct BlockOutcome {
    std::vector<std::uint8_t> errors;  // per receiver: errored codewords in the slot
    int codewords = 0;
};

inline BlockOutcome simulate_block(const SweepContext& ctx, const ChannelProfile& base_profile,
                                   const VelocityBand& band, double ebn0_db,
                                   std::uint64_t point_stream, std::uint64_t block_idx) {
    Rng rng(ctx.eval.seed, point_stream, block_idx);
    ChannelProfile profile = base_profile;
    profile.velocity_mps = rng.uniform(band.lo_mps, band.hi_mps);
    profile.rms_delay_spread_ns = ctx.eval.delay_spread_ns;
    const double noise_var = snr_to_noise_var(ebn0_db, ctx.link);

    const auto slot = transmit_slot(ctx.link, *ctx.code, ctx.constellation, rng);
    const auto chan = generate_channel(profile, ctx.link, noise_var, rng);
    const auto y = apply_channel(slot.grid, chan, rng);

    BlockOutcome out;
    out.codewords = slot.num_codewords;
    for (const auto& spec : ctx.eval.receivers) {
        std::vector<double> llrs;
        if (spec.name == "ls-lmmse") {
            llrs = ls_lmmse_receive(y, slot.grid, ctx.link, noise_var, ctx.constellation);
        } else if (spec.name == "perfect-csi") {
            llrs = perfect_csi_receive(y, chan, slot.grid, ctx.link, ctx.constellation);
        } else {
            llrs = neural_receive(ctx.models.at(spec.name), y, noise_var, ctx.link);
        }
        const auto errs = decode_slot(slot, llrs, *ctx.code, ctx.eval.max_decode_iters);
        std::uint8_t bad = 0;
        for (bool e : errs) bad += e ? 1 : 0;
        out.errors.push_back(bad);
    }
    return out;
}

} // namespace detail

inline SweepResult run_sweep(const SweepContext& ctx) {
    ctx.eval.validate();
    ctx.link.validate();
    for (const auto& spec : ctx.eval.receivers)
        if (spec.is_neural() && !ctx.models.count(spec.name))
            throw ConfigError("run_sweep: no model loaded for receiver '" + spec.name + "'");
    if (ctx.profiles.size() != ctx.eval.profiles.size())
        throw ConfigError("run_sweep: profile objects do not match profile names");

    SweepResult result;
    const int n_rx_kinds = static_cast<int>(ctx.eval.receivers.size());
    const int chunk = 32;
    std::uint64_t point_counter = 0;

    for (std::size_t pi = 0; pi < ctx.profiles.size(); ++pi) {
        for (const auto& band : ctx.eval.bands) {
            for (double ebn0 : ctx.eval.ebn0_grid) {
                const std::uint64_t point_stream = ++point_counter;
                std::vector<SweepRow> rows(static_cast<std::size_t>(n_rx_kinds));
                for (int r = 0; r < n_rx_kinds; ++r) {
                    rows[static_cast<std::size_t>(r)].receiver = ctx.eval.receivers[r].name;
                    rows[static_cast<std::size_t>(r)].profile = ctx.profiles[pi].name;
                    rows[static_cast<std::size_t>(r)].band = band.name;
                    rows[static_cast<std::size_t>(r)].ebn0_db = ebn0;
                }

                long done = 0;
                while (done < ctx.eval.blocks_per_point) {
                    const long begin = done;
                    const long end =
                        std::min<long>(ctx.eval.blocks_per_point, begin + chunk);
                    std::vector<detail::BlockOutcome> outcomes(
                        static_cast<std::size_t>(end - begin));
                    auto worker = [&](int tid) {
                        for (long b = begin + tid; b < end; b += ctx.threads)
                            outcomes[static_cast<std::size_t>(b - begin)] =
                                detail::simulate_block(ctx, ctx.profiles[pi], band, ebn0,
                                                       point_stream,
                                                       static_cast<std::uint64_t>(b));
                    };
                    if (ctx.threads > 1) {
                        std::vector<std::thread> pool;
                        for (int t = 0; t < ctx.threads; ++t) pool.emplace_back(worker, t);
                        for (auto& t : pool) t.join();
                    } else {
                        worker(0);
                    }
                    for (const auto& o : outcomes) {
                        for (int r = 0; r < n_rx_kinds; ++r) {
                            auto& row = rows[static_cast<std::size_t>(r)];
                            row.blocks += o.codewords;
                            row.errors += o.errors[static_cast<std::size_t>(r)];
                            if (ctx.eval.record_blocks)
                                row.block_errors.push_back(o.errors[static_cast<std::size_t>(r)]);
                        }
                    }
                    done = end;
                    bool all_saturated = true;
                    for (const auto& row : rows)
                        if (row.errors < ctx.eval.target_errors) all_saturated = false;
                    if (all_saturated) break;  // adaptive stop
                }
                for (auto& row : rows) result.rows.push_back(std::move(row));
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// SNR at target BLER
// ---------------------------------------------------------------------------

struct SnrAtTarget {
    bool reached = false;
    double ebn0_db = 0.0;
    bool ambiguous = false;  // BLER was not non-increasing across the grid
};

// Log-linear interpolation between the adjacent grid points bracketing the
// target; the first downward crossing wins. Zero BLER estimates are floored
// at 0.5/blocks for the logarithm.
inline SnrAtTarget snr_at_target(const SweepResult& result, const std::string& receiver,
                                 const std::string& profile, const std::string& band,
                                 double target) {
    const auto series = result.series(receiver, profile, band);
    SnrAtTarget out;
    if (series.empty()) return out;

    for (std::size_t i = 1; i < series.size(); ++i)
        if (series[i]->bler() > series[i - 1]->bler() + 1e-12) out.ambiguous = true;

    auto floored = [](const SweepRow* r) {
        const double b = r->bler();
        return b > 0.0 ? b : 0.5 / std::max<long>(1, r->blocks);
    };

    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i]->bler() == target) {
            out.reached = true;
            out.ebn0_db = series[i]->ebn0_db;
            return out;
        }
        if (i + 1 < series.size() && series[i]->bler() > target &&
            series[i + 1]->bler() < target) {
            const double b1 = floored(series[i]);
            const double b2 = floored(series[i + 1]);
            const double x1 = series[i]->ebn0_db, x2 = series[i + 1]->ebn0_db;
            out.reached = true;
            out.ebn0_db =
                x1 + (x2 - x1) * (std::log(b1) - std::log(target)) /
                         (std::log(b1) - std::log(b2));
            return out;
        }
    }
    return out;  // never crossed: min BLER above target
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void emit_csv(const SweepResult& result, std::ostream& os) {
    os << "receiver,profile,velocity_band,ebn0_db,blocks,errors,bler,ci_lo,ci_hi\n";
    char buf[256];
    for (const auto& r : result.rows) {
        const auto ci = r.wilson();
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.6g,%ld,%ld,%.9g,%.9g,%.9g\n",
                      r.receiver.c_str(), r.profile.c_str(), r.band.c_str(), r.ebn0_db, r.blocks,
                      r.errors, r.bler(), ci.lo, ci.hi);
        os << buf;
    }
}

inline void emit_csv(const SweepResult& result, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write CSV: " + path);
    emit_csv(result, f);
}

inline SweepResult parse_csv(std::istream& is) {
    SweepResult result;
    std::string line;
    if (!std::getline(is, line) ||
        line != "receiver,profile,velocity_band,ebn0_db,blocks,errors,bler,ci_lo,ci_hi")
        throw ConfigError("sweep CSV: bad header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        SweepRow row;
        std::istringstream ss(line);
        std::string field;
        auto next = [&](const char* what) {
            if (!std::getline(ss, field, ',')) throw ConfigError(std::string("sweep CSV: missing ") + what);
            return field;
        };
        row.receiver = next("receiver");
        row.profile = next("profile");
        row.band = next("velocity_band");
        row.ebn0_db = std::stod(next("ebn0_db"));
        row.blocks = std::stol(next("blocks"));
        row.errors = std::stol(next("errors"));
        next("bler");
        next("ci_lo");
        next("ci_hi");  // derived columns, recomputed from counts
        result.rows.push_back(std::move(row));
    }
    return result;
}

inline SweepResult parse_csv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open CSV: " + path);
    return parse_csv(f);
}

// ---------------------------------------------------------------------------
// Compression report
// ---------------------------------------------------------------------------

struct CompressionRow {
    std::string path;
    std::string mode;
    int bitwidth = 32;
    std::uintmax_t bytes = 0;
    double ratio_vs_fp32 = 1.0;
};

// Ratio is fp32_bytes / bytes, against the first fp32-mode model given.
inline std::vector<CompressionRow> report_compression(const std::vector<std::string>& paths) {
    std::vector<CompressionRow> rows;
    for (const auto& p : paths) {
        auto model = load_model(p);
        CompressionRow row;
        row.path = p;
        row.mode = quant_mode_name(model.cfg.quant_mode);
        row.bitwidth = model.cfg.quant_mode == QuantMode::Fp32 ? 32 : model.cfg.quant_spec.bitwidth;
        row.bytes = std::filesystem::file_size(p);
        rows.push_back(row);
    }
    const auto ref = std::find_if(rows.begin(), rows.end(),
                                  [](const CompressionRow& r) { return r.mode == std::string("fp32"); });
    if (ref != rows.end())
        for (auto& r : rows) r.ratio_vs_fp32 = static_cast<double>(ref->bytes) / r.bytes;
    return rows;
}

} // namespace qrx
