// Training pipelines: FP32 pre-training on randomized link draws, PTQ
// calibration, and QAT fine-tuning at a reduced learning rate.
//
// Batches are generated, not drawn from a corpus: each sample draws a
// channel profile, RMS delay spread, UE velocity and Eb/N0 uniformly from
// the configured ranges, runs the full transmit chain, and pairs the
// received grid with the transmitted coded bits. The BCE loss feeds the
// negated LLR grid (network LLRs are bit-0-positive; the BCE logit is the
// bit-1 logit).

#pragma once

#include <chrono>
#include <memory>

#include "qrx/nrx.hpp"

namespace qrx {

struct TrainConfig {
    double ebn0_lo_db = -2.0, ebn0_hi_db = 15.0;
    double velocity_lo = 0.0, velocity_hi = 50.0;       // m/s
    double delay_spread_lo_ns = 10.0, delay_spread_hi_ns = 100.0;
    int batch = 16;
    int fp32_steps = 2000;
    double fp32_lr = 1e-3;
    int qat_steps = 600;
    double qat_lr = 1e-4;  // full-scale configs pin the paper regime of 1e-6
    int eval_every = 50;
    int patience = 20;
    int val_batches = 8;
    double grad_clip = 1.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(qat_lr < fp32_lr)) throw ConfigError("QAT learning rate must be below the fp32 rate");
        if (fp32_lr <= 0 || qat_lr <= 0) throw ConfigError("learning rates must be positive");
        if (batch < 1) throw ConfigError("batch size must be >= 1");
        if (ebn0_hi_db < ebn0_lo_db || velocity_hi < velocity_lo ||
            delay_spread_hi_ns < delay_spread_lo_ns)
            throw ConfigError("randomization ranges must be non-empty");
        if (fp32_steps < 0 || qat_steps < 0) throw ConfigError("step budgets must be >= 0");
        if (eval_every < 1 || patience < 1 || val_batches < 1)
            throw ConfigError("validation cadence fields must be >= 1");
    }
};

struct TrainSetup {
    LinkConfig link;
    std::shared_ptr<const LdpcCode> code;
    Constellation constellation;
    std::vector<ChannelProfile> train_profiles;
    std::vector<ChannelProfile> val_profiles;  // held-out models for selection
    TrainConfig cfg;

    void validate() const {
        link.validate();
        cfg.validate();
        if (!code) throw ConfigError("training setup has no LDPC code");
        if (train_profiles.empty()) throw ConfigError("no training channel profiles");
        if (val_profiles.empty()) throw ConfigError("no validation channel profiles");
        for (const auto& p : train_profiles) p.validate();
        for (const auto& p : val_profiles) p.validate();
    }
};

struct SampleMeta {
    int profile_index = 0;
    double ebn0_db = 0.0;
    double velocity_mps = 0.0;
    double delay_spread_ns = 0.0;
};

struct Batch {
    Tensor<float> features;  // [B, planes, n_sym, n_sc]
    Tensor<float> targets;   // [B, payload_bits], binary
    std::vector<SampleMeta> meta;
};

inline Batch sample_batch(const TrainSetup& setup, const std::vector<ChannelProfile>& profiles,
                          int batch_size, bool include_noise_plane, Rng& rng) {
    const auto& cfg = setup.cfg;
    std::vector<Tensor<float>> feats;
    Batch out;
    out.targets = Tensor<float>({batch_size, setup.link.payload_bits()});
    for (int s = 0; s < batch_size; ++s) {
        SampleMeta meta;
        meta.profile_index = static_cast<int>(rng.uniform_int(profiles.size()));
        meta.delay_spread_ns = rng.uniform(cfg.delay_spread_lo_ns, cfg.delay_spread_hi_ns);
        meta.velocity_mps = rng.uniform(cfg.velocity_lo, cfg.velocity_hi);
        meta.ebn0_db = rng.uniform(cfg.ebn0_lo_db, cfg.ebn0_hi_db);

        ChannelProfile profile = profiles[static_cast<std::size_t>(meta.profile_index)];
        profile.rms_delay_spread_ns = meta.delay_spread_ns;
        profile.velocity_mps = meta.velocity_mps;
        const double noise_var = snr_to_noise_var(meta.ebn0_db, setup.link);

        auto slot = transmit_slot(setup.link, *setup.code, setup.constellation, rng);
        auto chan = generate_channel(profile, setup.link, noise_var, rng);
        auto y = apply_channel(slot.grid, chan, rng);
        feats.push_back(featurize<float>(y, noise_var, include_noise_plane));
        for (int b = 0; b < setup.link.payload_bits(); ++b)
            out.targets.data[static_cast<std::int64_t>(s) * setup.link.payload_bits() + b] =
                static_cast<float>(slot.coded_bits[static_cast<std::size_t>(b)]);
        out.meta.push_back(meta);
    }
    out.features = stack_batch(feats);
    return out;
}

struct StepLog {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    int clip_events = 0;
    long wall_ms = 0;
};

inline void write_train_log(const std::string& path, const std::vector<StepLog>& rows) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write training log: " + path);
    f << "step,loss,lr,clip_events,wall_ms\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%d,%ld\n", r.step, r.loss, r.lr,
                      r.clip_events, r.wall_ms);
        f << buf;
    }
}

// Mean BCE over a fixed, seeded validation set drawn from the held-out
// profiles. Bit-identical for a fixed (model, setup, seed).
inline double evaluate_bce(const NrxModel<float>& model, const TrainSetup& setup,
                           std::uint64_t eval_seed = 0xe7a1) {
    double acc = 0.0;
    const auto gather_idx = payload_gather_indices(setup.link);
    for (int b = 0; b < setup.cfg.val_batches; ++b) {
        Rng rng(eval_seed, 0x7a1ba7c4, static_cast<std::uint64_t>(b));
        auto batch = sample_batch(setup, setup.val_profiles, setup.cfg.batch,
                                  model.cfg.include_noise_plane, rng);
        auto llr_grid = model.forward(batch.features);
        const std::int64_t per = llr_grid.numel() / llr_grid.shape[0];
        Tensor<float> logits(batch.targets.shape);
        for (std::int64_t s = 0; s < llr_grid.shape[0]; ++s)
            for (std::size_t j = 0; j < gather_idx.size(); ++j)
                logits.data[s * static_cast<std::int64_t>(gather_idx.size()) + j] =
                    -llr_grid.data[s * per + gather_idx[j]];
        acc += static_cast<double>(bce_with_logits_forward(logits, batch.targets));
    }
    return acc / setup.cfg.val_batches;
}

struct TrainResult {
    std::vector<StepLog> log;
    double best_val_bce = std::numeric_limits<double>::infinity();
    int projections = 0;  // QAT bound-floor projections
    bool stopped_early = false;
};

// One optimization phase over freshly sampled batches. fp32 pre-training and
// QAT fine-tuning share this engine; the stream tag keeps their batch draws
// on distinct RNG streams.
struct TrainPhase {
    int steps;
    double lr;
    bool clip_gradients;
    std::uint64_t stream_tag;
};

inline TrainResult run_training_phase(NrxModel<float>& model, const TrainSetup& setup,
                                      const TrainPhase& phase) {
    setup.validate();
    TrainResult result;
    if (phase.steps == 0) return result;

    auto params = model.parameters();
    AdamState<float> opt_state;
    const auto gather_idx = payload_gather_indices(setup.link);

    NrxModel<float> best = model;
    int evals_since_best = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int step = 0; step < phase.steps; ++step) {
        Rng rng(setup.cfg.seed, phase.stream_tag, static_cast<std::uint64_t>(step));
        auto batch = sample_batch(setup, setup.train_profiles, setup.cfg.batch,
                                  model.cfg.include_noise_plane, rng);

        Tape<float> tape;
        TapeBinding<float> binding;
        const auto feats = tape.leaf(batch.features);
        const auto llr = model.forward_tape(tape, feats, binding);
        const auto loss =
            tape.bce_with_logits(tape.negate(tape.gather(llr, gather_idx)),
                                 tape.leaf(batch.targets));
        const double loss_value = static_cast<double>(tape.value(loss).data[0]);
        if (!std::isfinite(loss_value))
            throw std::runtime_error("non-finite training loss at step " + std::to_string(step) +
                                     " (seed " + std::to_string(setup.cfg.seed) + ", ebn0 " +
                                     std::to_string(batch.meta.front().ebn0_db) + " dB)");
        tape.backward(loss);
        zero_grads(params);
        binding.harvest(tape);

        int clip_events = 0;
        if (phase.clip_gradients && clip_grad_norm(params, 1.0) > 1.0) clip_events = 1;
        adam_step(params, opt_state, {.lr = phase.lr});
        const int projected = model.project_bounds();
        result.projections += projected;
        clip_events += projected;

        const auto now = std::chrono::steady_clock::now();
        result.log.push_back(
            {step, loss_value, phase.lr, clip_events,
             std::chrono::duration_cast<std::chrono::milliseconds>(now - t0).count()});

        if ((step + 1) % setup.cfg.eval_every == 0 || step + 1 == phase.steps) {
            const double val = evaluate_bce(model, setup);
            if (val < result.best_val_bce) {
                result.best_val_bce = val;
                best = model;
                evals_since_best = 0;
            } else if (++evals_since_best >= setup.cfg.patience) {
                result.stopped_early = true;
                break;
            }
        }
    }
    if (std::isfinite(result.best_val_bce))
        model = best;  // model selection on held-out profiles
    return result;
}

inline TrainResult train_fp32(NrxModel<float>& model, const TrainSetup& setup) {
    if (model.cfg.quant_mode != QuantMode::Fp32)
        throw ConfigError("train_fp32 expects an fp32 model");
    return run_training_phase(model, setup,
                              {setup.cfg.fp32_steps, setup.cfg.fp32_lr, false, 0xf32});
}

// PTQ: calibrate bounds from the trained weights and freeze them.
inline NrxModel<float> run_ptq(const NrxModel<float>& fp32_model, const QuantSpec& spec) {
    NrxModel<float> model = fp32_model;
    model.attach_quantizers(spec, QuantMode::Ptq);
    return model;
}

// QAT: quantizers attached with learnable bounds, fine-tuned at the reduced
// rate; gradient clipping suppresses STE-induced spikes.
inline NrxModel<float> run_qat(const NrxModel<float>& fp32_model, const QuantSpec& spec,
                               const TrainSetup& setup, TrainResult* result_out = nullptr) {
    NrxModel<float> model = fp32_model;
    model.attach_quantizers(spec, QuantMode::Qat);
    auto result = run_training_phase(model, setup,
                                     {setup.cfg.qat_steps, setup.cfg.qat_lr, true, 0x9a7});
    if (result_out) *result_out = std::move(result);
    return model;
}

} // namespace qrx
