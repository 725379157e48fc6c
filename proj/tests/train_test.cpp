#include <gtest/gtest.h>

#include <sstream>

#include "qrx/train.hpp"

using namespace qrx;

namespace {

ChannelProfile flat_rayleigh() {
    ChannelProfile p;
    p.name = "flat";
    p.taps = {{0.0, 0.0, std::nullopt}};
    return p;
}

ChannelProfile two_tap() {
    ChannelProfile p;
    p.name = "two_tap";
    p.taps = {{0.0, 0.0, std::nullopt}, {150.0, -4.0, std::nullopt}};
    return p;
}

// Small flat-Rayleigh setup: 1 block, width 8, QPSK, one n=648 codeword.
TrainSetup desk_setup(std::uint64_t seed = 1) {
    TrainSetup setup;
    setup.link.n_sym = 14;
    setup.link.n_sc = 27;
    setup.link.n_rx = 2;
    setup.link.bits_per_symbol = 2;
    setup.link.dmrs_symbols = {2, 11};
    setup.code = std::make_shared<LdpcCode>(LdpcCode::from_alist("data/ldpc/n648_r12.alist"));
    setup.constellation = make_constellation(2);
    setup.train_profiles = {flat_rayleigh()};
    setup.val_profiles = {two_tap()};
    setup.cfg.seed = seed;
    setup.cfg.batch = 8;
    setup.cfg.fp32_steps = 200;
    setup.cfg.fp32_lr = 1e-3;
    setup.cfg.qat_steps = 60;
    setup.cfg.qat_lr = 1e-4;
    setup.cfg.eval_every = 100;
    setup.cfg.val_batches = 2;
    setup.cfg.ebn0_lo_db = 2.0;
    setup.cfg.ebn0_hi_db = 8.0;
    return setup;
}

NrxModel<float> fresh_model(const TrainSetup& setup, std::uint64_t seed = 77) {
    Rng rng(seed);
    return NrxModel<float>::init(NrxConfig::for_link(setup.link, 1, 8), rng);
}

// fp32 training is the slow part; share one trained model across tests.
const NrxModel<float>& trained_fp32() {
    static NrxModel<float> model = [] {
        auto setup = desk_setup();
        auto m = fresh_model(setup);
        train_fp32(m, setup);
        return m;
    }();
    return model;
}

} // namespace

TEST(SampleBatch, FixedSeedReproducesBatchExactly) {
    auto setup = desk_setup();
    Rng r1(42), r2(42);
    auto a = sample_batch(setup, setup.train_profiles, 4, true, r1);
    auto b = sample_batch(setup, setup.train_profiles, 4, true, r2);
    EXPECT_EQ(a.features.data, b.features.data);
    EXPECT_EQ(a.targets.data, b.targets.data);
}

TEST(SampleBatch, CollapsedSnrRangeGivesConstantNoise) {
    auto setup = desk_setup();
    setup.cfg.ebn0_lo_db = setup.cfg.ebn0_hi_db = 5.0;
    Rng rng(9);
    auto batch = sample_batch(setup, setup.train_profiles, 6, true, rng);
    for (const auto& m : batch.meta) EXPECT_DOUBLE_EQ(m.ebn0_db, 5.0);
    // Noise plane constant across samples.
    const std::int64_t hw = static_cast<std::int64_t>(setup.link.n_sym) * setup.link.n_sc;
    const std::int64_t per = batch.features.numel() / batch.features.shape[0];
    const float expected = batch.features.data[4 * hw];
    for (std::int64_t s = 0; s < 6; ++s)
        EXPECT_EQ(batch.features.data[s * per + 4 * hw], expected);
}

TEST(SampleBatch, SnrHistogramUniformByChiSquare) {
    auto setup = desk_setup();
    setup.cfg.ebn0_lo_db = -2.0;
    setup.cfg.ebn0_hi_db = 15.0;
    Rng rng(1234);
    const int n_draws = 10000;
    const int bins = 10;
    std::vector<int> hist(bins, 0);
    for (int i = 0; i < n_draws; i += 10) {
        auto batch = sample_batch(setup, setup.train_profiles, 10, false, rng);
        for (const auto& m : batch.meta) {
            const double u = (m.ebn0_db - setup.cfg.ebn0_lo_db) /
                             (setup.cfg.ebn0_hi_db - setup.cfg.ebn0_lo_db);
            const int b = std::min(bins - 1, static_cast<int>(u * bins));
            ++hist[static_cast<std::size_t>(b)];
        }
    }
    const double expected = static_cast<double>(n_draws) / bins;
    double chi2 = 0.0;
    for (int c : hist) chi2 += (c - expected) * (c - expected) / expected;
    // 95% critical value for 9 degrees of freedom.
    EXPECT_LT(chi2, 16.919);
}

TEST(TrainFp32, LossDropsOnDeskConfig) {
    auto setup = desk_setup();
    auto model = fresh_model(setup);
    auto result = train_fp32(model, setup);
    ASSERT_EQ(result.log.size(), 200u);
    const double initial = result.log.front().loss;
    const double final = result.log.back().loss;
    EXPECT_LT(final, 0.9 * initial) << "initial " << initial << " final " << final;
}

TEST(TrainFp32, ZeroStepBudgetLeavesModelUntouched) {
    auto setup = desk_setup();
    setup.cfg.fp32_steps = 0;
    auto model = fresh_model(setup);
    auto before = model.layers[0].weight.data;
    auto result = train_fp32(model, setup);
    EXPECT_TRUE(result.log.empty());
    EXPECT_EQ(model.layers[0].weight.data, before);
}

TEST(TrainFp32, SameSeedGivesIdenticalLossCurves) {
    auto setup = desk_setup();
    setup.cfg.fp32_steps = 20;
    auto m1 = fresh_model(setup);
    auto m2 = fresh_model(setup);
    auto r1 = train_fp32(m1, setup);
    auto r2 = train_fp32(m2, setup);
    ASSERT_EQ(r1.log.size(), r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i)
        EXPECT_EQ(r1.log[i].loss, r2.log[i].loss) << "step " << i;
    for (std::size_t l = 0; l < m1.layers.size(); ++l)
        EXPECT_EQ(m1.layers[l].weight.data, m2.layers[l].weight.data);
}

TEST(RunPtq, WeightsUntouchedAndOnCalibratedGrid) {
    auto setup = desk_setup();
    const auto& fp32 = trained_fp32();
    auto ptq = run_ptq(fp32, QuantSpec{4, Granularity::PerTensor});
    for (std::size_t l = 0; l < fp32.layers.size(); ++l)
        EXPECT_EQ(ptq.layers[l].weight.data, fp32.layers[l].weight.data);
    // Unpacked integer codes reproduce the fake-quantized master weights.
    std::stringstream ss;
    save_model(ptq, ss);
    auto restored = load_model(ss);
    for (std::size_t l = 0; l < ptq.layers.size(); ++l) {
        auto eff = ptq.effective_weight(ptq.layers[l]);
        EXPECT_EQ(restored.layers[l].weight.data, eff.data);
    }
}

TEST(RunPtq, SixteenBitMatchesFp32ValidationBce) {
    auto setup = desk_setup();
    const auto& fp32 = trained_fp32();
    const double bce_fp32 = evaluate_bce(fp32, setup);
    auto ptq16 = run_ptq(fp32, QuantSpec{16, Granularity::PerTensor});
    const double bce16 = evaluate_bce(ptq16, setup);
    EXPECT_LT(std::abs(bce16 - bce_fp32), 1e-3);
}

TEST(RunPtq, FourBitDegradesRelativeToFp32) {
    auto setup = desk_setup();
    const auto& fp32 = trained_fp32();
    auto ptq4 = run_ptq(fp32, QuantSpec{4, Granularity::PerTensor});
    EXPECT_GE(evaluate_bce(ptq4, setup), evaluate_bce(fp32, setup));
}

TEST(RunQat, ZeroStepsEqualsPtq) {
    auto setup = desk_setup();
    setup.cfg.qat_steps = 0;
    const auto& fp32 = trained_fp32();
    auto ptq16 = run_ptq(fp32, QuantSpec{16, Granularity::PerTensor});
    auto qat16 = run_qat(fp32, QuantSpec{16, Granularity::PerTensor}, setup);

    Rng rng(5);
    auto batch = sample_batch(setup, setup.val_profiles, 2, true, rng);
    EXPECT_EQ(qat16.forward(batch.features).data, ptq16.forward(batch.features).data);
}

TEST(RunQat, FourBitImprovesOnPtqFourBit) {
    auto setup = desk_setup();
    const auto& fp32 = trained_fp32();
    const QuantSpec spec{4, Granularity::PerTensor};
    auto ptq4 = run_ptq(fp32, spec);
    auto qat4 = run_qat(fp32, spec, setup);
    const double bce_ptq = evaluate_bce(ptq4, setup);
    const double bce_qat = evaluate_bce(qat4, setup);
    EXPECT_LE(bce_qat, bce_ptq) << "ptq " << bce_ptq << " qat " << bce_qat;
}

TEST(RunQat, MasterWeightsStayOffGrid) {
    auto setup = desk_setup();
    setup.cfg.qat_steps = 20;
    const auto& fp32 = trained_fp32();
    auto qat4 = run_qat(fp32, QuantSpec{4, Granularity::PerTensor}, setup);

    // Serialize master copies (force_fp32) and look for off-grid values.
    std::stringstream ss;
    save_model(qat4, ss, /*force_fp32=*/true);
    auto restored = load_model(ss);
    int off_grid = 0;
    for (std::size_t l = 0; l < restored.layers.size(); ++l) {
        auto eff = restored.effective_weight(restored.layers[l]);
        for (std::int64_t i = 0; i < eff.numel(); ++i)
            if (eff.data[i] != restored.layers[l].weight.data[i]) ++off_grid;
    }
    EXPECT_GT(off_grid, 0) << "QAT master copies should not sit on the quantization grid";

    // And the forward-effective weights always sit on the grid.
    for (std::size_t l = 0; l < qat4.layers.size(); ++l) {
        auto eff = qat4.effective_weight(qat4.layers[l]);
        FakeQuantizer<float> q{qat4.cfg.quant_spec, qat4.layers[l].w_alpha.data,
                               qat4.layers[l].w_beta.data};
        auto again = fake_quant_forward(eff, q);
        EXPECT_EQ(again.data, eff.data);
    }
}

TEST(RunQat, FineQuantizationTracksFp32Trajectory) {
    // b=16 with wide bounds is a near-identity: ten steps from the same
    // state, same batch stream and rate, trajectories agree to < 1e-3.
    auto setup = desk_setup();
    auto base = trained_fp32();

    auto fp32_branch = base;
    auto r1 = run_training_phase(fp32_branch, setup, {10, 1e-4, false, 0xABC});

    auto qat_branch = base;
    qat_branch.attach_quantizers(QuantSpec{16, Granularity::PerTensor}, QuantMode::Qat);
    for (auto& l : qat_branch.layers) {  // widen so nothing clips
        for (auto& v : l.w_alpha.data) v *= 2.0f;
        for (auto& v : l.w_beta.data) v *= 2.0f;
        for (auto& v : l.b_alpha.data) v *= 2.0f;
        for (auto& v : l.b_beta.data) v *= 2.0f;
    }
    auto r2 = run_training_phase(qat_branch, setup, {10, 1e-4, false, 0xABC});

    ASSERT_EQ(r1.log.size(), r2.log.size());
    for (std::size_t i = 0; i < r1.log.size(); ++i)
        EXPECT_NEAR(r1.log[i].loss, r2.log[i].loss, 1e-3) << "step " << i;
}

TEST(EvaluateBce, FixedModelAndSetGiveBitIdenticalScalar) {
    auto setup = desk_setup();
    const auto& model = trained_fp32();
    EXPECT_EQ(evaluate_bce(model, setup), evaluate_bce(model, setup));
}

TEST(EvaluateBce, OracleAndZeroLlrValues) {
    // Perfect LLRs clipped to +-30 give ~0; all-zero LLRs give ln 2.
    Rng rng(3);
    Tensor<float> targets({1, 64});
    for (auto& t : targets.data) t = rng.bit() ? 1.0f : 0.0f;
    Tensor<float> oracle({1, 64});
    for (std::int64_t i = 0; i < 64; ++i)
        oracle.data[i] = targets.data[i] > 0.5f ? 30.0f : -30.0f;  // bit-1 logits
    EXPECT_LT(bce_with_logits_forward(oracle, targets), 1e-9);

    Tensor<float> zeros({1, 64});
    EXPECT_NEAR(bce_with_logits_forward(zeros, targets), std::log(2.0f), 1e-6);
}

TEST(TrainLog, CsvSchemaAndDeterministicContent) {
    std::vector<StepLog> rows = {{0, 0.75, 1e-3, 0, 12}, {1, 0.7, 1e-3, 1, 25}};
    write_train_log("/tmp/qrx_train_log_test.csv", rows);
    std::ifstream f("/tmp/qrx_train_log_test.csv");
    std::string line;
    std::getline(f, line);
    EXPECT_EQ(line, "step,loss,lr,clip_events,wall_ms");
    std::getline(f, line);
    EXPECT_EQ(line, "0,0.75,0.001,0,12");
}

TEST(TrainConfigValidation, QatRateMustBeBelowFp32Rate) {
    auto setup = desk_setup();
    setup.cfg.qat_lr = setup.cfg.fp32_lr;
    EXPECT_THROW(setup.cfg.validate(), ConfigError);
    setup.cfg.qat_lr = 2e-3;
    EXPECT_THROW(setup.cfg.validate(), ConfigError);
}
