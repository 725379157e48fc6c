#include <gtest/gtest.h>

#include <sstream>

#include "qrx/ldpc.hpp"
#include "qrx/rng.hpp"

using namespace qrx;

namespace {

const char* kToyPath = "data/ldpc/toy_n12.alist";
const char* kBundledPath = "data/ldpc/n648_r12.alist";

std::vector<std::uint8_t> random_info(const LdpcCode& code, Rng& rng) {
    std::vector<std::uint8_t> info(static_cast<std::size_t>(code.k()));
    for (auto& b : info) b = rng.bit();
    return info;
}

std::vector<double> noiseless_llrs(const std::vector<std::uint8_t>& cw, double mag = 20.0) {
    std::vector<double> llr(cw.size());
    for (std::size_t i = 0; i < cw.size(); ++i) llr[i] = cw[i] ? -mag : mag;
    return llr;
}

} // namespace

TEST(Alist, ParsesBundledCodes) {
    auto toy = load_alist(kToyPath);
    EXPECT_EQ(toy.n, 12);
    EXPECT_EQ(toy.m, 6);
    auto big = load_alist(kBundledPath);
    EXPECT_EQ(big.n, 648);
    EXPECT_EQ(big.m, 324);
}

TEST(Alist, RoundTripThroughWriter) {
    auto h = load_alist(kToyPath);
    std::stringstream ss;
    write_alist(ss, h);
    auto h2 = parse_alist(ss, "roundtrip");
    EXPECT_EQ(h2.n, h.n);
    EXPECT_EQ(h2.m, h.m);
    EXPECT_EQ(h2.rows, h.rows);
}

TEST(Alist, RejectsInconsistentDegreeListsWithLineNumbers) {
    // Column 1 declares weight 2 but lists only one nonzero row index.
    const char* bad =
        "4 2\n"
        "2 4\n"
        "2 1 1 1\n"
        "3 2\n"
        "1 0\n"
        "2 0\n"
        "1 0\n"
        "2 0\n"
        "1 2 3 0\n"
        "4 0 0 0\n";
    std::istringstream is(bad);
    try {
        parse_alist(is, "bad.alist");
        FAIL() << "expected LdpcError";
    } catch (const LdpcError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("bad.alist:"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column 1"), std::string::npos) << msg;
    }
}

TEST(Alist, RejectsOutOfRangeIndex) {
    const char* bad =
        "2 1\n"
        "1 2\n"
        "1 1\n"
        "2\n"
        "1\n"
        "5\n"  // row index 5 out of range (m = 1)
        "1 2\n";
    std::istringstream is(bad);
    EXPECT_THROW(parse_alist(is, "oob.alist"), LdpcError);
}

TEST(Alist, RejectsCrossBlockDisagreement) {
    const char* bad =
        "3 2\n"
        "1 2\n"
        "1 1 1\n"
        "2 1\n"
        "1\n"
        "1\n"
        "2\n"
        "1 3\n"  // row 1 claims columns {1,3}; column block says {1,2}
        "2 0\n";
    std::istringstream is(bad);
    try {
        parse_alist(is, "mismatch.alist");
        FAIL() << "expected LdpcError";
    } catch (const LdpcError& e) {
        EXPECT_NE(std::string(e.what()).find("disagrees"), std::string::npos) << e.what();
    }
}

TEST(Ldpc, RankDeficientMatrixRejected) {
    ParityCheck h;
    h.n = 4;
    h.m = 2;
    h.rows = {{0, 1}, {0, 1}};  // duplicate rows
    EXPECT_THROW(LdpcCode{h}, LdpcError);
}

TEST(Ldpc, AllZeroInfoGivesAllZeroCodeword) {
    for (const char* path : {kToyPath, kBundledPath}) {
        auto code = LdpcCode::from_alist(path);
        std::vector<std::uint8_t> info(static_cast<std::size_t>(code.k()), 0);
        auto cw = code.encode(info);
        for (auto b : cw) EXPECT_EQ(b, 0);
        EXPECT_TRUE(code.syndrome_ok(cw));
    }
}

TEST(Ldpc, EveryEncodedCodewordHasZeroSyndrome) {
    Rng rng(83);
    for (const char* path : {kToyPath, kBundledPath}) {
        auto code = LdpcCode::from_alist(path);
        EXPECT_EQ(code.k(), code.n() / 2);
        for (int trial = 0; trial < 20; ++trial) {
            auto cw = code.encode(random_info(code, rng));
            EXPECT_TRUE(code.syndrome_ok(cw));
        }
    }
}

TEST(Ldpc, NoiselessDecodeIsExactAndImmediate) {
    Rng rng(89);
    for (const char* path : {kToyPath, kBundledPath}) {
        auto code = LdpcCode::from_alist(path);
        auto info = random_info(code, rng);
        auto cw = code.encode(info);
        auto res = code.decode(noiseless_llrs(cw));
        EXPECT_TRUE(res.converged);
        EXPECT_LE(res.iterations, 1);
        EXPECT_EQ(res.codeword, cw);
        EXPECT_EQ(res.info_bits, info);
    }
}

TEST(Ldpc, ToyCodeMatchesExhaustiveMlForWeightOnePatterns) {
    auto code = LdpcCode::from_alist(kToyPath);
    const int n = code.n(), k = code.k();
    ASSERT_EQ(n, 12);
    ASSERT_LE(k, 8);

    std::vector<std::vector<std::uint8_t>> codewords;
    for (int u = 0; u < (1 << k); ++u) {
        std::vector<std::uint8_t> info(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) info[j] = (u >> j) & 1;
        codewords.push_back(code.encode(info));
    }

    // Distinct nonzero columns guarantee d_min >= 3, so ML is unique for
    // weight-1 patterns; min-sum must agree with exhaustive ML everywhere.
    for (const auto& cw : codewords) {
        for (int flip = -1; flip < n; ++flip) {
            auto llr = noiseless_llrs(cw, 8.0);
            if (flip >= 0) llr[flip] = -llr[flip];
            int best = -1, best_d = n + 1;
            for (std::size_t c = 0; c < codewords.size(); ++c) {
                int d = 0;
                for (int j = 0; j < n; ++j) d += (codewords[c][j] != (llr[j] < 0 ? 1 : 0));
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            auto res = code.decode(llr);
            EXPECT_EQ(res.codeword, codewords[static_cast<std::size_t>(best)])
                << "flip " << flip;
            EXPECT_TRUE(res.converged);
        }
    }
}

TEST(Ldpc, SmallPerturbationBelowHalfMinDistanceDecodesExactly) {
    Rng rng(97);
    auto code = LdpcCode::from_alist(kToyPath);
    for (int trial = 0; trial < 50; ++trial) {
        auto info = random_info(code, rng);
        auto cw = code.encode(info);
        auto llr = noiseless_llrs(cw, 10.0);
        // One position (< d_min/2 = 1.5) gets a small adverse perturbation.
        const auto pos = rng.uniform_int(static_cast<std::uint64_t>(code.n()));
        llr[pos] *= -0.2;
        auto res = code.decode(llr);
        EXPECT_EQ(res.info_bits, info);
    }
}

TEST(Ldpc, WrongLengthInputsThrow) {
    auto code = LdpcCode::from_alist(kToyPath);
    std::vector<std::uint8_t> short_info(2);
    EXPECT_THROW(code.encode(short_info), LdpcError);
    std::vector<double> short_llr(5);
    EXPECT_THROW(code.decode(short_llr), LdpcError);
}
