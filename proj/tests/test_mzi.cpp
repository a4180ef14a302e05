#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include <pnsim/analysis.hpp>
#include <pnsim/mzi.hpp>

using namespace pnsim;
using std::numbers::pi;

namespace {

const NumberState kTwoPi({0.838, 0.051, 0.111}, 0.734);

ExperimentConfig small_config(const NumberState& s, std::uint64_t seed = 1) {
    ExperimentConfig c;
    c.state = s;
    c.n_bins = 200;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(PhaseDrift, ZeroRateIsConstant) {
    const auto d = DriftParams::none(0.7);
    for (double t : {0.0, 1.0, 50.0, 99.9}) EXPECT_DOUBLE_EQ(phase_drift(d, 3, t), 0.7);
}

TEST(PhaseDrift, DefaultCoversSeveralFringes) {
    const PhaseDrift drift(DriftParams{}, 1, 100.0);
    double lo = 1e9, hi = -1e9;
    for (int k = 0; k <= 1000; ++k) {
        const double v = drift.at(0.1 * k);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_GE(hi - lo, 2 * pi);
}

TEST(PhaseDrift, DeterministicAndSeedDependent) {
    const PhaseDrift a(DriftParams{}, 9, 50.0), b(DriftParams{}, 9, 50.0), c(DriftParams{}, 10, 50.0);
    bool differs = false;
    for (int k = 0; k < 500; ++k) {
        EXPECT_EQ(a.at(0.1 * k), b.at(0.1 * k));
        differs |= a.at(0.1 * k) != c.at(0.1 * k);
    }
    EXPECT_TRUE(differs);
    EXPECT_EQ(phase_drift(DriftParams{}, 9, 12.3), a.at(12.3));
}

TEST(PhaseDrift, QuasiStaticWithinAcquisitionBin) {
    const PhaseDrift drift(DriftParams{}, 4, 800.0);
    double worst = 0.0;
    for (int k = 0; k < 980; ++k) worst = std::max(worst, std::abs(drift.at(0.81 * (k + 1)) - drift.at(0.81 * k)));
    EXPECT_LT(worst, pi / 2);
    EXPECT_THROW(drift.at(-1.0), ValidationError);
    EXPECT_THROW(drift.at(1e6), ValidationError);
}

TEST(ThetaToM, Examples) {
    EXPECT_NEAR(theta_to_M(0.0, 0.903), 0.903, 1e-15);
    EXPECT_NEAR(theta_to_M(pi / 2, 0.903), 0.0, 1e-15);
    EXPECT_NEAR(theta_to_M(pi / 4, 1.0), 0.5, 1e-15);
    EXPECT_THROW(theta_to_M(0.0, 1.2), ValidationError);
}

TEST(ExperimentConfig, Defaults) {
    ExperimentConfig c;
    EXPECT_DOUBLE_EQ(c.rep_period_ns, 24.67);
    EXPECT_DOUBLE_EQ(c.mzi_delay_ns, 12.34);
    EXPECT_DOUBLE_EQ(c.coincidence_window_ns, 2.0);
    EXPECT_NEAR(c.pulses(), 810e6 / 24.67, 1e-6);
    c.theta_rad = pi / 2;
    EXPECT_NEAR(c.effective_M(), 0.0, 1e-15);
    c.efficiency = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Synthesize, SinglePhotonsShowNoZeroDelayCoincidences) {
    auto c = small_config(NumberState::fock(1));
    const auto ts = synthesize(c);
    long long zero = 0, side = 0;
    for (std::size_t k = 0; k < ts.bins.size(); ++k) {
        zero += ts.at(k, 0);
        side += ts.at(k, 1);
    }
    EXPECT_EQ(zero, 0);
    EXPECT_GT(side, 0);
}

TEST(Synthesize, MixedStateSinglesAreFlat) {
    auto c = small_config(kTwoPi.with_lambda(0.0));
    c.n_bins = 1000;
    const auto ts = synthesize(c);
    double chi2 = 0.0;
    for (const auto& b : ts.bins) {
        const double n = static_cast<double>(b.counts_c + b.counts_d);
        const double dev = static_cast<double>(b.counts_c) - 0.5 * n;
        chi2 += dev * dev / (0.25 * n);
    }
    // chi2 / dof for 1000 binomial splits: sd sqrt(2/1000) ~ 0.045
    EXPECT_NEAR(chi2 / 1000.0, 1.0, 0.2);
}

TEST(Synthesize, NoiselessSinglesFollowHiddenPhase) {
    auto c = small_config(kTwoPi);
    c.noiseless = true;
    c.pulses_per_bin = 1e12;
    c.efficiency = 1.0;
    c.count_cap = 1e13;
    const auto ts = synthesize(c);
    const double v = singles_visibility(kTwoPi);
    for (const auto& b : ts.bins) {
        const double nc = static_cast<double>(b.counts_c) / static_cast<double>(b.counts_c + b.counts_d);
        EXPECT_NEAR(nc, 0.5 * (1 + v * std::cos(b.true_phi)), 1e-9);
    }
    EXPECT_TRUE(ts.has_true_phase());
}

TEST(Synthesize, DeterministicGivenSeed) {
    const auto a = synthesize(small_config(kTwoPi, 5));
    const auto b = synthesize(small_config(kTwoPi, 5));
    const auto c = synthesize(small_config(kTwoPi, 6));
    std::ostringstream sa, sb, sc;
    write_singles_csv(sa, a);
    write_singles_csv(sb, b);
    write_singles_csv(sc, c);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_NE(sa.str(), sc.str());
}

TEST(Synthesize, CountCapGuards) {
    auto c = small_config(kTwoPi);
    c.count_cap = 10.0;
    EXPECT_THROW(synthesize(c), ValidationError);
}

TEST(Synthesize, DarkCountsRaiseTheFloor) {
    auto c = small_config(NumberState::fock(1));
    c.dark_counts_per_s = 1e5;
    const auto ts = synthesize(c);
    long long zero = 0;
    for (std::size_t k = 0; k < ts.bins.size(); ++k) zero += ts.at(k, 0);
    EXPECT_GT(zero, 0);
}

TEST(Synthesize, ZeroDelayPeakGivesG2) {
    // Without number coherence, zero / side = Cbar = g2 / 2 at every phase.
    auto c = small_config(kTwoPi.with_lambda(0.0));
    c.n_bins = 400;  // 1.3e10 pulses
    const auto ts = synthesize(c);
    const auto h = ts.histogram();
    const double zero = static_cast<double>(h[static_cast<std::size_t>(ts.half_width)]);
    double side = 0.0;
    for (int d = 1; d <= ts.half_width; ++d)
        side += static_cast<double>(h[static_cast<std::size_t>(ts.half_width + d)] + h[static_cast<std::size_t>(ts.half_width - d)]);
    side /= 2.0 * ts.half_width;
    const double g2 = 2.0 * zero / side;
    const double sigma = g2 * std::sqrt(1.0 / zero + 1.0 / (2.0 * ts.half_width * side));
    EXPECT_NEAR(g2, g2_zero(kTwoPi), 3.0 * sigma);
}

TEST(ApplyLoss, Algebra) {
    ExperimentConfig c;
    c.efficiency = 0.2;
    EXPECT_DOUBLE_EQ(apply_loss(c, 1.0).efficiency, 0.2);
    EXPECT_DOUBLE_EQ(apply_loss(apply_loss(c, 0.5), 0.5).efficiency, apply_loss(c, 0.25).efficiency);
    EXPECT_THROW(apply_loss(c, 0.0), ValidationError);
    EXPECT_THROW(apply_loss(c, 1.5), ValidationError);
}

TEST(ApplyLoss, CountsScaleAndVisibilityStays) {
    auto c = small_config(kTwoPi, 8);
    c.n_bins = 1000;
    const auto lossy = apply_loss(c, 0.1);
    const auto a = synthesize(c);
    const auto b = synthesize(lossy);
    double ta = 0, tb = 0;
    for (std::size_t k = 0; k < a.bins.size(); ++k) {
        ta += static_cast<double>(a.bins[k].counts_c + a.bins[k].counts_d);
        tb += static_cast<double>(b.bins[k].counts_c + b.bins[k].counts_d);
    }
    EXPECT_NEAR(tb / ta, 0.1, 0.001);
    const auto va = extract_visibility(time_to_phase(a));
    const auto vb = extract_visibility(time_to_phase(b));
    EXPECT_LT(std::abs(va.v - vb.v), 3.0 * std::hypot(va.std_error, vb.std_error));
}

TEST(Csv, StreamRoundTrip) {
    const auto ts = synthesize(small_config(kTwoPi));
    std::stringstream singles, by_bin;
    write_singles_csv(singles, ts);
    write_coincidences_by_bin_csv(by_bin, ts);
    const auto back = read_stream(singles, by_bin);
    ASSERT_EQ(back.bins.size(), ts.bins.size());
    EXPECT_EQ(back.half_width, ts.half_width);
    for (std::size_t k = 0; k < ts.bins.size(); ++k) {
        EXPECT_EQ(back.bins[k].counts_c, ts.bins[k].counts_c);
        EXPECT_EQ(back.bins[k].counts_d, ts.bins[k].counts_d);
        EXPECT_NEAR(back.bins[k].true_phi, ts.bins[k].true_phi, 1e-12);
        EXPECT_EQ(back.coincidences[k], ts.coincidences[k]);
    }
}

TEST(Csv, SinglesWithoutPhaseColumn) {
    const auto ts = synthesize(small_config(kTwoPi));
    std::stringstream singles, by_bin;
    write_singles_csv(singles, ts, false);
    write_coincidences_by_bin_csv(by_bin, ts);
    const auto back = read_stream(singles, by_bin);
    EXPECT_FALSE(back.has_true_phase());
}

TEST(Csv, MalformedRowReportsLine) {
    std::stringstream singles("bin_index,t_ms,counts_c,counts_d\n0,0,10,12\n1,810,eleven,9\n");
    std::stringstream by_bin("bin_index,delta_pulses,coincidences\n0,-1,1\n0,0,0\n0,1,2\n");
    try {
        read_stream(singles, by_bin);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    std::stringstream bad_header("bin,t,c,d\n");
    std::stringstream ok_bins("bin_index,delta_pulses,coincidences\n");
    EXPECT_THROW(read_stream(bad_header, ok_bins), ParseError);
    std::stringstream short_row("bin_index,t_ms,counts_c,counts_d\n0,0,10\n");
    std::stringstream bins2("bin_index,delta_pulses,coincidences\n");
    EXPECT_THROW(read_stream(short_row, bins2), ParseError);
}

TEST(Csv, HistogramRoundTrip) {
    const auto ts = synthesize(small_config(kTwoPi));
    std::stringstream os;
    write_histogram_csv(os, ts);
    const auto h = read_histogram(os);
    const auto expected = ts.histogram();
    ASSERT_EQ(h.size(), expected.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
        EXPECT_EQ(h[k].first, static_cast<int>(k) - ts.half_width);
        EXPECT_EQ(h[k].second, expected[k]);
    }
}

TEST(Json, ExperimentSidecarRoundTrip) {
    auto c = small_config(NumberState({0.6, 0.3, 0.1}, 0.8, {0.2, 0.5}), 77);
    c.theta_rad = 0.3;
    c.drift.ou_sigma_rad = 0.1;
    const auto back = experiment_from_json(to_json(c));
    for (std::size_t n = 0; n <= 2; ++n) EXPECT_NEAR(back.state.population(n), c.state.population(n), 1e-15);
    EXPECT_EQ(back.state.phases(), c.state.phases());
    EXPECT_EQ(*back.theta_rad, 0.3);
    EXPECT_EQ(back.seed, 77u);
    EXPECT_EQ(back.drift.ou_sigma_rad, 0.1);
    auto jc = to_json(c), jb = to_json(back);
    jc.erase("state");
    jb.erase("state");
    EXPECT_EQ(jb.dump(), jc.dump());
}

TEST(Config, ExperimentFromKeyValues) {
    std::istringstream is(
        "p = 0.838, 0.051, 0.111\nlambda = 0.734\nn_bins = 50\nseed = 4\nefficiency = 0.02\n"
        "drift_rate_rad_per_s = 0.5\n");
    const auto kv = KeyValueConfig::parse(is);
    kv.require_known(experiment_config_keys());
    const auto c = experiment_from(kv);
    EXPECT_EQ(c.n_bins, 50u);
    EXPECT_EQ(c.seed, 4u);
    EXPECT_DOUBLE_EQ(c.efficiency, 0.02);
    EXPECT_DOUBLE_EQ(c.drift.rate_rad_per_s, 0.5);
    EXPECT_DOUBLE_EQ(c.state.lambda(), 0.734);
}
