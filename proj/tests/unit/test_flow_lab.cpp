#include "test_util.hpp"

using namespace viscoreg;

TEST(FlowLab, GrowthExponentClosedForm) {
    EXPECT_DOUBLE_EQ(linear_growth_exponent({3, 0, 1, 0.0}, 1).real(), 9.0);
    EXPECT_DOUBLE_EQ(linear_growth_exponent({3, 0, -1, 0.0}, 1).real(), -9.0);
    // eps^2 |w|^4 > w1^2 makes the mode decay even when kappa_e = 1.
    EXPECT_LT(linear_growth_exponent({3, 4, 1, 0.3}, 1).real(), 0.0);
    const Complex l2 = linear_growth_exponent({2, 1, 1, 0.1}, 2);
    EXPECT_DOUBLE_EQ(l2.real(), -4.0 - 0.01 * 25.0);
    EXPECT_DOUBLE_EQ(l2.imag(), 8.0);
}

TEST(FlowLab, SpectrumOfSingleModeAndParseval) {
    const FlowState s = single_mode(16, 3, -2, 2.0);
    const auto c = spectrum(s);
    EXPECT_NEAR(std::abs(c(fft_index(3, 16), fft_index(-2, 16))), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(c(fft_index(-3, 16), fft_index(2, 16))), 1.0, 1e-12);
    double energy = 0.0;
    for (double e : band_energies(c, default_bands(16))) energy += e;
    double mean_sq = 0.0;
    for (double v : s.field.values) mean_sq += v * v;
    EXPECT_NEAR(energy, mean_sq / 256.0, 1e-12);
}

TEST(FlowLab, LinearFlowMatchesExponential) {
    const FlowState init = single_mode(32, 5, 2);
    for (int p : {1, 2}) {
        const ModeSpec m{5, 2, 1, 0.2};
        const FlowTrajectory tr = simulate_linear_flow(init, m.kappa_e, m.epsilon, p, 0.05, 0.01);
        const auto c0 = spectrum(init), c1 = spectrum(tr.final_state);
        const Complex ratio = c1(5, 2) / c0(5, 2);
        const Complex expect = std::exp(linear_growth_exponent(m, p) * 0.05);
        EXPECT_NEAR(std::abs(ratio - expect), 0.0, 1e-10 * std::abs(expect)) << "p=" << p;
    }
}

TEST(FlowLab, ZeroFieldStaysZero) {
    const FlowTrajectory tr = simulate_linear_flow(FlowState::zeros(16), 1, 0.1, 1, 0.1, 0.01);
    EXPECT_EQ(tr.final_state.max_abs(), 0.0);
    for (const auto& row : tr.energy)
        for (double e : row) EXPECT_EQ(e, 0.0);
}

TEST(FlowLab, NonlinearFlowConservesMeanAndRespectsCfl) {
    const FlowState init = perturbed_ramp(32, 12, 1e-3, 4);
    const double dt = flow_dt_max(init.field.h, 0.3);
    const FlowTrajectory tr = simulate_eikonal_flow(init, 0.3, 2, 0.01, dt);
    EXPECT_FALSE(tr.blew_up);
    EXPECT_NEAR(tr.final_state.mean(), init.mean(), 1e-12);
    EXPECT_LT(tr.high_band.back(), tr.high_band.front());
    EXPECT_THROW(simulate_eikonal_flow(init, 0.3, 2, 0.01, 2 * dt), InvalidArgument);
}

TEST(FlowLab, ViscosityDampsHighBandRelativeToPlainFlow) {
    const FlowState init = perturbed_ramp(32, 12, 1e-3, 1);
    const double dt = flow_dt_max(init.field.h, 0.3);
    const FlowTrajectory visc = simulate_eikonal_flow(init, 0.3, 2, 0.02, dt);
    const FlowTrajectory plain = simulate_eikonal_flow(init, 0.0, 2, 0.02, dt);
    EXPECT_LT(visc.high_band.back(), plain.high_band.back());
}

TEST(FlowLab, BandCsvHeader) {
    const FlowTrajectory tr = simulate_linear_flow(single_mode(8, 1, 0), 1, 0.0, 1, 0.02, 0.01);
    std::ostringstream os;
    tr.write_band_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,band_lo,band_hi,energy");
}

TEST(FlowLab, RejectsInvalidInput) {
    EXPECT_THROW(FlowState::zeros(2), InvalidArgument);
    EXPECT_THROW(linear_growth_exponent({1, 0, 2, 0.0}, 1), InvalidArgument);
    EXPECT_THROW(simulate_linear_flow(perturbed_ramp(16, 2, 1e-3, 0), 1, 0.0, 1, 0.1, 0.01), InvalidArgument);
}
