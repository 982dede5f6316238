#include "test_util.hpp"

#include <sstream>

using namespace viscoreg;

namespace {

// Central differences of the scalar network and of its analytic gradient.
Vec fd_gradient(const SineMlpParams& p, const Vec& x, double h) {
    Vec g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vec a = x, b = x;
        a(k) += h;
        b(k) -= h;
        g(k) = (forward_value(p, a) - forward_value(p, b)) / (2 * h);
    }
    return g;
}

double fd_laplacian(const SineMlpParams& p, const Vec& x, double h) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vec a = x, b = x;
        a(k) += h;
        b(k) -= h;
        s += (forward_jet(p, a).grad(k) - forward_jet(p, b).grad(k)) / (2 * h);
    }
    return s;
}

}  // namespace

TEST(FieldNet, ParameterCountMatchesLayers) {
    const Architecture a = vt::small_arch(3, 2, 5);
    EXPECT_EQ(a.parameter_count(), 5u * 4 + 5u * 6 + 1u * 6);
    EXPECT_EQ(init_geometric(a, 1).net.size(), a.parameter_count());
}

TEST(FieldNet, JetsMatchFiniteDifferences) {
    for (int dim : {2, 3}) {
        const SineMlpParams p = init_geometric(vt::small_arch(dim, 2, 8, 5.0), 11 + dim);
        const Points x = vt::random_points(dim, 10, 3);
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
            const Jet2 j = forward_jet(p, x.col(i));
            const Vec g = fd_gradient(p, x.col(i), 1e-6);
            EXPECT_LT((j.grad - g).norm(), 1e-6 * std::max(1.0, g.norm()));
            const double lap = fd_laplacian(p, x.col(i), 1e-6);
            EXPECT_NEAR(j.laplacian, lap, 1e-5 * std::max(1.0, std::abs(lap)));
            EXPECT_NEAR(j.value, forward_value(p, x.col(i)), 1e-14);
        }
    }
}

TEST(FieldNet, KnownSingleNeuronNetwork) {
    // u(x) = a sin(w (c . x) + b) + d, for which everything is closed-form.
    Architecture arch{2, 1, 1, 2.0, 1.0};
    SineMlpParams p{arch, LayerSet::zeros_like(arch)};
    p.layers()[0].weight << 0.3, -0.4;
    p.layers()[0].bias << 0.1;
    p.layers()[1].weight << 1.5;
    p.layers()[1].bias << -0.2;
    const Vec x = (Vec(2) << 0.7, 0.2).finished();
    const double z = 2.0 * (0.3 * 0.7 - 0.4 * 0.2 + 0.1);
    const Jet2 j = forward_jet(p, x);
    EXPECT_NEAR(j.value, 1.5 * std::sin(z) - 0.2, 1e-14);
    EXPECT_NEAR(j.grad(0), 1.5 * std::cos(z) * 2.0 * 0.3, 1e-14);
    EXPECT_NEAR(j.grad(1), 1.5 * std::cos(z) * 2.0 * -0.4, 1e-14);
    EXPECT_NEAR(j.laplacian, -1.5 * std::sin(z) * 4.0 * (0.09 + 0.16), 1e-14);
}

TEST(FieldNet, BatchAndWorkerCountDoNotChangeResults) {
    const SineMlpParams p = init_mfgi(vt::small_arch(3, 2, 16, 30.0), 5);
    const Points x = vt::random_points(3, 700, 9);
    const JetBatch a = forward_jets(p, x, 1);
    const JetBatch b = forward_jets(p, x, 3);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.grad, b.grad);
    EXPECT_EQ(a.laplacian, b.laplacian);
    for (Eigen::Index i : {Eigen::Index{0}, Eigen::Index{300}, Eigen::Index{699}})
        EXPECT_EQ(forward_jet(p, x.col(i)).value, a.value(i));
}

TEST(FieldNet, LossGradientMatchesFiniteDifferences) {
    const SineMlpParams p = init_geometric(vt::small_arch(2, 2, 5, 3.0), 21);
    TrainBatch batch{vt::random_points(2, 12, 1), vt::random_points(2, 15, 2)};
    for (int pw : {1, 2}) {
        LossSpec spec;
        spec.weights.p = pw;
        spec.weights.alpha_exp = 3.0;
        spec.epsilon = 0.1;
        const LossAndGrad lg = loss_gradient(p, batch, spec);
        const Vec g = lg.grad.flatten();
        const Vec theta = p.net.flatten();
        SineMlpParams q = p;
        for (Eigen::Index k = 0; k < theta.size(); ++k) {
            const double h = 1e-6;
            Vec t = theta;
            t(k) += h;
            q.net.assign(t);
            const double up = loss_gradient(q, batch, spec).loss;
            t(k) -= 2 * h;
            q.net.assign(t);
            const double dn = loss_gradient(q, batch, spec).loss;
            const double fd = (up - dn) / (2 * h);
            EXPECT_NEAR(g(k), fd, 1e-5 * std::max(1.0, std::abs(fd))) << "p=" << pw << " coordinate " << k;
        }
    }
}

TEST(FieldNet, LossPartsMatchPointwiseDefinitions) {
    const SineMlpParams p = init_geometric(vt::small_arch(3, 1, 4, 2.0), 4);
    TrainBatch batch{vt::random_points(3, 5, 7), vt::random_points(3, 6, 8)};
    LossSpec spec;
    spec.epsilon = 0.25;
    spec.weights.p = 2;
    const LossAndGrad lg = loss_gradient(p, batch, spec);
    double lm = 0.0, lnm = 0.0, lv = 0.0, le = 0.0;
    auto add_eik = [&](const Jet2& j) {
        lv += std::pow(j.grad.norm() - 1.0 - 0.25 * j.laplacian, 2);
        le += std::pow(j.grad.norm() - 1.0, 2);
    };
    for (Eigen::Index i = 0; i < 5; ++i) {
        const Jet2 j = forward_jet(p, batch.surface_points.col(i));
        lm += std::abs(j.value);
        add_eik(j);
    }
    for (Eigen::Index i = 0; i < 6; ++i) {
        const Jet2 j = forward_jet(p, batch.domain_points.col(i));
        lnm += std::exp(-spec.weights.alpha_exp * std::abs(j.value));
        add_eik(j);
    }
    EXPECT_NEAR(lg.parts.manifold, lm / 5, 1e-13);
    EXPECT_NEAR(lg.parts.nonmanifold, lnm / 6, 1e-13);
    EXPECT_NEAR(lg.parts.eikonal_or_visco, lv / 11, 1e-12);
    EXPECT_NEAR(lg.eikonal_residual, le / 11, 1e-12);
    const auto& w = spec.weights;
    EXPECT_NEAR(lg.loss, w.alpha_m * lm / 5 + w.alpha_nm * lnm / 6 + w.alpha_e * lv / 11, 1e-9);
}

TEST(FieldNet, GradientIsIdenticalAcrossWorkerCounts) {
    const SineMlpParams p = init_mfgi(vt::small_arch(2, 2, 16, 30.0), 3);
    TrainBatch batch{vt::random_points(2, 600, 1), vt::random_points(2, 900, 2)};
    LossSpec spec;
    spec.epsilon = 0.3;
    const LossAndGrad a = loss_gradient(p, batch, spec, 1);
    const LossAndGrad b = loss_gradient(p, batch, spec, 4);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.grad, b.grad);
}

TEST(FieldNet, MfgiStartsNearTheSphere) {
    // Unperturbed MFGI is close to (|x|^2 - rho^2) / (2 rho), rho = 1 / (2 * sphere_scale):
    // zero on the sphere with unit gradient there.
    const SineMlpParams p = init_mfgi(Architecture{3, 2, 64, 30.0, 1.0}, 0, 1.6, 0.0);
    const double rho = 1.0 / (2.0 * 1.6);
    const Points x = vt::random_points(3, 200, 5);
    const RowVec u = forward_values(p, x);
    double err = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        err = std::max(err, std::abs(u(i) - (x.col(i).squaredNorm() - rho * rho) / (2 * rho)));
    EXPECT_LT(err, 0.05);
    const Vec on = (Vec(3) << rho, 0.0, 0.0).finished();
    const Jet2 j = forward_jet(p, on);
    EXPECT_NEAR(j.value, 0.0, 0.01);
    EXPECT_NEAR(j.grad.norm(), 1.0, 0.05);
}

TEST(FieldNet, CheckpointRoundTripIsExact) {
    const SineMlpParams p = init_mfgi(vt::small_arch(3, 2, 7, 30.0), 8);
    std::stringstream ss;
    write_checkpoint(ss, p);
    EXPECT_EQ(read_checkpoint(ss), p);
}

TEST(FieldNet, CheckpointRejectsBadInput) {
    std::stringstream bad("not-a-checkpoint 1\n");
    EXPECT_THROW(read_checkpoint(bad), IoError);
    std::stringstream ss;
    write_checkpoint(ss, init_geometric(vt::small_arch(2), 1));
    std::string text = ss.str();
    text.resize(text.size() / 2);
    std::stringstream truncated(text);
    EXPECT_THROW(read_checkpoint(truncated), IoError);
}

TEST(FieldNet, RejectsWrongInputDimensionAndNonFiniteWeights) {
    SineMlpParams p = init_geometric(vt::small_arch(2), 1);
    EXPECT_THROW(forward_jets(p, vt::random_points(3, 4, 1)), InvalidArgument);
    p.layers()[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(p.validate(), NonFiniteError);
    EXPECT_THROW((Architecture{4, 1, 1, 1.0, 1.0}.validate()), InvalidArgument);
}
