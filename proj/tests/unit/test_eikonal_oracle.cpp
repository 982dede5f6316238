#include "test_util.hpp"

using namespace viscoreg;

TEST(Fmm, GodunovUpdateClosedForms) {
    // One-sided: u = a + f h. Two-sided symmetric: u = a + f h / sqrt(2).
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_DOUBLE_EQ(detail::godunov_update({1.0, inf, inf}, 2, 0.5), 1.5);
    EXPECT_NEAR(detail::godunov_update({1.0, 1.0, inf}, 2, 0.5), 1.0 + 0.5 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(detail::godunov_update({0.0, 0.0, 0.0}, 3, 1.0), 1.0 / std::sqrt(3.0), 1e-15);
    // Far-apart neighbors fall back to the one-sided update.
    EXPECT_DOUBLE_EQ(detail::godunov_update({0.0, 5.0, inf}, 2, 1.0), 1.0);
}

TEST(Fmm, PlaneWaveIsExactOnTheGrid) {
    const GridField geo = centered_grid(2, 1.0, 0.05);
    EikonalProblem prob = EikonalProblem::uniform(geo);
    for (Eigen::Index i = 0; i < geo.count(); ++i)
        if (geo.unflatten(i)[0] == 0) prob.boundary[static_cast<std::size_t>(i)] = 1;
    const GridField u = fmm_solve(prob);
    for (Eigen::Index i = 0; i < geo.count(); ++i)
        EXPECT_NEAR(u.values[static_cast<std::size_t>(i)], geo.point(i)(0) + 1.0, 1e-12);
}

TEST(Fmm, PointSourceErrorIsFirstOrder) {
    std::vector<double> err;
    for (double h : {0.04, 0.02, 0.01}) {
        const GridField geo = centered_grid(2, 1.0, h);
        const GridField u = fmm_solve(point_source_problem(geo, Vec::Zero(2)));
        double e = 0.0;
        for (Eigen::Index i = 0; i < geo.count(); ++i)
            e = std::max(e, std::abs(u.values[static_cast<std::size_t>(i)] - geo.point(i).norm()));
        EXPECT_LE(e, 3 * h);
        err.push_back(e);
    }
    EXPECT_LT(err[2], err[0]);
}

TEST(Fmm, AcceptanceOrderIsMonotone) {
    const GridField geo = centered_grid(3, 0.5, 0.05);
    std::vector<Eigen::Index> order;
    const EikonalProblem prob = point_source_problem(geo, Vec::Zero(3), 2.0);
    const GridField u = fmm_solve(prob, &order);
    // Every non-boundary node is accepted exactly once.
    ASSERT_EQ(order.size(), static_cast<std::size_t>(geo.count()) - prob.boundary_count());
    for (std::size_t k = 1; k < order.size(); ++k)
        EXPECT_LE(u.values[static_cast<std::size_t>(order[k - 1])], u.values[static_cast<std::size_t>(order[k])]);
}

TEST(Fmm, RejectsBadProblems) {
    const GridField geo = centered_grid(2, 0.5, 0.1);
    EikonalProblem p = point_source_problem(geo, Vec::Zero(2));
    p.slowness.values[3] = 0.0;
    EXPECT_THROW(fmm_solve(p), InvalidArgument);
    EikonalProblem q = EikonalProblem::uniform(geo);
    EXPECT_THROW(fmm_solve(q), InvalidArgument);
}

TEST(Lemmas, BoundaryShiftMovesSolutionByAtMostTheShift) {
    const GridField geo = centered_grid(2, 1.0, 0.02);
    const EikonalProblem prob = circle_problem(geo, 0.5, Vec::Zero(2));
    std::vector<double> g1(prob.boundary.size(), 0.0), g2(prob.boundary.size(), 0.0);
    for (std::size_t i = 0; i < g2.size(); ++i)
        if (prob.boundary[i]) g2[i] = 0.03;
    const LemmaReport r = verify_lemma1(prob, g1, g2);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.lhs, 0.03, 1e-12);
}

TEST(Lemmas, SlownessPerturbationBound) {
    const GridField geo = centered_grid(2, 1.0, 0.02);
    const EikonalProblem prob = circle_problem(geo, 0.5, Vec::Zero(2));
    std::vector<double> f1(prob.slowness.values.size(), 1.0), f2(f1.size(), 1.1);
    const LemmaReport r = verify_lemma2(prob, f1, f2, 1.0);
    EXPECT_TRUE(r.pass);
    EXPECT_LE(r.lhs, r.bound + r.slack);
}

TEST(Oracle, CircleSdfMatchesAnalytic) {
    const auto [cloud, shape] = prepare_shape(ShapeSpec::parse("circle"), 100, 1, 1.1);
    const GridField geo = GridField::covering(cloud.bbox, 41);
    const GridField sdf = signed_distance_oracle(shape, geo);
    for (Eigen::Index i = 0; i < geo.count(); ++i)
        EXPECT_NEAR(sdf.values[static_cast<std::size_t>(i)], shape.sdf(geo.point(i)), 1e-12);
}

TEST(Oracle, MandelbrotSdfSignsAgreeWithRayCrossings) {
    // The sampled boundary is the first escape-time crossing along each ray
    // from the ray origin, so the oracle's interior is that star-shaped region.
    const auto [cloud, shape] = prepare_shape(ShapeSpec::parse("mandelbrot"), 200, 1, 1.1);
    const GridField geo = GridField::covering(cloud.bbox, 33);
    const GridField sdf = signed_distance_oracle(shape, geo, 2048);
    const Vec o = shape.transform.apply(Points((Points(2, 1) << shape.spec.origin_re, shape.spec.origin_im).finished())).col(0);
    int agree = 0, counted = 0;
    for (Eigen::Index i = 0; i < geo.count(); ++i) {
        const Vec y = geo.point(i);
        const double a = std::atan2(y(1) - o(1), y(0) - o(0));
        const Vec hit = shape.transform.apply(Points(mandelbrot_ray_crossing(shape.spec, a).point)).col(0);
        const double gap = (hit - o).norm() - (y - o).norm();
        if (std::abs(gap) < 2 * geo.h) continue;
        ++counted;
        agree += (sdf.values[static_cast<std::size_t>(i)] < 0) == (gap > 0);
    }
    EXPECT_GT(counted, 800);
    EXPECT_GT(agree, 0.99 * counted);
}

TEST(Oracle, BoundDiagnosticsCsvAndUndefinedCorrelation) {
    const auto [cloud, shape] = prepare_shape(ShapeSpec::parse("circle"), 100, 1, 1.1);
    const SineMlpParams p = init_mfgi(Architecture{2, 1, 8, 30.0, 1.0}, 0);
    BoundDiagnosticsOptions opt;
    opt.grid_resolution = 17;
    opt.n_domain = 50;
    const BoundStudy few = bound_diagnostics({{0, p}, {1, p}}, shape, cloud.points, cloud.bbox, opt);
    EXPECT_FALSE(few.correlation_defined);
    const BoundStudy same = bound_diagnostics({{0, p}, {1, p}, {2, p}, {3, p}}, shape, cloud.points, cloud.bbox, opt);
    EXPECT_FALSE(same.correlation_defined);
    std::ostringstream os;
    same.write_csv(os);
    EXPECT_NE(os.str().find("not_estimated"), std::string::npos);
}
