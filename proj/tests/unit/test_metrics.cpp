#include "test_util.hpp"

#include <sstream>

using namespace viscoreg;

namespace {

std::vector<double> brute_nearest(const Points& Q, const Points& T) {
    std::vector<double> d;
    for (Eigen::Index i = 0; i < Q.cols(); ++i) d.push_back((T.colwise() - Q.col(i)).colwise().norm().minCoeff());
    return d;
}

}  // namespace

TEST(Metrics, KdTreeMatchesBruteForce) {
    for (int dim : {2, 3}) {
        const Points T = vt::random_points(dim, 500, 1 + dim);
        const Points Q = vt::random_points(dim, 300, 7 + dim, 0.8);
        const auto fast = nearest_distances(Q, T, 2);
        const auto slow = brute_nearest(Q, T);
        for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_DOUBLE_EQ(fast[i], slow[i]);
    }
}

TEST(Metrics, KdTreeHandlesDuplicatesDeterministically) {
    Points T(2, 4);
    T << 0, 0, 1, 1, 0, 0, 1, 1;
    KdTree tree(T);
    const auto hit = tree.nearest(Vec::Zero(2));
    EXPECT_EQ(hit.index, 0);
    EXPECT_EQ(hit.dist2, 0.0);
}

TEST(Metrics, ChamferAndHausdorffOnKnownSets) {
    Points A(2, 2), B(2, 1);
    A << 0, 1, 0, 0;
    B << 0, 0;
    // A->B distances {0, 1}, B->A distances {0}.
    EXPECT_DOUBLE_EQ(chamfer(A, B), 0.5 * (0.5 + 0.0));
    EXPECT_DOUBLE_EQ(squared_chamfer(A, B), 0.5 * (0.5 + 0.0));
    EXPECT_DOUBLE_EQ(hausdorff(A, B), 1.0);
    EXPECT_DOUBLE_EQ(chamfer(A, A), 0.0);
    EXPECT_DOUBLE_EQ(chamfer(A, B), chamfer(B, A));
}

TEST(Metrics, ConcentricCirclesDistanceIsRadiusGap) {
    const int n = 4000;
    Points A(2, n), B(2, n);
    for (int i = 0; i < n; ++i) {
        const double t = 2 * M_PI * i / n;
        A.col(i) << 0.4 * std::cos(t), 0.4 * std::sin(t);
        B.col(i) << 0.45 * std::cos(t), 0.45 * std::sin(t);
    }
    EXPECT_NEAR(chamfer(A, B), 0.05, 1e-6);
    EXPECT_NEAR(hausdorff(A, B), 0.05, 1e-6);
}

TEST(Metrics, IouOfNestedSets) {
    const std::vector<bool> a{true, true, false, false}, b{true, false, false, false};
    EXPECT_DOUBLE_EQ(iou(a, b), 0.5);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
}

TEST(Metrics, MeshSamplesLieOnTheMesh) {
    GridField g = GridField::covering(Box::centered_cube(3, 1.1), 24);
    fill_grid(g, [](const Vec& x) { return x.norm() - 0.4; });
    const SurfaceMesh m = march(g, 0.0);
    const Points s = sample_mesh_surface(m, 2000, 3);
    for (Eigen::Index i = 0; i < s.cols(); ++i) EXPECT_NEAR(s.col(i).norm(), 0.4, 0.01);
    EXPECT_EQ(s, sample_mesh_surface(m, 2000, 3));
}

TEST(Metrics, TableAndCsvFormats) {
    MetricsReport r;
    r.chamfer = 0.1;
    r.hausdorff = 0.2;
    r.squared_chamfer = 0.03;
    std::ostringstream csv, table;
    r.write_csv_row(csv, "x");
    std::string row = csv.str();
    std::stringstream fields(row);
    std::string label, c;
    std::getline(fields, label, ',');
    std::getline(fields, c, ',');
    EXPECT_EQ(label, "x");
    EXPECT_DOUBLE_EQ(std::stod(c), 0.1);
    write_metrics_table(table, {{"x", r}});
    EXPECT_NE(table.str().find("Squared Chamfer"), std::string::npos);
    EXPECT_THROW(chamfer(Points(2, 0), Points::Zero(2, 1)), InvalidArgument);
}

TEST(Metrics, QuadratureRatesOfGridAndMonteCarlo) {
    const Box box{Vec::Zero(2), Vec::Ones(2)};
    auto g = [](const Vec& x) { return std::exp(x(0)) * std::cos(x(1)); };
    const double exact = (M_E - 1.0) * std::sin(1.0);
    EXPECT_NEAR(fine_grid_integral(g, box), exact, 1e-8);
    // An equal-weight node lattice is first order in h, so N^(-1/2) in 2D.
    const QuadratureFit grid = quadrature_rate(grid_sampler(box), g, exact, {1600, 6400, 25600, 102400}, 0);
    EXPECT_NEAR(grid.beta_hat, 0.5, 0.05);
    std::vector<double> betas;
    for (std::uint64_t s = 0; s < 20; ++s)
        betas.push_back(quadrature_rate(monte_carlo_sampler(box), g, exact, {100, 400, 1600, 6400, 25600}, s).beta_hat);
    EXPECT_NEAR(median(betas), 0.5, 0.15);
}

TEST(Metrics, RankCorrelation) {
    EXPECT_EQ(average_ranks({3.0, 1.0, 3.0, 2.0}), (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 1000}), 1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
    EXPECT_TRUE(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
}
