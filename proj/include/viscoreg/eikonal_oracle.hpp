#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "viscoreg/metrics.hpp"

namespace viscoreg {

/// ||grad u|| = f on a grid with u = g on the boundary nodes. grid holds the
/// geometry and, in its values, the slowness f per node.
struct EikonalProblem {
    GridField slowness;
    std::vector<char> boundary;
    std::vector<double> boundary_values;
    /// Recorded bound 1/c_f <= f <= c_f.
    double c_f = 1.0;

    static EikonalProblem uniform(const GridField& geometry, double f = 1.0) {
        EikonalProblem p;
        p.slowness = geometry;
        std::fill(p.slowness.values.begin(), p.slowness.values.end(), f);
        p.boundary.assign(p.slowness.values.size(), 0);
        p.boundary_values.assign(p.slowness.values.size(), 0.0);
        p.c_f = std::max(f, 1.0 / f);
        return p;
    }

    /// Smallest c with 1/c <= f <= c over the grid.
    double tight_c_f() const {
        double c = 1.0;
        for (double f : slowness.values) c = std::max({c, f, 1.0 / f});
        return c;
    }

    std::size_t boundary_count() const {
        std::size_t n = 0;
        for (char b : boundary) n += b != 0;
        return n;
    }

    void validate() const {
        slowness.validate();
        require(boundary.size() == slowness.values.size() && boundary_values.size() == slowness.values.size(),
                "eikonal problem: mask/value sizes do not match the grid");
        require(boundary_count() > 0, "eikonal problem: boundary mask is empty");
        require(std::isfinite(c_f) && c_f >= 1.0, "eikonal problem: c_f must be finite and >= 1");
        for (double f : slowness.values) {
            if (!(f > 0.0)) throw InvalidArgument("eikonal problem: slowness must be positive");
            require(f >= 1.0 / c_f * (1.0 - 1e-12) && f <= c_f * (1.0 + 1e-12), "eikonal problem: slowness violates c_f");
        }
        for (std::size_t i = 0; i < boundary.size(); ++i)
            if (boundary[i]) require(std::isfinite(boundary_values[i]), "eikonal problem: boundary values must be finite");
    }
};

namespace detail {

// Godunov upwind update: the largest root of sum_k (u - a_k)_+^2 = (f h)^2.
inline double godunov_update(std::array<double, 3> a, int d, double fh) {
    std::sort(a.begin(), a.begin() + d);
    double u = a[0] + fh;
    double s1 = a[0], s2 = a[0] * a[0];
    for (int m = 2; m <= d; ++m) {
        if (!(u > a[static_cast<std::size_t>(m - 1)])) break;
        const double am = a[static_cast<std::size_t>(m - 1)];
        if (!std::isfinite(am)) break;
        s1 += am;
        s2 += am * am;
        const double disc = s1 * s1 - m * (s2 - fh * fh);
        u = (s1 + std::sqrt(std::max(0.0, disc))) / m;
    }
    return u;
}

}  // namespace detail

/// First-order fast marching. If order is given it receives the node indices
/// in acceptance order (boundary nodes excluded).
inline GridField fmm_solve(const EikonalProblem& prob, std::vector<Eigen::Index>* order = nullptr) {
    prob.validate();
    const GridField& g = prob.slowness;
    const int d = g.dim;
    const Eigen::Index n = g.count();
    constexpr double inf = std::numeric_limits<double>::infinity();
    GridField u = g;
    std::fill(u.values.begin(), u.values.end(), inf);
    enum : char { far, trial, known };
    std::vector<char> state(static_cast<std::size_t>(n), far);
    using Entry = std::pair<double, Eigen::Index>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

    auto neighbors = [&](Eigen::Index flat, auto&& visit) {
        const auto idx = g.unflatten(flat);
        for (int k = 0; k < d; ++k) {
            const Eigen::Index s = g.stride(k);
            if (idx[static_cast<std::size_t>(k)] > 0) visit(flat - s);
            if (idx[static_cast<std::size_t>(k)] + 1 < g.shape[static_cast<std::size_t>(k)]) visit(flat + s);
        }
    };
    auto update = [&](Eigen::Index flat) {
        const auto idx = g.unflatten(flat);
        std::array<double, 3> a{inf, inf, inf};
        for (int k = 0; k < d; ++k) {
            const Eigen::Index s = g.stride(k);
            double best = inf;
            if (idx[static_cast<std::size_t>(k)] > 0 && state[static_cast<std::size_t>(flat - s)] == known)
                best = std::min(best, u.values[static_cast<std::size_t>(flat - s)]);
            if (idx[static_cast<std::size_t>(k)] + 1 < g.shape[static_cast<std::size_t>(k)] &&
                state[static_cast<std::size_t>(flat + s)] == known)
                best = std::min(best, u.values[static_cast<std::size_t>(flat + s)]);
            a[static_cast<std::size_t>(k)] = best;
        }
        return detail::godunov_update(a, d, g.values[static_cast<std::size_t>(flat)] * g.h);
    };

    for (Eigen::Index i = 0; i < n; ++i)
        if (prob.boundary[static_cast<std::size_t>(i)]) {
            state[static_cast<std::size_t>(i)] = known;
            u.values[static_cast<std::size_t>(i)] = prob.boundary_values[static_cast<std::size_t>(i)];
        }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (state[static_cast<std::size_t>(i)] != known) continue;
        neighbors(i, [&](Eigen::Index j) {
            if (state[static_cast<std::size_t>(j)] == known) return;
            const double v = update(j);
            if (v < u.values[static_cast<std::size_t>(j)]) {
                u.values[static_cast<std::size_t>(j)] = v;
                state[static_cast<std::size_t>(j)] = trial;
                heap.push({v, j});
            }
        });
    }
    while (!heap.empty()) {
        const auto [v, i] = heap.top();
        heap.pop();
        if (state[static_cast<std::size_t>(i)] == known || v != u.values[static_cast<std::size_t>(i)]) continue;
        state[static_cast<std::size_t>(i)] = known;
        if (order) order->push_back(i);
        neighbors(i, [&](Eigen::Index j) {
            if (state[static_cast<std::size_t>(j)] == known) return;
            const double w = update(j);
            if (w < u.values[static_cast<std::size_t>(j)]) {
                u.values[static_cast<std::size_t>(j)] = w;
                state[static_cast<std::size_t>(j)] = trial;
                heap.push({w, j});
            }
        });
    }
    return u;
}

// ---------------------------------------------------------------------------
// Fixtures

/// Zero-valued single source at the grid node nearest to `source`.
inline EikonalProblem point_source_problem(const GridField& geometry, const Vec& source, double f = 1.0) {
    EikonalProblem p = EikonalProblem::uniform(geometry, f);
    std::array<Eigen::Index, 3> idx{0, 0, 0};
    for (int k = 0; k < geometry.dim; ++k)
        idx[static_cast<std::size_t>(k)] = std::clamp<Eigen::Index>(
            static_cast<Eigen::Index>(std::llround((source(k) - geometry.origin(k)) / geometry.h)), 0,
            geometry.shape[static_cast<std::size_t>(k)] - 1);
    p.boundary[static_cast<std::size_t>(geometry.flatten(idx))] = 1;
    return p;
}

/// Square grid on [-half, half]^d with spacing h.
inline GridField centered_grid(int dim, double half, double h) {
    const auto n = static_cast<Eigen::Index>(std::llround(2.0 * half / h)) + 1;
    return GridField::zeros(Vec::Constant(dim, -half), h, std::vector<Eigen::Index>(static_cast<std::size_t>(dim), n));
}

/// Every node with ||x - center|| >= radius is boundary with g = 0; the solve
/// fills the disk interior with the distance to the circle.
inline EikonalProblem circle_problem(const GridField& geometry, double radius, const Vec& center) {
    EikonalProblem p = EikonalProblem::uniform(geometry);
    for (Eigen::Index i = 0; i < geometry.count(); ++i)
        p.boundary[static_cast<std::size_t>(i)] = (geometry.point(i) - center).norm() >= radius;
    return p;
}

// ---------------------------------------------------------------------------
// Signed distance oracle

/// Even-odd ray parity test against a closed polygon given by ordered vertices.
inline bool polygon_inside(const Points& poly, const Eigen::Ref<const Vec>& x) {
    bool in = false;
    const Eigen::Index n = poly.cols();
    for (Eigen::Index i = 0, j = n - 1; i < n; j = i++) {
        const double yi = poly(1, i), yj = poly(1, j);
        if ((yi > x(1)) != (yj > x(1))) {
            const double xc = poly(0, j) + (x(1) - yj) * (poly(0, i) - poly(0, j)) / (yi - yj);
            if (x(0) < xc) in = !in;
        }
    }
    return in;
}

inline double polygon_distance(const Points& poly, const Eigen::Ref<const Vec>& x) {
    double best = std::numeric_limits<double>::infinity();
    const Eigen::Index n = poly.cols();
    for (Eigen::Index i = 0, j = n - 1; i < n; j = i++) {
        const Eigen::Vector2d a = poly.col(j), b = poly.col(i), p = x.head<2>();
        const Eigen::Vector2d ab = b - a;
        const double len2 = ab.squaredNorm();
        const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (a + t * ab - p).norm());
    }
    return best;
}

/// Boundary polygon of the ray-star Mandelbrot fixture in working coordinates.
inline Points mandelbrot_polygon(const SyntheticShape& shape, Eigen::Index rays = 1024) {
    Points poly(2, rays);
    for (Eigen::Index i = 0; i < rays; ++i) {
        const double angle = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(rays);
        poly.col(i) = shape.transform.apply(mandelbrot_ray_crossing(shape.spec, angle).point);
    }
    return poly;
}

/// Signed distance from labels plus exact distances near the interface: nodes
/// with a differently labeled neighbor seed an unsigned FMM solve, and the
/// labels supply the sign.
template <class DistFn>
GridField fmm_signed_distance(const GridField& geometry, const std::vector<char>& inside, DistFn&& interface_distance) {
    EikonalProblem p = EikonalProblem::uniform(geometry);
    const int d = geometry.dim;
    for (Eigen::Index i = 0; i < geometry.count(); ++i) {
        const auto idx = geometry.unflatten(i);
        bool seam = false;
        for (int k = 0; k < d && !seam; ++k) {
            const Eigen::Index s = geometry.stride(k);
            if (idx[static_cast<std::size_t>(k)] > 0 && inside[static_cast<std::size_t>(i - s)] != inside[static_cast<std::size_t>(i)])
                seam = true;
            if (idx[static_cast<std::size_t>(k)] + 1 < geometry.shape[static_cast<std::size_t>(k)] &&
                inside[static_cast<std::size_t>(i + s)] != inside[static_cast<std::size_t>(i)])
                seam = true;
        }
        if (seam) {
            p.boundary[static_cast<std::size_t>(i)] = 1;
            p.boundary_values[static_cast<std::size_t>(i)] = interface_distance(geometry.point(i));
        }
    }
    require(p.boundary_count() > 0, "signed distance: the interface does not cross the grid");
    GridField u = fmm_solve(p);
    for (std::size_t i = 0; i < u.values.size(); ++i)
        if (inside[i]) u.values[i] = -u.values[i];
    return u;
}

/// Signed distance of a synthetic shape on the nodes of geometry: exact where
/// a closed form exists, otherwise labels by ray parity against the boundary
/// polygon and distances by fast marching.
inline GridField signed_distance_oracle(const SyntheticShape& shape, const GridField& geometry, Eigen::Index rays = 1024) {
    require(geometry.dim == shape.dim(), "oracle grid dimension does not match the shape");
    if (shape.has_analytic_sdf()) {
        GridField u = geometry;
        fill_grid(u, [&](const Vec& x) { return shape.sdf(x); });
        return u;
    }
    const Points poly = mandelbrot_polygon(shape, rays);
    std::vector<char> inside(static_cast<std::size_t>(geometry.count()));
    for (Eigen::Index i = 0; i < geometry.count(); ++i)
        inside[static_cast<std::size_t>(i)] = polygon_inside(poly, geometry.point(i));
    return fmm_signed_distance(geometry, inside, [&](const Vec& x) { return polygon_distance(poly, x); });
}

// ---------------------------------------------------------------------------
// Stability estimates

struct LemmaReport {
    double lhs = 0.0;    // max |u1 - u2|
    double data = 0.0;   // max |g1 - g2| or max |f1 - f2|
    double bound = 0.0;  // right-hand side before slack
    double slack = 0.0;
    bool pass = false;

    static constexpr const char* kCsvHeader = "lhs,data,bound,slack,pass";

    void write_csv_row(std::ostream& os) const {
        os << std::setprecision(17) << lhs << ',' << data << ',' << bound << ',' << slack << ',' << (pass ? 1 : 0) << '\n';
    }
};

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Boundary data stability: ||u1 - u2|| <= ||g1 - g2|| with 6h slack.
/// g1, g2 are full-length vectors read on the base mask.
inline LemmaReport verify_lemma1(const EikonalProblem& base, const std::vector<double>& g1, const std::vector<double>& g2) {
    require(g1.size() == base.boundary.size() && g2.size() == base.boundary.size(), "lemma1: boundary data size mismatch");
    for (double f : base.slowness.values) require(f == 1.0, "lemma1 requires f = 1");
    EikonalProblem p1 = base, p2 = base;
    p1.boundary_values = g1;
    p2.boundary_values = g2;
    const GridField u1 = fmm_solve(p1), u2 = fmm_solve(p2);
    LemmaReport r;
    r.lhs = max_abs_diff(u1.values, u2.values);
    for (std::size_t i = 0; i < g1.size(); ++i)
        if (base.boundary[i]) r.data = std::max(r.data, std::abs(g1[i] - g2[i]));
    r.bound = r.data;
    r.slack = 6.0 * base.slowness.h;
    r.pass = r.lhs <= r.bound + r.slack;
    return r;
}

/// Slowness stability with g = 0: ||u1 - u2|| <= C_Omega C_f^-2 ||f1 - f2|| with
/// 6h slack, C_Omega the domain diameter and C_f the tightest constant valid
/// for both slownesses.
inline LemmaReport verify_lemma2(const EikonalProblem& base, const std::vector<double>& f1, const std::vector<double>& f2,
                                 double c_omega) {
    require(f1.size() == base.slowness.values.size() && f2.size() == f1.size(), "lemma2: slowness size mismatch");
    EikonalProblem p1 = base, p2 = base;
    std::fill(p1.boundary_values.begin(), p1.boundary_values.end(), 0.0);
    std::fill(p2.boundary_values.begin(), p2.boundary_values.end(), 0.0);
    p1.slowness.values = f1;
    p2.slowness.values = f2;
    const double cf = std::max(p1.tight_c_f(), p2.tight_c_f());
    p1.c_f = p2.c_f = cf;
    const GridField u1 = fmm_solve(p1), u2 = fmm_solve(p2);
    LemmaReport r;
    r.lhs = max_abs_diff(u1.values, u2.values);
    r.data = max_abs_diff(f1, f2);
    r.bound = c_omega * r.data / (cf * cf);
    r.slack = 6.0 * base.slowness.h;
    r.pass = r.lhs <= r.bound + r.slack;
    return r;
}

// ---------------------------------------------------------------------------
// Bound diagnostics

struct BoundDiagnostics {
    long long iteration = 0;
    double linf_error = 0.0;
    double sqrt_lm = 0.0;
    double sqrt_leik = 0.0;
    Eigen::Index n_surface = 0;
    Eigen::Index n_domain = 0;
    double beta_hat = 0.0;

    double bound_proxy() const { return sqrt_lm + sqrt_leik; }

    static constexpr const char* kCsvHeader =
        "iteration,linf_error,sqrt_Lm,sqrt_Leik,bound_proxy,N,M,beta_hat,M_theta,C_theta,C_Omega,C_Omega_prime";

    void write_csv_row(std::ostream& os) const {
        os << std::setprecision(17) << iteration << ',' << linf_error << ',' << sqrt_lm << ',' << sqrt_leik << ','
           << bound_proxy() << ',' << n_surface << ',' << n_domain << ',' << beta_hat
           << ",not_estimated,not_estimated,not_estimated,not_estimated\n";
    }
};

struct BoundDiagnosticsOptions {
    Eigen::Index grid_resolution = 129;
    Eigen::Index n_domain = 4000;
    int p = 1;
    /// Quadrature exponent of the sampler that produced the training batches.
    double beta_hat = 0.5;
    std::uint64_t seed = 12345;
    int workers = 1;
};

struct BoundStudy {
    std::vector<BoundDiagnostics> rows;
    /// Spearman correlation of bound_proxy against linf_error; NaN when undefined.
    double spearman_rho = std::numeric_limits<double>::quiet_NaN();
    bool correlation_defined = false;
    std::string note;

    void write_csv(std::ostream& os) const {
        os << BoundDiagnostics::kCsvHeader << '\n';
        for (const auto& r : rows) r.write_csv_row(os);
    }
};

/// One diagnostic row for a single network: grid L-infinity error against the
/// oracle SDF and the square roots of the manifold and Eikonal losses on
/// fresh samples (the given surface points and uniform box samples).
inline BoundDiagnostics diagnose(const SineMlpParams& params, const GridField& oracle, const Points& surface_points,
                                 const Box& box, const BoundDiagnosticsOptions& opt, long long iteration = 0) {
    BoundDiagnostics r;
    r.iteration = iteration;
    Points nodes(oracle.dim, oracle.count());
    for (Eigen::Index i = 0; i < oracle.count(); ++i) nodes.col(i) = oracle.point(i);
    const RowVec u = forward_values(params, nodes, opt.workers);
    for (Eigen::Index i = 0; i < oracle.count(); ++i)
        r.linf_error = std::max(r.linf_error, std::abs(u(i) - oracle.values[static_cast<std::size_t>(i)]));
    const RowVec us = forward_values(params, surface_points, opt.workers);
    r.sqrt_lm = std::sqrt(us.cwiseAbs().mean());
    Rng rng(opt.seed);
    Points all(box.dim(), surface_points.cols() + opt.n_domain);
    all.leftCols(surface_points.cols()) = surface_points;
    all.rightCols(opt.n_domain) = sample_box(box, rng, opt.n_domain);
    const JetBatch jets = forward_jets(params, all, opt.workers);
    double leik = 0.0;
    for (Eigen::Index i = 0; i < jets.size(); ++i)
        leik += pointwise::power_abs(jets.grad.col(i).norm() - 1.0, opt.p);
    r.sqrt_leik = std::sqrt(leik / static_cast<double>(jets.size()));
    r.n_surface = surface_points.cols();
    r.n_domain = opt.n_domain;
    r.beta_hat = opt.beta_hat;
    return r;
}

inline BoundStudy bound_diagnostics(const std::vector<std::pair<long long, SineMlpParams>>& checkpoints,
                                    const SyntheticShape& shape, const Points& surface_points, const Box& box,
                                    const BoundDiagnosticsOptions& opt = {}) {
    const GridField oracle = signed_distance_oracle(shape, GridField::covering(box, opt.grid_resolution));
    BoundStudy study;
    for (const auto& [iter, params] : checkpoints)
        study.rows.push_back(diagnose(params, oracle, surface_points, box, opt, iter));
    if (study.rows.size() < 4) {
        study.note = "fewer than 4 checkpoints: correlation undefined";
        return study;
    }
    std::vector<double> proxy, err;
    for (const auto& r : study.rows) {
        proxy.push_back(r.bound_proxy());
        err.push_back(r.linf_error);
    }
    study.spearman_rho = spearman(proxy, err);
    study.correlation_defined = std::isfinite(study.spearman_rho);
    if (!study.correlation_defined) study.note = "constant series: correlation undefined";
    return study;
}

}  // namespace viscoreg
