#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "viscoreg/extract.hpp"

namespace viscoreg {

/// Static kd-tree over the columns of a point matrix. Queries return the
/// same squared distance a brute-force scan computes.
class KdTree {
public:
    explicit KdTree(const Points& pts) : pts_(pts), order_(static_cast<std::size_t>(pts.cols())) {
        require(pts.cols() > 0, "kd-tree needs at least one point");
        std::iota(order_.begin(), order_.end(), Eigen::Index{0});
        nodes_.reserve(order_.size() / kLeaf * 2 + 2);
        build(0, order_.size());
    }

    struct Hit {
        Eigen::Index index = -1;
        double dist2 = std::numeric_limits<double>::infinity();
    };

    Hit nearest(const Eigen::Ref<const Vec>& q) const {
        require(q.size() == pts_.rows(), "kd-tree query dimension mismatch");
        Hit best;
        search(0, q, best);
        return best;
    }

    const Points& points() const { return pts_; }

private:
    static constexpr std::size_t kLeaf = 8;

    struct Node {
        std::size_t begin = 0, end = 0;
        int axis = -1;  // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back({begin, end, -1, 0.0, -1, -1});
        if (end - begin <= kLeaf) return id;
        // Split on the axis of largest spread at the median.
        int axis = 0;
        double spread = -1.0;
        for (Eigen::Index k = 0; k < pts_.rows(); ++k) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t i = begin; i < end; ++i) {
                lo = std::min(lo, pts_(k, order_[i]));
                hi = std::max(hi, pts_(k, order_[i]));
            }
            if (hi - lo > spread) {
                spread = hi - lo;
                axis = static_cast<int>(k);
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<long>(begin), order_.begin() + static_cast<long>(mid),
                         order_.begin() + static_cast<long>(end), [&](Eigen::Index a, Eigen::Index b) {
                             return pts_(axis, a) < pts_(axis, b) || (pts_(axis, a) == pts_(axis, b) && a < b);
                         });
        const double split = pts_(axis, order_[mid]);
        const int left = build(begin, mid);
        const int right = build(mid, end);
        auto& n = nodes_[static_cast<std::size_t>(id)];
        n.axis = axis;
        n.split = split;
        n.left = left;
        n.right = right;
        return id;
    }

    void search(int id, const Eigen::Ref<const Vec>& q, Hit& best) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const Eigen::Index j = order_[i];
                const double d2 = (pts_.col(j) - q).squaredNorm();
                if (d2 < best.dist2 || (d2 == best.dist2 && j < best.index)) best = {j, d2};
            }
            return;
        }
        const double diff = q(n.axis) - n.split;
        const int first = diff < 0.0 ? n.left : n.right;
        const int second = diff < 0.0 ? n.right : n.left;
        search(first, q, best);
        if (diff * diff <= best.dist2) search(second, q, best);
    }

    const Points& pts_;
    std::vector<Eigen::Index> order_;
    std::vector<Node> nodes_;
};

/// Distance from every column of queries to its nearest column of targets.
inline std::vector<double> nearest_distances(const Points& queries, const Points& targets, int workers = 1) {
    require(queries.cols() > 0 && targets.cols() > 0, "distance metrics need nonempty point sets");
    require(queries.rows() == targets.rows(), "point sets have different dimensions");
    const KdTree tree(targets);
    std::vector<double> out(static_cast<std::size_t>(queries.cols()));
    auto run = [&](Eigen::Index wid, Eigen::Index stride) {
        for (Eigen::Index i = wid; i < queries.cols(); i += stride)
            out[static_cast<std::size_t>(i)] = std::sqrt(tree.nearest(queries.col(i)).dist2);
    };
    if (workers <= 1) {
        run(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(run, t, workers);
    }
    return out;
}

namespace detail {
inline double mean_of(const std::vector<double>& v, bool squared) {
    double s = 0.0;
    for (double x : v) s += squared ? x * x : x;
    return s / static_cast<double>(v.size());
}
inline double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
}  // namespace detail

/// Symmetric mean nearest-neighbor distance with a factor one half.
inline double chamfer(const Points& A, const Points& B, int workers = 1) {
    return 0.5 * (detail::mean_of(nearest_distances(A, B, workers), false) +
                  detail::mean_of(nearest_distances(B, A, workers), false));
}

inline double squared_chamfer(const Points& A, const Points& B, int workers = 1) {
    return 0.5 * (detail::mean_of(nearest_distances(A, B, workers), true) +
                  detail::mean_of(nearest_distances(B, A, workers), true));
}

inline double hausdorff(const Points& A, const Points& B, int workers = 1) {
    return std::max(detail::max_of(nearest_distances(A, B, workers)), detail::max_of(nearest_distances(B, A, workers)));
}

/// |both inside| / |either inside|; 1 when nothing is inside in either labeling.
inline double iou(const std::vector<bool>& pred_inside, const std::vector<bool>& true_inside) {
    require(pred_inside.size() == true_inside.size(), "iou: label lists differ in length");
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < pred_inside.size(); ++i) {
        both += pred_inside[i] && true_inside[i];
        either += pred_inside[i] || true_inside[i];
    }
    return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

/// Inside labels (value < 0) of a field at the given points.
template <class Fn>
std::vector<bool> occupancy(Fn&& field, const Points& pts) {
    std::vector<bool> out(static_cast<std::size_t>(pts.cols()));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) out[static_cast<std::size_t>(i)] = field(Vec(pts.col(i))) < 0.0;
    return out;
}

inline std::vector<bool> occupancy(const SineMlpParams& p, const Points& pts, int workers = 1) {
    const RowVec v = forward_values(p, pts, workers);
    std::vector<bool> out(static_cast<std::size_t>(pts.cols()));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) out[static_cast<std::size_t>(i)] = v(i) < 0.0;
    return out;
}

/// Points distributed uniformly by area over the triangles (3D) or by length
/// over the segments (2D).
inline Points sample_mesh_surface(const SurfaceMesh& m, Eigen::Index n, std::uint64_t seed) {
    require(!m.empty(), "cannot sample an empty mesh");
    require(n > 0, "sample count must be positive");
    const std::size_t ne = m.element_count();
    std::vector<double> cum(ne);
    double total = 0.0;
    for (std::size_t e = 0; e < ne; ++e) {
        double w = 0.0;
        if (m.dim == 3) {
            const auto& t = m.triangles[e];
            const Eigen::Vector3d a = m.vertices.col(t[0]), b = m.vertices.col(t[1]), c = m.vertices.col(t[2]);
            w = 0.5 * (b - a).cross(c - a).norm();
        } else {
            w = (m.vertices.col(m.segments[e][1]) - m.vertices.col(m.segments[e][0])).norm();
        }
        total += w;
        cum[e] = total;
    }
    require(total > 0.0, "mesh has zero measure");
    Rng rng(seed);
    Points out(m.dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = uniform(rng, 0.0, total);
        const std::size_t e = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), r) - cum.begin()), ne - 1);
        if (m.dim == 3) {
            const auto& t = m.triangles[e];
            double s = uniform(rng, 0.0, 1.0), u = uniform(rng, 0.0, 1.0);
            if (s + u > 1.0) {
                s = 1.0 - s;
                u = 1.0 - u;
            }
            out.col(i) = m.vertices.col(t[0]) + s * (m.vertices.col(t[1]) - m.vertices.col(t[0])) +
                         u * (m.vertices.col(t[2]) - m.vertices.col(t[0]));
        } else {
            const double s = uniform(rng, 0.0, 1.0);
            out.col(i) = m.vertices.col(m.segments[e][0]) +
                         s * (m.vertices.col(m.segments[e][1]) - m.vertices.col(m.segments[e][0]));
        }
    }
    return out;
}

struct MetricsReport {
    double chamfer = 0.0;
    double hausdorff = 0.0;
    double squared_chamfer = 0.0;
    /// NaN when no occupancy samples were supplied.
    double iou = std::numeric_limits<double>::quiet_NaN();

    static constexpr const char* kCsvHeader = "label,chamfer,hausdorff,squared_chamfer,iou";

    void write_csv_row(std::ostream& os, const std::string& label) const {
        os << std::setprecision(17) << label << ',' << chamfer << ',' << hausdorff << ',' << squared_chamfer << ',';
        if (std::isnan(iou))
            os << "nan";
        else
            os << iou;
        os << '\n';
    }
};

inline MetricsReport distance_metrics(const Points& pred, const Points& truth, int workers = 1) {
    const auto ab = nearest_distances(pred, truth, workers);
    const auto ba = nearest_distances(truth, pred, workers);
    MetricsReport r;
    r.chamfer = 0.5 * (detail::mean_of(ab, false) + detail::mean_of(ba, false));
    r.squared_chamfer = 0.5 * (detail::mean_of(ab, true) + detail::mean_of(ba, true));
    r.hausdorff = std::max(detail::max_of(ab), detail::max_of(ba));
    return r;
}

/// Human-readable table with the usual column names.
inline void write_metrics_table(std::ostream& os, const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::size_t w = 5;
    for (const auto& [label, r] : rows) w = std::max(w, label.size());
    os << std::left << std::setw(static_cast<int>(w)) << "run" << std::right << std::setw(14) << "d_C" << std::setw(14)
       << "d_H" << std::setw(16) << "Squared Chamfer" << std::setw(10) << "IoU" << '\n';
    for (const auto& [label, r] : rows) {
        os << std::left << std::setw(static_cast<int>(w)) << label << std::right << std::scientific << std::setprecision(4)
           << std::setw(14) << r.chamfer << std::setw(14) << r.hausdorff << std::setw(16) << r.squared_chamfer
           << std::fixed << std::setprecision(4) << std::setw(10);
        if (std::isnan(r.iou))
            os << "-";
        else
            os << r.iou;
        os << std::defaultfloat << '\n';
    }
}

// ---------------------------------------------------------------------------
// Quadrature rates

struct QuadratureFit {
    double beta_hat = 0.0;
    double c_hat = 0.0;
    /// Set when all errors are at rounding level and no slope is meaningful.
    bool degenerate = false;
    std::vector<Eigen::Index> n_list;
    std::vector<double> errors;
};

/// Returns N points at which the integrand is averaged with equal weights.
using QuadratureSampler = std::function<Points(Eigen::Index n, Rng& rng)>;

/// Node lattice with ~N^(1/d) points per axis, endpoints included. Equal
/// weights make this a first-order rule.
inline QuadratureSampler grid_sampler(const Box& box) {
    return [box](Eigen::Index n, Rng&) {
        const int d = static_cast<int>(box.dim());
        const auto m = std::max<Eigen::Index>(
            2, static_cast<Eigen::Index>(std::llround(std::pow(static_cast<double>(n), 1.0 / d))));
        Eigen::Index total = 1;
        for (int k = 0; k < d; ++k) total *= m;
        Points p(d, total);
        for (Eigen::Index i = 0; i < total; ++i) {
            Eigen::Index r = i;
            for (int k = d - 1; k >= 0; --k) {
                p(k, i) = box.lo(k) + (box.hi(k) - box.lo(k)) * static_cast<double>(r % m) / static_cast<double>(m - 1);
                r /= m;
            }
        }
        return p;
    };
}

inline QuadratureSampler monte_carlo_sampler(const Box& box) {
    return [box](Eigen::Index n, Rng& rng) { return sample_box(box, rng, n); };
}

/// Tensor Simpson rule with n (odd) nodes per axis.
inline double fine_grid_integral(const std::function<double(const Vec&)>& g, const Box& box, Eigen::Index n = 101) {
    require(n >= 3, "fine grid needs >= 3 nodes per axis");
    if (n % 2 == 0) ++n;
    const int d = static_cast<int>(box.dim());
    Eigen::Index total = 1;
    for (int k = 0; k < d; ++k) total *= n;
    auto weight = [n](Eigen::Index i) { return (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
    double acc = 0.0;
    Vec x(d);
    for (Eigen::Index i = 0; i < total; ++i) {
        Eigen::Index r = i;
        double w = 1.0;
        for (int k = d - 1; k >= 0; --k) {
            const Eigen::Index j = r % n;
            r /= n;
            x(k) = box.lo(k) + (box.hi(k) - box.lo(k)) * static_cast<double>(j) / static_cast<double>(n - 1);
            w *= weight(j) * (box.hi(k) - box.lo(k)) / (3.0 * static_cast<double>(n - 1));
        }
        acc += w * g(x);
    }
    return acc;
}

inline std::pair<double, double> least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "line fit needs >= 2 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    require(sxx > 0.0, "line fit needs distinct abscissae");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

/// Fits |mean_N g - reference| ~ C N^-beta by least squares in log-log
/// coordinates. The error is measured against the box-normalized reference
/// (reference integral / box volume).
inline QuadratureFit quadrature_rate(const QuadratureSampler& sampler, const std::function<double(const Vec&)>& g,
                                     double reference_mean, const std::vector<Eigen::Index>& n_list, std::uint64_t seed) {
    require(n_list.size() >= 3, "quadrature_rate needs at least 3 sample sizes");
    QuadratureFit fit;
    fit.n_list = n_list;
    Rng rng(seed);
    std::vector<double> lx, ly;
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(reference_mean));
    for (auto n : n_list) {
        require(n > 0, "sample sizes must be positive");
        const Points p = sampler(n, rng);
        double s = 0.0;
        for (Eigen::Index i = 0; i < p.cols(); ++i) s += g(p.col(i));
        const double err = std::abs(s / static_cast<double>(p.cols()) - reference_mean);
        fit.errors.push_back(err);
        if (err > floor) {
            lx.push_back(std::log(static_cast<double>(p.cols())));
            ly.push_back(std::log(err));
        }
    }
    if (lx.size() < 3) {
        fit.degenerate = true;
        return fit;
    }
    const auto [slope, icpt] = least_squares_line(lx, ly);
    fit.beta_hat = -slope;
    fit.c_hat = std::exp(icpt);
    return fit;
}

// ---------------------------------------------------------------------------
// Rank correlation

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size() && a.size() >= 2, "correlation needs paired samples");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation with average ranks for ties; NaN if either side is constant.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(average_ranks(a), average_ranks(b));
}

}  // namespace viscoreg
