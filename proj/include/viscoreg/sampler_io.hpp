#pragma once

#include <algorithm>
#include <complex>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "viscoreg/batch.hpp"

namespace viscoreg {

/// Axis-aligned box.
struct Box {
    Vec lo;
    Vec hi;

    Eigen::Index dim() const { return lo.size(); }
    Vec extent() const { return hi - lo; }
    Vec center() const { return 0.5 * (lo + hi); }
    bool contains(const Eigen::Ref<const Vec>& p, double tol = 0.0) const {
        return ((p - lo).array() >= -tol).all() && ((hi - p).array() >= -tol).all();
    }

    static Box centered_cube(int dim, double side) {
        return Box{Vec::Constant(dim, -0.5 * side), Vec::Constant(dim, 0.5 * side)};
    }
};

/// Maps raw coordinates to normalized ones: y = scale * x + translation.
struct AffineTransform {
    double scale = 1.0;
    Vec translation;

    Points apply(const Points& x) const { return (scale * x).colwise() + translation; }
    Points invert(const Points& y) const { return (y.colwise() - translation) / scale; }
};

struct PointCloud {
    int dim = 3;
    Points points;
    Box bbox;
    AffineTransform source_transform;

    Eigen::Index size() const { return points.cols(); }

    /// Cloud with a tight bounding box and identity transform.
    static PointCloud from_points(Points pts) {
        require(pts.rows() == 2 || pts.rows() == 3, "point cloud dimension must be 2 or 3");
        require(pts.cols() > 0, "point cloud is empty");
        if (!pts.allFinite()) throw InvalidArgument("point cloud contains non-finite coordinates");
        PointCloud pc;
        pc.dim = static_cast<int>(pts.rows());
        pc.bbox = Box{pts.rowwise().minCoeff(), pts.rowwise().maxCoeff()};
        pc.source_transform = AffineTransform{1.0, Vec::Zero(pts.rows())};
        pc.points = std::move(pts);
        return pc;
    }
};

// ---------------------------------------------------------------------------
// File formats

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& tok, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::logic_error&) {
        throw ParseError("non-numeric token '" + tok + "'", line);
    }
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
}

}  // namespace detail

/// Whitespace-separated "x y z" (or "x y") per line; blank and '#' lines are skipped.
inline PointCloud read_xyz(std::istream& is) {
    std::vector<double> vals;
    std::size_t cols = 0;
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto toks = detail::split_ws(t);
        if (cols == 0) {
            if (toks.size() != 2 && toks.size() != 3) throw ParseError("expected 2 or 3 coordinates", lineno);
            cols = toks.size();
        } else if (toks.size() != cols) {
            throw ParseError("expected " + std::to_string(cols) + " coordinates", lineno);
        }
        for (const auto& tok : toks) vals.push_back(detail::parse_real(tok, lineno));
    }
    if (vals.empty()) throw ParseError("no points", 0);
    const auto n = static_cast<Eigen::Index>(vals.size() / cols);
    Points pts = Eigen::Map<Points>(vals.data(), static_cast<Eigen::Index>(cols), n);
    return PointCloud::from_points(std::move(pts));
}

/// ASCII PLY 1.0. Only the vertex element's x, y, z are read; other
/// properties (normals included) and elements are ignored.
inline PointCloud read_ply(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        if (!std::getline(is, line)) return false;
        ++lineno;
        line = detail::trim(line);
        return true;
    };
    if (!next() || line != "ply") throw ParseError("missing 'ply' magic", lineno);
    bool ascii = false;
    long vertex_count = -1;
    bool in_vertex = false;
    int prop_count = 0;
    int ix = -1, iy = -1, iz = -1;
    std::vector<long> elements_before;  // element sizes preceding the vertex element
    bool vertex_seen = false;
    while (true) {
        if (!next()) throw ParseError("unterminated PLY header", lineno);
        if (line == "end_header") break;
        const auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0] == "comment" || toks[0] == "obj_info") continue;
        if (toks[0] == "format") {
            if (toks.size() < 3) throw ParseError("malformed format line", lineno);
            if (toks[1] != "ascii") throw ParseError("binary PLY is not supported (format " + toks[1] + ")", lineno);
            if (toks[2] != "1.0") throw ParseError("unsupported PLY version " + toks[2], lineno);
            ascii = true;
        } else if (toks[0] == "element") {
            if (toks.size() != 3) throw ParseError("malformed element line", lineno);
            long count = 0;
            try {
                count = std::stol(toks[2]);
            } catch (const std::logic_error&) {
                throw ParseError("element count is not an integer", lineno);
            }
            in_vertex = toks[1] == "vertex";
            if (in_vertex) {
                vertex_count = count;
                vertex_seen = true;
            } else if (!vertex_seen) {
                elements_before.push_back(count);
            }
        } else if (toks[0] == "property") {
            if (in_vertex) {
                if (toks.size() != 3) throw ParseError("vertex list properties are not supported", lineno);
                if (toks[2] == "x") ix = prop_count;
                if (toks[2] == "y") iy = prop_count;
                if (toks[2] == "z") iz = prop_count;
                ++prop_count;
            }
        } else {
            throw ParseError("unknown PLY header keyword '" + toks[0] + "'", lineno);
        }
    }
    if (!ascii) throw ParseError("PLY format line missing", lineno);
    if (vertex_count < 0) throw ParseError("PLY has no vertex element", lineno);
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY vertex element lacks x/y/z properties", lineno);
    for (long skip : elements_before)
        for (long i = 0; i < skip; ++i)
            if (!next()) throw ParseError("PLY body truncated", lineno);
    Points pts(3, vertex_count);
    for (long i = 0; i < vertex_count; ++i) {
        if (!next()) throw ParseError("PLY body truncated", lineno);
        const auto toks = detail::split_ws(line);
        if (static_cast<int>(toks.size()) < prop_count) throw ParseError("too few vertex properties", lineno);
        pts(0, i) = detail::parse_real(toks[static_cast<std::size_t>(ix)], lineno);
        pts(1, i) = detail::parse_real(toks[static_cast<std::size_t>(iy)], lineno);
        pts(2, i) = detail::parse_real(toks[static_cast<std::size_t>(iz)], lineno);
    }
    return PointCloud::from_points(std::move(pts));
}

enum class CloudFormat { xyz, ply };

inline CloudFormat cloud_format_from_path(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "ply") return CloudFormat::ply;
    if (ext == "xyz" || ext == "txt" || ext == "pts") return CloudFormat::xyz;
    throw InvalidArgument("cannot infer point cloud format from '" + path + "'");
}

inline PointCloud load_point_cloud(const std::string& path, CloudFormat format) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open point cloud " + path);
    return format == CloudFormat::ply ? read_ply(is) : read_xyz(is);
}

inline PointCloud load_point_cloud(const std::string& path) { return load_point_cloud(path, cloud_format_from_path(path)); }

inline void write_xyz(std::ostream& os, const Points& pts) {
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        for (Eigen::Index k = 0; k < pts.rows(); ++k) os << (k ? " " : "") << pts(k, i);
        os << '\n';
    }
}

/// 2D points are written with z = 0.
inline void write_ply(std::ostream& os, const Points& pts) {
    os << "ply\nformat ascii 1.0\nelement vertex " << pts.cols()
       << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        os << pts(0, i) << ' ' << pts(1, i) << ' ' << (pts.rows() > 2 ? pts(2, i) : 0.0) << '\n';
    }
}

inline void save_point_cloud(const std::string& path, const Points& pts, CloudFormat format) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write point cloud " + path);
    if (format == CloudFormat::ply)
        write_ply(os, pts);
    else
        write_xyz(os, pts);
    if (!os) throw IoError("failed writing point cloud " + path);
}

// ---------------------------------------------------------------------------
// Normalization and sampling

/// Centers the cloud at the origin and scales its longest side to 1. The
/// sampling box becomes the cube of side box_scale around the origin.
inline PointCloud normalize(const PointCloud& pc, double box_scale = 1.1) {
    require(pc.size() > 0, "cannot normalize an empty cloud");
    require(box_scale >= 1.0, "box_scale must be >= 1");
    const Vec lo = pc.points.rowwise().minCoeff();
    const Vec hi = pc.points.rowwise().maxCoeff();
    const double longest = (hi - lo).maxCoeff();
    if (!(longest > 0.0)) throw InvalidArgument("cannot normalize a zero-extent cloud");
    const Vec center = 0.5 * (lo + hi);
    const double s = 1.0 / longest;
    PointCloud out;
    out.dim = pc.dim;
    out.points = (s * (pc.points.colwise() - center));
    // Compose with the transform the input already carries.
    out.source_transform.scale = s * pc.source_transform.scale;
    out.source_transform.translation = s * (pc.source_transform.translation - center);
    out.bbox = Box::centered_cube(pc.dim, box_scale);
    return out;
}

inline TrainBatch sample_batch(const PointCloud& pc, Rng& rng, Eigen::Index n_surface, Eigen::Index n_domain) {
    require(n_surface > 0 && n_domain > 0, "batch sizes must be positive");
    require(pc.size() > 0, "cannot sample from an empty cloud");
    TrainBatch b;
    const Eigen::Index n = pc.size();
    b.surface_points.resize(pc.dim, n_surface);
    if (n_surface <= n) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        for (Eigen::Index i = 0; i < n_surface; ++i) {
            const auto j = i + static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            b.surface_points.col(i) = pc.points.col(idx[static_cast<std::size_t>(i)]);
        }
    } else {
        for (Eigen::Index i = 0; i < n_surface; ++i)
            b.surface_points.col(i) = pc.points.col(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    }
    b.domain_points.resize(pc.dim, n_domain);
    for (Eigen::Index i = 0; i < n_domain; ++i)
        for (int k = 0; k < pc.dim; ++k) b.domain_points(k, i) = uniform(rng, pc.bbox.lo(k), pc.bbox.hi(k));
    return b;
}

/// Uniform samples in a box.
inline Points sample_box(const Box& box, Rng& rng, Eigen::Index n) {
    Points p(box.dim(), n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < box.dim(); ++k) p(k, i) = uniform(rng, box.lo(k), box.hi(k));
    return p;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeKind { circle, sphere, torus, mandelbrot_boundary };

inline std::string to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::torus: return "torus";
        case ShapeKind::mandelbrot_boundary: return "mandelbrot";
    }
    return "?";
}

/// Parameters of a synthetic fixture. Radii and center are in the shape's own
/// (raw) coordinates.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::circle;
    double radius = 0.5;        // circle/sphere radius, torus major radius R
    double minor_radius = 0.2;  // torus tube radius r
    std::optional<Vec> center;  // default origin
    int max_iter = 500;         // mandelbrot escape-time cutoff
    double bracket = 1e-6;      // mandelbrot bisection width
    double ray_step = 2e-3;     // mandelbrot outward march step
    double origin_re = -0.2;    // mandelbrot ray origin (inside the main cardioid)
    double origin_im = 0.0;

    int dim() const { return kind == ShapeKind::circle || kind == ShapeKind::mandelbrot_boundary ? 2 : 3; }

    Vec center_or_origin() const { return center ? *center : Vec::Zero(dim()); }

    void validate() const {
        if (kind == ShapeKind::mandelbrot_boundary) {
            require(max_iter > 0 && bracket > 0.0 && ray_step > bracket, "invalid mandelbrot parameters");
            return;
        }
        require(radius > 0.0, "radius must be positive");
        if (kind == ShapeKind::torus) {
            require(minor_radius > 0.0, "torus minor radius must be positive");
            require(minor_radius < radius, "torus requires minor radius r < major radius R");
        }
        if (center) require(center->size() == dim(), "shape center has the wrong dimension");
    }

    /// "circle", "sphere:radius=0.4", "torus:R=0.35,r=0.15", "mandelbrot:iters=500".
    static ShapeSpec parse(const std::string& text) {
        ShapeSpec s;
        const auto colon = text.find(':');
        const std::string kind = text.substr(0, colon);
        if (kind == "circle") {
            s.kind = ShapeKind::circle;
        } else if (kind == "sphere") {
            s.kind = ShapeKind::sphere;
        } else if (kind == "torus") {
            s.kind = ShapeKind::torus;
            s.radius = 0.35;
            s.minor_radius = 0.15;
        } else if (kind == "mandelbrot") {
            s.kind = ShapeKind::mandelbrot_boundary;
        } else {
            throw InvalidArgument("unknown shape '" + kind + "'");
        }
        if (colon != std::string::npos) {
            std::stringstream ss(text.substr(colon + 1));
            std::string kv;
            while (std::getline(ss, kv, ',')) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw InvalidArgument("shape parameter '" + kv + "' is not key=value");
                const std::string key = detail::trim(kv.substr(0, eq));
                double val = 0.0;
                try {
                    val = std::stod(kv.substr(eq + 1));
                } catch (const std::logic_error&) {
                    throw InvalidArgument("shape parameter '" + kv + "' is not numeric");
                }
                if (key == "radius" || key == "R") {
                    s.radius = val;
                } else if (key == "r") {
                    if (s.kind == ShapeKind::torus)
                        s.minor_radius = val;
                    else
                        s.radius = val;
                } else if (key == "iters") {
                    s.max_iter = static_cast<int>(val);
                } else if (key == "bracket") {
                    s.bracket = val;
                } else {
                    throw InvalidArgument("unknown shape parameter '" + key + "'");
                }
            }
        }
        s.validate();
        return s;
    }
};

/// Number of escape-time iterations before |z| > 2, or max_iter if bounded.
inline int mandelbrot_escape(std::complex<double> c, int max_iter) {
    std::complex<double> z = 0.0;
    for (int i = 0; i < max_iter; ++i) {
        z = z * z + c;
        if (std::norm(z) > 4.0) return i;
    }
    return max_iter;
}

inline bool mandelbrot_inside(std::complex<double> c, int max_iter) { return mandelbrot_escape(c, max_iter) == max_iter; }

/// A generated fixture: its spec, the transform from raw to the coordinates
/// the caller works in, and the exact SDF where one exists.
struct SyntheticShape {
    ShapeSpec spec;
    AffineTransform transform;  // raw -> working coordinates

    int dim() const { return spec.dim(); }

    bool has_analytic_sdf() const { return spec.kind != ShapeKind::mandelbrot_boundary; }

    /// Exact signed distance (negative inside) in working coordinates.
    double sdf(const Eigen::Ref<const Vec>& y) const {
        require(has_analytic_sdf(), "mandelbrot boundary has no analytic SDF");
        const Vec x = (y - transform.translation) / transform.scale;
        const Vec q = x - spec.center_or_origin();
        double raw = 0.0;
        switch (spec.kind) {
            case ShapeKind::circle:
            case ShapeKind::sphere: raw = q.norm() - spec.radius; break;
            case ShapeKind::torus: {
                const double ring = std::hypot(q(0), q(1)) - spec.radius;
                raw = std::hypot(ring, q(2)) - spec.minor_radius;
                break;
            }
            case ShapeKind::mandelbrot_boundary: break;
        }
        return transform.scale * raw;
    }

    /// Inside test in working coordinates; escape-time for the fractal.
    bool inside(const Eigen::Ref<const Vec>& y) const {
        if (has_analytic_sdf()) return sdf(y) < 0.0;
        const Vec x = (y - transform.translation) / transform.scale;
        return mandelbrot_inside({x(0), x(1)}, spec.max_iter);
    }

    SyntheticShape with_transform(const AffineTransform& t) const {
        SyntheticShape s = *this;
        s.transform.scale = t.scale * transform.scale;
        s.transform.translation = t.scale * transform.translation + t.translation;
        return s;
    }
};

struct MandelbrotSample {
    Vec point;
    Vec inside_probe;
    Vec outside_probe;
};

/// First outward boundary crossing along a ray from the spec's origin, by
/// marching then bisecting to the bracket width.
inline MandelbrotSample mandelbrot_ray_crossing(const ShapeSpec& spec, double angle) {
    const std::complex<double> o(spec.origin_re, spec.origin_im);
    const std::complex<double> dir(std::cos(angle), std::sin(angle));
    double t_in = 0.0;
    double t_out = spec.ray_step;
    while (mandelbrot_inside(o + t_out * dir, spec.max_iter)) {
        t_in = t_out;
        t_out += spec.ray_step;
        if (t_out > 4.0) break;  // the set lies inside |c| <= 2
    }
    while (t_out - t_in > spec.bracket) {
        const double mid = 0.5 * (t_in + t_out);
        if (mandelbrot_inside(o + mid * dir, spec.max_iter))
            t_in = mid;
        else
            t_out = mid;
    }
    auto to_vec = [](std::complex<double> c) { return Vec((Vec(2) << c.real(), c.imag()).finished()); };
    return {to_vec(o + 0.5 * (t_in + t_out) * dir), to_vec(o + t_in * dir), to_vec(o + t_out * dir)};
}

/// Surface samples of a synthetic shape, in raw coordinates.
inline std::pair<PointCloud, SyntheticShape> synth_shape(const ShapeSpec& spec, Eigen::Index n_points, std::uint64_t seed) {
    spec.validate();
    require(n_points > 0, "n_points must be positive");
    Rng rng(seed);
    const int d = spec.dim();
    const Vec c = spec.center_or_origin();
    Points pts(d, n_points);
    for (Eigen::Index i = 0; i < n_points; ++i) {
        switch (spec.kind) {
            case ShapeKind::circle: {
                const double a = uniform(rng, 0.0, 2.0 * M_PI);
                pts.col(i) = c + spec.radius * Vec((Vec(2) << std::cos(a), std::sin(a)).finished());
                break;
            }
            case ShapeKind::sphere: {
                Vec v(3);
                do {
                    for (int k = 0; k < 3; ++k) v(k) = normal(rng);
                } while (v.norm() < 1e-12);
                pts.col(i) = c + spec.radius * v.normalized();
                break;
            }
            case ShapeKind::torus: {
                // Area-uniform: accept the tube angle with density (R + r cos v).
                const double R = spec.radius, r = spec.minor_radius;
                double u = 0.0, v = 0.0;
                while (true) {
                    u = uniform(rng, 0.0, 2.0 * M_PI);
                    v = uniform(rng, 0.0, 2.0 * M_PI);
                    if (uniform(rng, 0.0, R + r) <= R + r * std::cos(v)) break;
                }
                pts.col(i) = c + Vec((Vec(3) << (R + r * std::cos(v)) * std::cos(u), (R + r * std::cos(v)) * std::sin(u),
                                      r * std::sin(v))
                                         .finished());
                break;
            }
            case ShapeKind::mandelbrot_boundary:
                pts.col(i) = mandelbrot_ray_crossing(spec, uniform(rng, 0.0, 2.0 * M_PI)).point;
                break;
        }
    }
    SyntheticShape shape{spec, AffineTransform{1.0, Vec::Zero(d)}};
    return {PointCloud::from_points(std::move(pts)), shape};
}

}  // namespace viscoreg
