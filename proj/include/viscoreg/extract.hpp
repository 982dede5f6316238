#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "viscoreg/field_net.hpp"
#include "viscoreg/sampler_io.hpp"

namespace viscoreg {

/// Scalar samples on a regular isotropic grid. values are row-major: the
/// last axis varies fastest, so in 3D flat = (i0 * n1 + i1) * n2 + i2.
struct GridField {
    int dim = 2;
    Vec origin;
    double h = 1.0;
    std::vector<Eigen::Index> shape;
    std::vector<double> values;

    static GridField zeros(const Vec& origin, double h, std::vector<Eigen::Index> shape) {
        GridField g;
        g.dim = static_cast<int>(shape.size());
        g.origin = origin;
        g.h = h;
        g.shape = std::move(shape);
        g.values.assign(static_cast<std::size_t>(g.count()), 0.0);
        g.validate(false);
        return g;
    }

    /// Grid covering box with `resolution` nodes along its shortest axis.
    static GridField covering(const Box& box, Eigen::Index resolution) {
        require(resolution >= 2, "grid resolution must be >= 2 per axis");
        const Vec ext = box.extent();
        require(ext.minCoeff() > 0.0, "grid box must have positive extent");
        const double h = ext.minCoeff() / static_cast<double>(resolution - 1);
        std::vector<Eigen::Index> shape(static_cast<std::size_t>(ext.size()));
        for (Eigen::Index k = 0; k < ext.size(); ++k)
            shape[static_cast<std::size_t>(k)] =
                std::max<Eigen::Index>(2, static_cast<Eigen::Index>(std::ceil(ext(k) / h - 1e-9)) + 1);
        return zeros(box.lo, h, std::move(shape));
    }

    Eigen::Index count() const {
        Eigen::Index n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

    Eigen::Index stride(int axis) const {
        Eigen::Index s = 1;
        for (int k = dim - 1; k > axis; --k) s *= shape[static_cast<std::size_t>(k)];
        return s;
    }

    std::array<Eigen::Index, 3> unflatten(Eigen::Index flat) const {
        std::array<Eigen::Index, 3> idx{0, 0, 0};
        for (int k = dim - 1; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)] = flat % shape[static_cast<std::size_t>(k)];
            flat /= shape[static_cast<std::size_t>(k)];
        }
        return idx;
    }

    Eigen::Index flatten(const std::array<Eigen::Index, 3>& idx) const {
        Eigen::Index flat = 0;
        for (int k = 0; k < dim; ++k) flat = flat * shape[static_cast<std::size_t>(k)] + idx[static_cast<std::size_t>(k)];
        return flat;
    }

    Vec point(Eigen::Index flat) const {
        const auto idx = unflatten(flat);
        Vec x(dim);
        for (int k = 0; k < dim; ++k) x(k) = origin(k) + static_cast<double>(idx[static_cast<std::size_t>(k)]) * h;
        return x;
    }

    double at(const std::array<Eigen::Index, 3>& idx) const { return values[static_cast<std::size_t>(flatten(idx))]; }

    Box bounds() const {
        Box b{origin, origin};
        for (int k = 0; k < dim; ++k) b.hi(k) += static_cast<double>(shape[static_cast<std::size_t>(k)] - 1) * h;
        return b;
    }

    void validate(bool check_finite = true) const {
        require(dim == 2 || dim == 3, "grid dim must be 2 or 3");
        require(origin.size() == dim && static_cast<int>(shape.size()) == dim, "grid origin/shape dimension mismatch");
        require(h > 0.0 && std::isfinite(h), "grid spacing must be positive");
        for (auto s : shape) require(s >= 2, "grid needs >= 2 nodes per axis");
        require(static_cast<Eigen::Index>(values.size()) == count(), "grid value count does not match shape");
        if (check_finite)
            for (double v : values)
                if (!std::isfinite(v)) throw NonFiniteError("grid contains non-finite values");
    }

    /// Multilinear interpolation; points outside are clamped to the grid.
    double interpolate(const Eigen::Ref<const Vec>& x) const {
        std::array<Eigen::Index, 3> base{0, 0, 0};
        std::array<double, 3> t{0, 0, 0};
        for (int k = 0; k < dim; ++k) {
            const auto n = shape[static_cast<std::size_t>(k)];
            const double s = std::clamp((x(k) - origin(k)) / h, 0.0, static_cast<double>(n - 1));
            auto i = static_cast<Eigen::Index>(std::floor(s));
            if (i >= n - 1) i = n - 2;
            base[static_cast<std::size_t>(k)] = i;
            t[static_cast<std::size_t>(k)] = s - static_cast<double>(i);
        }
        double acc = 0.0;
        for (int c = 0; c < (1 << dim); ++c) {
            double w = 1.0;
            auto idx = base;
            for (int k = 0; k < dim; ++k) {
                const bool up = (c >> k) & 1;
                idx[static_cast<std::size_t>(k)] += up;
                w *= up ? t[static_cast<std::size_t>(k)] : 1.0 - t[static_cast<std::size_t>(k)];
            }
            if (w != 0.0) acc += w * at(idx);
        }
        return acc;
    }
};

inline constexpr const char* kGridMagic = "viscoreg-grid";

inline void write_grid(std::ostream& os, const GridField& g) {
    os << kGridMagic << " 1\n" << std::setprecision(17) << "dim " << g.dim << "\norigin";
    for (int k = 0; k < g.dim; ++k) os << ' ' << g.origin(k);
    os << "\nh " << g.h << "\nshape";
    for (auto s : g.shape) os << ' ' << s;
    os << '\n';
    for (double v : g.values) os << v << '\n';
}

inline GridField read_grid(std::istream& is) {
    std::string magic, key;
    int version = 0;
    if (!(is >> magic >> version) || magic != kGridMagic || version != 1) throw IoError("not a viscoreg grid file");
    GridField g;
    if (!(is >> key >> g.dim) || key != "dim" || (g.dim != 2 && g.dim != 3)) throw IoError("grid: bad dim line");
    g.origin.resize(g.dim);
    if (!(is >> key) || key != "origin") throw IoError("grid: missing origin");
    for (int k = 0; k < g.dim; ++k)
        if (!(is >> g.origin(k))) throw IoError("grid: bad origin");
    if (!(is >> key >> g.h) || key != "h") throw IoError("grid: bad spacing");
    if (!(is >> key) || key != "shape") throw IoError("grid: missing shape");
    g.shape.resize(static_cast<std::size_t>(g.dim));
    for (auto& s : g.shape)
        if (!(is >> s)) throw IoError("grid: bad shape");
    g.values.resize(static_cast<std::size_t>(g.count()));
    for (auto& v : g.values)
        if (!(is >> v)) throw IoError("grid: truncated values");
    g.validate();
    return g;
}

/// Fills grid values with fn(point); slabs along axis 0 are shared among workers.
template <class Fn>
void fill_grid(GridField& g, Fn&& fn, int workers = 1) {
    const Eigen::Index n0 = g.shape[0];
    const Eigen::Index slab = g.count() / n0;
    auto run = [&](Eigen::Index wid, Eigen::Index stride) {
        for (Eigen::Index i = wid; i < n0; i += stride)
            for (Eigen::Index j = 0; j < slab; ++j) {
                const Eigen::Index flat = i * slab + j;
                g.values[static_cast<std::size_t>(flat)] = fn(g.point(flat));
            }
    };
    if (workers <= 1) {
        run(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(run, t, workers);
    }
}

template <class Fn>
    requires std::invocable<Fn&, const Vec&>
GridField eval_grid(Fn&& fn, const Box& box, Eigen::Index resolution, int workers = 1) {
    GridField g = GridField::covering(box, resolution);
    fill_grid(g, std::forward<Fn>(fn), workers);
    return g;
}

inline GridField eval_grid(const SineMlpParams& p, const Box& box, Eigen::Index resolution, int workers = 1) {
    require(box.lo.size() == p.arch.input_dim, "grid box dimension does not match network");
    GridField g = GridField::covering(box, resolution);
    const Eigen::Index n0 = g.shape[0];
    const Eigen::Index slab = g.count() / n0;
    Points X(g.dim, slab);
    for (Eigen::Index i = 0; i < n0; ++i) {
        for (Eigen::Index j = 0; j < slab; ++j) X.col(j) = g.point(i * slab + j);
        const RowVec v = forward_values(p, X, workers);
        std::copy(v.data(), v.data() + slab, g.values.begin() + i * slab);
    }
    return g;
}

struct SurfaceMesh {
    int dim = 3;
    Points vertices;
    /// Triangles in 3D, unused in 2D.
    std::vector<std::array<Eigen::Index, 3>> triangles;
    /// Segments in 2D, unused in 3D.
    std::vector<std::array<Eigen::Index, 2>> segments;

    Eigen::Index vertex_count() const { return vertices.cols(); }
    std::size_t element_count() const { return dim == 3 ? triangles.size() : segments.size(); }
    bool empty() const { return element_count() == 0; }

    void validate() const {
        require(vertices.rows() == dim || vertices.cols() == 0, "mesh vertex dimension mismatch");
        const auto nv = vertices.cols();
        auto check = [&](const auto& el) {
            for (std::size_t a = 0; a < el.size(); ++a) {
                require(el[a] >= 0 && el[a] < nv, "mesh index out of range");
                for (std::size_t b = a + 1; b < el.size(); ++b) require(el[a] != el[b], "degenerate mesh element");
            }
        };
        for (const auto& t : triangles) check(t);
        for (const auto& s : segments) check(s);
    }

    /// Edges used by exactly one triangle (3D) or vertices used by one segment (2D).
    std::size_t boundary_count() const {
        std::map<std::pair<Eigen::Index, Eigen::Index>, int> uses;
        if (dim == 3) {
            for (const auto& t : triangles)
                for (int e = 0; e < 3; ++e) {
                    auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
                    ++uses[{std::min(a, b), std::max(a, b)}];
                }
        } else {
            for (const auto& s : segments)
                for (auto v : s) ++uses[{v, v}];
        }
        std::size_t n = 0;
        for (const auto& [k, c] : uses) n += c == 1;
        return n;
    }

    /// Edges with more than two incident triangles.
    std::size_t nonmanifold_edge_count() const {
        std::map<std::pair<Eigen::Index, Eigen::Index>, int> uses;
        for (const auto& t : triangles)
            for (int e = 0; e < 3; ++e) {
                auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
                ++uses[{std::min(a, b), std::max(a, b)}];
            }
        std::size_t n = 0;
        for (const auto& [k, c] : uses) n += c > 2;
        return n;
    }

    /// Signed volume (3D) or signed area (2D) enclosed by the oriented mesh.
    double signed_measure() const {
        double s = 0.0;
        if (dim == 3) {
            for (const auto& t : triangles) {
                const Eigen::Vector3d a = vertices.col(t[0]), b = vertices.col(t[1]), c = vertices.col(t[2]);
                s += a.dot(b.cross(c));
            }
            return s / 6.0;
        }
        for (const auto& e : segments) {
            const auto a = vertices.col(e[0]), b = vertices.col(e[1]);
            s += a(0) * b(1) - a(1) * b(0);
        }
        return s / 2.0;
    }
};

namespace detail {

// Cube corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1). Corner bit set in
// a case index means the corner value is below iso.
struct MarchTables {
    // Edge e joins corners edge_corner[e][0] -> edge_corner[e][1] along axis edge_axis[e].
    std::array<std::array<int, 2>, 12> edge_corner{};
    std::array<int, 12> edge_axis{};
    std::array<std::vector<std::array<int, 3>>, 256> cube;
    std::array<std::vector<std::array<int, 2>>, 16> square;
};

// Face walk with corners in counter-clockwise order about the outward normal.
// Every run of consecutive below-iso corners contributes one segment from the
// edge where the run ends to the edge where it starts, so below-iso corners are
// always separated on ambiguous faces and the segments of all faces chain into
// closed loops around the cell.
template <class EdgeOf>
inline std::vector<std::array<int, 2>> face_segments(const std::array<int, 4>& corners, unsigned mask, EdgeOf edge_of) {
    std::vector<std::array<int, 2>> segs;
    auto below = [&](int i) { return ((mask >> corners[static_cast<std::size_t>(i & 3)]) & 1u) != 0; };
    int count = 0;
    for (int i = 0; i < 4; ++i) count += below(i);
    if (count == 0 || count == 4) return segs;
    for (int i = 0; i < 4; ++i) {
        if (!below(i) && below(i + 1)) {
            const int enter = edge_of(corners[static_cast<std::size_t>(i)], corners[static_cast<std::size_t>((i + 1) & 3)]);
            int j = i + 1;
            while (below(j + 1)) ++j;
            const int exit = edge_of(corners[static_cast<std::size_t>(j & 3)], corners[static_cast<std::size_t>((j + 1) & 3)]);
            segs.push_back({exit, enter});
        }
    }
    return segs;
}

inline bool edges_share_face(const MarchTables& t, int e1, int e2) {
    const auto& a = t.edge_corner[static_cast<std::size_t>(e1)];
    const auto& b = t.edge_corner[static_cast<std::size_t>(e2)];
    for (int axis = 0; axis < 3; ++axis) {
        const int s = (a[0] >> axis) & 1;
        if (((a[1] >> axis) & 1) == s && ((b[0] >> axis) & 1) == s && ((b[1] >> axis) & 1) == s) return true;
    }
    return false;
}

// Splits the loop along chords that cross the cell interior. A chord between
// two vertices on one cube face would be duplicated by the neighboring cell
// and make the edge non-manifold.
inline bool triangulate_loop(const MarchTables& t, const std::vector<int>& loop, std::vector<std::array<int, 3>>& out) {
    const std::size_t n = loop.size();
    if (n == 3) {
        out.push_back({loop[0], loop[1], loop[2]});
        return true;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            if (edges_share_face(t, loop[i], loop[j])) continue;
            const std::vector<int> a(loop.begin() + static_cast<long>(i), loop.begin() + static_cast<long>(j) + 1);
            std::vector<int> b(loop.begin() + static_cast<long>(j), loop.end());
            b.insert(b.end(), loop.begin(), loop.begin() + static_cast<long>(i) + 1);
            std::vector<std::array<int, 3>> tri;
            if (triangulate_loop(t, a, tri) && triangulate_loop(t, b, tri)) {
                out.insert(out.end(), tri.begin(), tri.end());
                return true;
            }
        }
    return false;
}

inline MarchTables build_march_tables() {
    MarchTables t;
    int e = 0;
    for (int axis = 0; axis < 3; ++axis)
        for (int c = 0; c < 8; ++c)
            if (!((c >> axis) & 1)) {
                t.edge_corner[static_cast<std::size_t>(e)] = {c, c | (1 << axis)};
                t.edge_axis[static_cast<std::size_t>(e)] = axis;
                ++e;
            }
    auto edge_of = [&](int a, int b) {
        for (int k = 0; k < 12; ++k) {
            const auto& ec = t.edge_corner[static_cast<std::size_t>(k)];
            if ((ec[0] == a && ec[1] == b) || (ec[0] == b && ec[1] == a)) return k;
        }
        throw Error("march tables: corners are not adjacent");
    };
    std::vector<std::array<int, 4>> faces;
    for (int a = 0; a < 3; ++a) {
        const int u = (a + 1) % 3, v = (a + 2) % 3;
        for (int s = 0; s < 2; ++s) {
            auto corner = [&](int cu, int cv) { return (s << a) | (cu << u) | (cv << v); };
            std::array<int, 4> f{corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)};
            if (s == 0) std::swap(f[1], f[3]);
            faces.push_back(f);
        }
    }
    std::array<Eigen::Vector3d, 12> mid;
    for (int k = 0; k < 12; ++k) {
        const auto& ec = t.edge_corner[static_cast<std::size_t>(k)];
        for (int d = 0; d < 3; ++d)
            mid[static_cast<std::size_t>(k)](d) = 0.5 * (((ec[0] >> d) & 1) + ((ec[1] >> d) & 1));
    }
    for (unsigned mask = 0; mask < 256; ++mask) {
        std::array<int, 12> next;
        next.fill(-1);
        for (const auto& f : faces)
            for (const auto& s : face_segments(f, mask, edge_of)) next[static_cast<std::size_t>(s[0])] = s[1];
        std::array<bool, 12> seen{};
        for (int start = 0; start < 12; ++start) {
            if (next[static_cast<std::size_t>(start)] < 0 || seen[static_cast<std::size_t>(start)]) continue;
            std::vector<int> loop;
            for (int k = start; !seen[static_cast<std::size_t>(k)]; k = next[static_cast<std::size_t>(k)]) {
                seen[static_cast<std::size_t>(k)] = true;
                loop.push_back(k);
            }
            if (!triangulate_loop(t, loop, t.cube[mask]))
                for (std::size_t i = 1; i + 1 < loop.size(); ++i)
                    t.cube[mask].push_back({loop[0], loop[i], loop[i + 1]});
        }
    }
    // Orient triangles so normals point from below-iso to above-iso.
    const auto& tri = t.cube[1].front();
    const Eigen::Vector3d n = (mid[static_cast<std::size_t>(tri[1])] - mid[static_cast<std::size_t>(tri[0])])
                                  .cross(mid[static_cast<std::size_t>(tri[2])] - mid[static_cast<std::size_t>(tri[0])]);
    if (n.sum() < 0.0)
        for (auto& list : t.cube)
            for (auto& tr : list) std::swap(tr[1], tr[2]);

    // Squares reuse the z = 0 face of the cube: corners 0..3 and edges 0,1 (x) and 4,5 (y).
    const std::array<int, 4> sq{0, 1, 3, 2};
    for (unsigned mask = 0; mask < 16; ++mask) t.square[mask] = face_segments(sq, mask, edge_of);
    return t;
}

inline const MarchTables& march_tables() {
    static const MarchTables tables = build_march_tables();
    return tables;
}

}  // namespace detail

/// Zero-crossing extraction of the iso level set. A node counts as inside
/// when its value is below iso.
inline SurfaceMesh march(const GridField& grid, double iso = 0.0) {
    grid.validate();
    const auto& T = detail::march_tables();
    const int d = grid.dim;
    SurfaceMesh mesh;
    mesh.dim = d;

    // One vertex per sign-changing grid edge, numbered in global edge order.
    std::unordered_map<Eigen::Index, Eigen::Index> vertex_of;
    std::vector<Vec> verts;
    auto inside = [&](Eigen::Index flat) { return grid.values[static_cast<std::size_t>(flat)] < iso; };
    const Eigen::Index n = grid.count();
    for (Eigen::Index flat = 0; flat < n; ++flat) {
        const auto idx = grid.unflatten(flat);
        for (int axis = 0; axis < d; ++axis) {
            if (idx[static_cast<std::size_t>(axis)] + 1 >= grid.shape[static_cast<std::size_t>(axis)]) continue;
            const Eigen::Index other = flat + grid.stride(axis);
            if (inside(flat) == inside(other)) continue;
            const double va = grid.values[static_cast<std::size_t>(flat)];
            const double vb = grid.values[static_cast<std::size_t>(other)];
            const double t = (iso - va) / (vb - va);
            Vec x = grid.point(flat);
            x(axis) += t * grid.h;
            vertex_of.emplace(flat * d + axis, static_cast<Eigen::Index>(verts.size()));
            verts.push_back(std::move(x));
        }
    }
    mesh.vertices.resize(d, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];

    auto global_edge = [&](const std::array<Eigen::Index, 3>& cell, int local) {
        const auto& ec = T.edge_corner[static_cast<std::size_t>(local)];
        auto idx = cell;
        for (int k = 0; k < d; ++k) idx[static_cast<std::size_t>(k)] += (ec[0] >> k) & 1;
        return vertex_of.at(grid.flatten(idx) * d + T.edge_axis[static_cast<std::size_t>(local)]);
    };

    std::array<Eigen::Index, 3> cell{0, 0, 0};
    const Eigen::Index c0 = grid.shape[0] - 1, c1 = grid.shape[1] - 1, c2 = d == 3 ? grid.shape[2] - 1 : 1;
    for (cell[0] = 0; cell[0] < c0; ++cell[0])
        for (cell[1] = 0; cell[1] < c1; ++cell[1])
            for (cell[2] = 0; cell[2] < c2; ++cell[2]) {
                unsigned mask = 0;
                for (int c = 0; c < (1 << d); ++c) {
                    auto idx = cell;
                    for (int k = 0; k < d; ++k) idx[static_cast<std::size_t>(k)] += (c >> k) & 1;
                    if (grid.at(idx) < iso) mask |= 1u << c;
                }
                if (d == 3) {
                    for (const auto& tr : T.cube[mask])
                        mesh.triangles.push_back(
                            {global_edge(cell, tr[0]), global_edge(cell, tr[1]), global_edge(cell, tr[2])});
                } else {
                    for (const auto& s : T.square[mask])
                        mesh.segments.push_back({global_edge(cell, s[0]), global_edge(cell, s[1])});
                }
            }
    return mesh;
}

enum class MeshFormat { obj, ply };

inline MeshFormat mesh_format_from_path(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "obj") return MeshFormat::obj;
    if (ext == "ply") return MeshFormat::ply;
    throw InvalidArgument("cannot infer mesh format from '" + path + "'");
}

/// OBJ with "v" lines and 1-based "f" (3D) or "l" (2D) lines; 2D vertices get z = 0.
inline void write_obj(std::ostream& os, const SurfaceMesh& m) {
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.vertices.cols(); ++i)
        os << "v " << m.vertices(0, i) << ' ' << m.vertices(1, i) << ' ' << (m.dim == 3 ? m.vertices(2, i) : 0.0) << '\n';
    for (const auto& t : m.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    for (const auto& s : m.segments) os << "l " << s[0] + 1 << ' ' << s[1] + 1 << '\n';
}

inline void write_mesh_ply(std::ostream& os, const SurfaceMesh& m) {
    os << "ply\nformat ascii 1.0\nelement vertex " << m.vertices.cols()
       << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (m.dim == 3)
        os << "element face " << m.triangles.size() << "\nproperty list uchar int vertex_indices\n";
    else
        os << "element edge " << m.segments.size() << "\nproperty int vertex1\nproperty int vertex2\n";
    os << "end_header\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < m.vertices.cols(); ++i)
        os << m.vertices(0, i) << ' ' << m.vertices(1, i) << ' ' << (m.dim == 3 ? m.vertices(2, i) : 0.0) << '\n';
    for (const auto& t : m.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    for (const auto& s : m.segments) os << s[0] << ' ' << s[1] << '\n';
}

inline void export_mesh(const SurfaceMesh& m, const std::string& path, MeshFormat format) {
    m.validate();
    std::ofstream os(path);
    if (!os) throw IoError("cannot write mesh " + path);
    if (format == MeshFormat::obj)
        write_obj(os, m);
    else
        write_mesh_ply(os, m);
    if (!os) throw IoError("failed writing mesh " + path);
}

inline void export_mesh(const SurfaceMesh& m, const std::string& path) { export_mesh(m, path, mesh_format_from_path(path)); }

/// Reads "v", "f" and "l" records; a file with "l" records and no faces is a 2D contour.
inline SurfaceMesh read_obj(std::istream& is) {
    SurfaceMesh m;
    std::vector<Eigen::Vector3d> verts;
    std::string line;
    std::size_t lineno = 0;
    auto index = [&](const std::string& tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long long k = 0;
        try {
            k = std::stoll(head);
        } catch (const std::logic_error&) {
            throw ParseError("bad OBJ index '" + tok + "'", lineno);
        }
        if (k < 0) k += static_cast<long long>(verts.size()) + 1;
        if (k < 1 || k > static_cast<long long>(verts.size())) throw ParseError("OBJ index out of range", lineno);
        return static_cast<Eigen::Index>(k - 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        const auto toks = detail::split_ws(detail::trim(line));
        if (toks.empty() || toks[0][0] == '#') continue;
        if (toks[0] == "v") {
            if (toks.size() < 4) throw ParseError("OBJ vertex needs 3 coordinates", lineno);
            verts.emplace_back(detail::parse_real(toks[1], lineno), detail::parse_real(toks[2], lineno),
                               detail::parse_real(toks[3], lineno));
        } else if (toks[0] == "f") {
            if (toks.size() < 4) throw ParseError("OBJ face needs >= 3 indices", lineno);
            const Eigen::Index a = index(toks[1]);
            for (std::size_t k = 2; k + 1 < toks.size(); ++k) m.triangles.push_back({a, index(toks[k]), index(toks[k + 1])});
        } else if (toks[0] == "l") {
            for (std::size_t k = 1; k + 1 < toks.size(); ++k) m.segments.push_back({index(toks[k]), index(toks[k + 1])});
        }
    }
    m.dim = (!m.segments.empty() && m.triangles.empty()) ? 2 : 3;
    m.vertices.resize(m.dim, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = verts[i].head(m.dim);
    m.validate();
    return m;
}

inline SurfaceMesh import_mesh(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open mesh " + path);
    if (mesh_format_from_path(path) == MeshFormat::obj) return read_obj(is);
    // PLY meshes: only the vertex element is needed by the metrics.
    SurfaceMesh m;
    const PointCloud pc = read_ply(is);
    m.vertices = pc.points;
    return m;
}

/// Chains segments into polylines and writes "x,y,segment_id" rows, one
/// polyline per id; closed loops repeat their first point at the end.
inline void write_contour_csv(std::ostream& os, const SurfaceMesh& m) {
    require(m.dim == 2, "contour export needs a 2D mesh");
    os << "x,y,segment_id\n" << std::setprecision(17);
    const auto nv = m.vertices.cols();
    std::vector<std::vector<std::size_t>> incident(static_cast<std::size_t>(nv));
    for (std::size_t s = 0; s < m.segments.size(); ++s)
        for (auto v : m.segments[s]) incident[static_cast<std::size_t>(v)].push_back(s);
    std::vector<bool> used(m.segments.size(), false);
    auto other_end = [&](std::size_t s, Eigen::Index v) { return m.segments[s][0] == v ? m.segments[s][1] : m.segments[s][0]; };
    auto next_unused = [&](Eigen::Index v) -> long {
        for (auto s : incident[static_cast<std::size_t>(v)])
            if (!used[s]) return static_cast<long>(s);
        return -1;
    };
    long id = 0;
    auto emit = [&](Eigen::Index v) { os << m.vertices(0, v) << ',' << m.vertices(1, v) << ',' << id << '\n'; };
    auto trace = [&](Eigen::Index start) {
        emit(start);
        Eigen::Index v = start;
        for (long s = next_unused(v); s >= 0; s = next_unused(v)) {
            used[static_cast<std::size_t>(s)] = true;
            v = other_end(static_cast<std::size_t>(s), v);
            emit(v);
        }
        ++id;
    };
    // Open polylines start at their endpoints, then whatever remains is closed loops.
    for (Eigen::Index v = 0; v < nv; ++v)
        if (incident[static_cast<std::size_t>(v)].size() == 1 && next_unused(v) >= 0) trace(v);
    for (std::size_t s = 0; s < m.segments.size(); ++s)
        if (!used[s]) trace(m.segments[s][0]);
}

}  // namespace viscoreg
