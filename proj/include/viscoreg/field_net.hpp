#pragma once

// Sine-activated MLP u(x) with forward propagation of (value, gradient,
// Laplacian) jets and reverse-mode parameter gradients of losses built on them.
//
// Hidden layer l computes a_l = sin(omega_l * (W_l a_{l-1} + b_l)) with
// omega_0 = Architecture::omega0 and omega_l = Architecture::omega_hidden
// otherwise. The output layer is affine: u = w . a_H + b.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "viscoreg/batch.hpp"
#include "viscoreg/jet.hpp"
#include "viscoreg/losses.hpp"

namespace viscoreg {

struct Architecture {
    int input_dim = 3;
    int hidden_layers = 3;
    int width = 64;
    double omega0 = 30.0;
    double omega_hidden = 1.0;

    void validate() const {
        require(input_dim == 2 || input_dim == 3, "input_dim must be 2 or 3");
        require(hidden_layers >= 1, "hidden_layers must be >= 1");
        require(width >= 1, "width must be >= 1");
        require(omega0 > 0.0 && std::isfinite(omega0), "omega0 must be positive");
        require(omega_hidden > 0.0 && std::isfinite(omega_hidden), "omega_hidden must be positive");
    }

    /// Number of affine layers including the scalar output layer.
    int layer_count() const { return hidden_layers + 1; }

    int fan_in(int layer) const { return layer == 0 ? input_dim : width; }
    int fan_out(int layer) const { return layer == hidden_layers ? 1 : width; }

    /// Frequency multiplier of a layer; the output layer has none.
    double omega(int layer) const {
        if (layer == hidden_layers) return 1.0;
        return layer == 0 ? omega0 : omega_hidden;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (int l = 0; l < layer_count(); ++l)
            n += static_cast<std::size_t>(fan_out(l)) * static_cast<std::size_t>(fan_in(l) + 1);
        return n;
    }

    bool operator==(const Architecture&) const = default;
};

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;    // out

    bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

/// A list of layers shaped like an Architecture: the network weights, and
/// equally the gradient of a loss with respect to them.
struct LayerSet {
    std::vector<DenseLayer> layers;

    static LayerSet zeros_like(const Architecture& arch) {
        LayerSet s;
        for (int l = 0; l < arch.layer_count(); ++l)
            s.layers.push_back({Mat::Zero(arch.fan_out(l), arch.fan_in(l)), Vec::Zero(arch.fan_out(l))});
        return s;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    /// Row-major weights then bias, layer by layer.
    Vec flatten() const {
        Vec v(static_cast<Eigen::Index>(size()));
        Eigen::Index k = 0;
        for (const auto& l : layers) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) v(k++) = l.weight(r, c);
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) v(k++) = l.bias(r);
        }
        return v;
    }

    void assign(const Eigen::Ref<const Vec>& v) {
        require(static_cast<std::size_t>(v.size()) == size(), "flat parameter vector has wrong length");
        Eigen::Index k = 0;
        for (auto& l : layers) {
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = v(k++);
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = v(k++);
        }
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
        return s;
    }

    bool all_finite() const {
        return std::all_of(layers.begin(), layers.end(),
                           [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
    }

    LayerSet& operator+=(const LayerSet& o) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].weight += o.layers[i].weight;
            layers[i].bias += o.layers[i].bias;
        }
        return *this;
    }

    LayerSet& operator*=(double c) {
        for (auto& l : layers) {
            l.weight *= c;
            l.bias *= c;
        }
        return *this;
    }

    bool operator==(const LayerSet&) const = default;
};

using ParamGrad = LayerSet;

struct SineMlpParams {
    Architecture arch;
    LayerSet net;

    std::vector<DenseLayer>& layers() { return net.layers; }
    const std::vector<DenseLayer>& layers() const { return net.layers; }

    void validate() const {
        arch.validate();
        require(static_cast<int>(net.layers.size()) == arch.layer_count(), "layer count does not match architecture");
        for (int l = 0; l < arch.layer_count(); ++l) {
            const auto& L = net.layers[static_cast<std::size_t>(l)];
            require(L.weight.rows() == arch.fan_out(l) && L.weight.cols() == arch.fan_in(l), "layer weight shape mismatch");
            require(L.bias.size() == arch.fan_out(l), "layer bias shape mismatch");
        }
        if (!net.all_finite()) throw NonFiniteError("network parameters contain non-finite entries");
    }

    bool operator==(const SineMlpParams&) const = default;
};

// ---------------------------------------------------------------------------
// Initialization

/// Half-width of the uniform range init_geometric draws weights of a layer from.
inline double siren_weight_bound(const Architecture& arch, int layer) {
    if (layer == 0) return 1.0 / arch.input_dim;
    if (layer == arch.hidden_layers) return std::sqrt(6.0 / arch.width);
    return std::sqrt(6.0 / arch.width) / arch.omega_hidden;
}

inline double siren_bias_bound(const Architecture& arch, int layer) {
    return 1.0 / std::sqrt(static_cast<double>(arch.fan_in(layer)));
}

/// Plain SIREN-style uniform initialization.
inline SineMlpParams init_geometric(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    SineMlpParams p{arch, LayerSet::zeros_like(arch)};
    for (int l = 0; l < arch.layer_count(); ++l) {
        auto& L = p.layers()[static_cast<std::size_t>(l)];
        const double wb = siren_weight_bound(arch, l);
        const double bb = siren_bias_bound(arch, l);
        for (Eigen::Index r = 0; r < L.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < L.weight.cols(); ++c) L.weight(r, c) = uniform(rng, -wb, wb);
        for (Eigen::Index r = 0; r < L.bias.size(); ++r) L.bias(r) = uniform(rng, -bb, bb);
    }
    return p;
}

/// Multi-frequency geometric initialization.
///
/// Three quarters of the first-layer neurons are low-frequency "geometric"
/// channels whose directions form a tight frame, so that after the cosine
/// layer the output is approximately the paraboloid
///     u(x) = (|x|^2 - rho^2) / (2 rho),   rho = 1 / (2 sphere_scale),
/// negative inside a sphere of radius rho and with unit slope on it. The other
/// quarter are ordinary high-frequency SIREN neurons whose contribution to the
/// output is damped by `perturb`.
inline SineMlpParams init_mfgi(const Architecture& arch, std::uint64_t seed, double sphere_scale = 1.6,
                               double perturb = 0.1) {
    arch.validate();
    require(sphere_scale > 0.0, "sphere_scale must be positive");
    require(perturb >= 0.0, "perturb must be nonnegative");
    Rng rng(seed);
    SineMlpParams p{arch, LayerSet::zeros_like(arch)};

    const int d = arch.input_dim;
    const int n = arch.width;
    const int H = arch.hidden_layers;
    const int n_high = (n >= 4 && n - n / 4 >= d) ? n / 4 : 0;
    const int m = n - n_high;
    const double rho = 1.0 / (2.0 * sphere_scale);
    const double noise = 0.01 * perturb;

    // Geometric directions, whitened to sum_i v_i v_i^T = (m/d) I.
    Mat V(m, d);
    for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = normal(rng);
    if (m >= d) {
        const Mat M = V.transpose() * V;
        Eigen::SelfAdjointEigenSolver<Mat> es(M);
        if (es.eigenvalues().minCoeff() > 1e-12) {
            const Mat inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                                 es.eigenvectors().transpose();
            V = V * inv_sqrt * std::sqrt(static_cast<double>(m) / d);
        }
    }

    const double half_pi = 0.5 * M_PI;
    auto& first = p.layers()[0];
    if (H == 1) {
        // The first layer is also the cosine layer: cos(s v.x) ~ 1 - s^2 (v.x)^2 / 2.
        const double s = std::sqrt(static_cast<double>(d) / (m * rho));
        for (int i = 0; i < m; ++i) {
            first.weight.row(i) = V.row(i) * (s / arch.omega0);
            first.bias(i) = half_pi / arch.omega0;
        }
    } else {
        const double s = std::sqrt(4.0 * d / (rho * M_PI * M_PI * m));
        for (int i = 0; i < m; ++i) first.weight.row(i) = V.row(i) * (s / arch.omega0);
    }
    for (int j = m; j < n; ++j) {
        for (int c = 0; c < d; ++c) first.weight(j, c) = uniform(rng, -1.0 / d, 1.0 / d);
        first.bias(j) = uniform(rng, -M_PI, M_PI) / arch.omega0;
    }

    // Pass-through layers: sin(a) ~ a for the small geometric activations.
    for (int l = 1; l < H - 1; ++l) {
        auto& L = p.layers()[static_cast<std::size_t>(l)];
        for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = noise * normal(rng);
        L.weight.diagonal().array() += 1.0;
        L.weight /= arch.omega_hidden;
    }

    // Cosine layer: sin(pi/2 a + pi/2) = cos(pi a / 2) ~ 1 - pi^2 a^2 / 8.
    if (H >= 2) {
        auto& L = p.layers()[static_cast<std::size_t>(H - 1)];
        for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = noise * normal(rng);
        for (int i = 0; i < n; ++i) L.weight(i, i) += (i < m ? half_pi : perturb * half_pi);
        L.weight /= arch.omega_hidden;
        L.bias.setConstant(half_pi / arch.omega_hidden);
    }

    auto& out = p.layers()[static_cast<std::size_t>(H)];
    double offset = 0.0;
    for (int i = 0; i < n; ++i) {
        if (H == 1 && i >= m) {
            out.weight(0, i) = perturb * 0.1 * normal(rng);
        } else {
            out.weight(0, i) = -1.0 + 1e-5 * normal(rng);
            offset += 1.0;
        }
    }
    // Mean contribution of the damped high-frequency channels, E[sin^2] = 1/2.
    const double high_mean = H >= 2 ? n_high * (M_PI * M_PI / 8.0) * perturb * perturb * 0.5 : 0.0;
    out.bias(0) = offset - 0.5 * rho - high_mean;
    return p;
}

// ---------------------------------------------------------------------------
// Forward and reverse passes

namespace detail {

/// Forward state of one hidden layer for a chunk of points. Matrices are
/// "stacks" of K = dim + 2 column blocks: [value | d/dx_1 .. d/dx_d | Laplacian].
struct LayerCache {
    Mat input;   // fan_in x K*B
    Mat pre;     // fan_out x K*B, pre-activation stack
    Mat s, c;    // sin / cos of the value block
    Mat sumsq;   // sum_k (d z / d x_k)^2
};

struct ForwardCache {
    Eigen::Index count = 0;
    int dim = 0;
    std::vector<LayerCache> hidden;
    Mat last;    // width x K*B, input to the output layer
    RowVec out;  // 1 x K*B
};

inline Mat input_stack(const Eigen::Ref<const Points>& x) {
    const Eigen::Index d = x.rows(), B = x.cols();
    Mat S = Mat::Zero(d, (d + 2) * B);
    S.leftCols(B) = x;
    for (Eigen::Index k = 0; k < d; ++k) S.row(k).segment((k + 1) * B, B).setOnes();
    return S;
}

inline ForwardCache forward_stack(const SineMlpParams& p, const Eigen::Ref<const Points>& x) {
    const auto& arch = p.arch;
    const Eigen::Index B = x.cols();
    const int d = arch.input_dim;
    const int K = d + 2;
    ForwardCache fc;
    fc.count = B;
    fc.dim = d;
    fc.hidden.resize(static_cast<std::size_t>(arch.hidden_layers));
    Mat S = input_stack(x);
    for (int l = 0; l < arch.hidden_layers; ++l) {
        const auto& L = p.layers()[static_cast<std::size_t>(l)];
        const double om = arch.omega(l);
        auto& cache = fc.hidden[static_cast<std::size_t>(l)];
        cache.pre.noalias() = (om * L.weight) * S;
        cache.pre.leftCols(B).colwise() += om * L.bias;
        cache.s = cache.pre.leftCols(B).array().sin().matrix();
        cache.c = cache.pre.leftCols(B).array().cos().matrix();
        cache.sumsq = Mat::Zero(L.weight.rows(), B);
        Mat next(L.weight.rows(), K * B);
        next.leftCols(B) = cache.s;
        for (int k = 1; k <= d; ++k) {
            const auto Jz = cache.pre.middleCols(k * B, B).array();
            next.middleCols(k * B, B) = (cache.c.array() * Jz).matrix();
            cache.sumsq.array() += Jz.square();
        }
        next.rightCols(B) = (cache.c.array() * cache.pre.rightCols(B).array() -
                             cache.s.array() * cache.sumsq.array()).matrix();
        cache.input = std::move(S);
        S = std::move(next);
    }
    const auto& out = p.layers().back();
    fc.out.noalias() = out.weight * S;
    fc.out.leftCols(B).array() += out.bias(0);
    fc.last = std::move(S);
    return fc;
}

inline JetBatch jets_from(const ForwardCache& fc) {
    const Eigen::Index B = fc.count;
    JetBatch j;
    j.value = fc.out.leftCols(B);
    j.grad.resize(fc.dim, B);
    for (int k = 0; k < fc.dim; ++k) j.grad.row(k) = fc.out.segment((k + 1) * B, B);
    j.laplacian = fc.out.rightCols(B);
    return j;
}

/// Accumulates d(loss)/d(params) into grad given d(loss)/d(output stack).
inline void backward_stack(const SineMlpParams& p, const ForwardCache& fc, const RowVec& out_bar, LayerSet& grad) {
    const auto& arch = p.arch;
    const Eigen::Index B = fc.count;
    const int d = fc.dim;
    const int K = d + 2;
    const auto& out = p.layers().back();
    auto& gout = grad.layers.back();
    gout.weight.noalias() += out_bar * fc.last.transpose();
    gout.bias(0) += out_bar.leftCols(B).sum();
    Mat S_bar = out.weight.transpose() * out_bar;
    for (int l = arch.hidden_layers - 1; l >= 0; --l) {
        const auto& L = p.layers()[static_cast<std::size_t>(l)];
        const auto& cache = fc.hidden[static_cast<std::size_t>(l)];
        const double om = arch.omega(l);
        const auto s = cache.s.array();
        const auto c = cache.c.array();
        const auto a_bar = S_bar.leftCols(B).array();
        const auto lap_bar = S_bar.rightCols(B).array();
        const auto lap_z = cache.pre.rightCols(B).array();
        Mat Z_bar(L.weight.rows(), K * B);
        Eigen::ArrayXXd z_bar = a_bar * c - lap_bar * (s * lap_z + c * cache.sumsq.array());
        for (int k = 1; k <= d; ++k) {
            const auto Jz = cache.pre.middleCols(k * B, B).array();
            const auto J_bar = S_bar.middleCols(k * B, B).array();
            z_bar -= s * J_bar * Jz;
            Z_bar.middleCols(k * B, B) = (J_bar * c - 2.0 * lap_bar * s * Jz).matrix();
        }
        Z_bar.rightCols(B) = (lap_bar * c).matrix();
        Z_bar.leftCols(B) = z_bar.matrix();
        auto& g = grad.layers[static_cast<std::size_t>(l)];
        g.weight.noalias() += om * (Z_bar * cache.input.transpose());
        g.bias.noalias() += om * Z_bar.leftCols(B).rowwise().sum();
        if (l > 0) S_bar = om * (L.weight.transpose() * Z_bar);
    }
}

inline void require_points(const SineMlpParams& p, const Eigen::Ref<const Points>& x) {
    if (x.rows() != p.arch.input_dim)
        throw InvalidArgument("point dimension " + std::to_string(x.rows()) + " does not match network input_dim " +
                              std::to_string(p.arch.input_dim));
}

/// Fixed-size chunking so results never depend on the number of workers.
inline constexpr Eigen::Index kChunk = 256;

template <class Fn>
void for_each_chunk(Eigen::Index total, int workers, Fn&& fn) {
    const Eigen::Index chunks = (total + kChunk - 1) / kChunk;
    auto run = [&](int w, int stride) {
        for (Eigen::Index c = w; c < chunks; c += stride) fn(c, c * kChunk, std::min(kChunk, total - c * kChunk));
    };
    if (workers <= 1 || chunks <= 1) {
        run(0, 1);
        return;
    }
    const int nw = static_cast<int>(std::min<Eigen::Index>(workers, chunks));
    std::vector<std::jthread> pool;
    for (int w = 0; w < nw; ++w) pool.emplace_back(run, w, nw);
}

}  // namespace detail

/// Network values only (no derivatives) at each column of x.
inline RowVec forward_values(const SineMlpParams& p, const Eigen::Ref<const Points>& x, int workers = 1) {
    detail::require_points(p, x);
    RowVec out(x.cols());
    detail::for_each_chunk(x.cols(), workers, [&](Eigen::Index, Eigen::Index start, Eigen::Index n) {
        Mat a = x.middleCols(start, n);
        for (int l = 0; l < p.arch.hidden_layers; ++l) {
            const auto& L = p.layers()[static_cast<std::size_t>(l)];
            const double om = p.arch.omega(l);
            Mat z = (om * L.weight) * a;
            z.colwise() += om * L.bias;
            a = z.array().sin().matrix();
        }
        const auto& o = p.layers().back();
        RowVec u = o.weight * a;
        out.segment(start, n) = u.array() + o.bias(0);
    });
    return out;
}

inline double forward_value(const SineMlpParams& p, const Eigen::Ref<const Vec>& x) {
    return forward_values(p, x)(0);
}

inline JetBatch forward_jets(const SineMlpParams& p, const Eigen::Ref<const Points>& x, int workers = 1) {
    detail::require_points(p, x);
    JetBatch out;
    out.value.resize(x.cols());
    out.grad.resize(x.rows(), x.cols());
    out.laplacian.resize(x.cols());
    detail::for_each_chunk(x.cols(), workers, [&](Eigen::Index, Eigen::Index start, Eigen::Index n) {
        const JetBatch j = detail::jets_from(detail::forward_stack(p, x.middleCols(start, n)));
        out.value.segment(start, n) = j.value;
        out.grad.middleCols(start, n) = j.grad;
        out.laplacian.segment(start, n) = j.laplacian;
    });
    return out;
}

inline Jet2 forward_jet(const SineMlpParams& p, const Eigen::Ref<const Vec>& x) {
    if (x.size() != p.arch.input_dim)
        throw InvalidArgument("point dimension " + std::to_string(x.size()) + " does not match network input_dim " +
                              std::to_string(p.arch.input_dim));
    return forward_jets(p, x).at(0);
}

inline std::vector<Jet2> forward_jet_batch(const SineMlpParams& p, const std::vector<Vec>& xs, int workers = 1) {
    if (xs.empty()) return {};
    Points X(p.arch.input_dim, static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != p.arch.input_dim) throw InvalidArgument("point " + std::to_string(i) + " has wrong dimension");
        X.col(static_cast<Eigen::Index>(i)) = xs[i];
    }
    return forward_jets(p, X, workers).to_vector();
}

struct LossAndGrad {
    double loss = 0.0;
    LossBreakdown parts;
    /// mean_all | |grad u| - 1 |^p, reported for monitoring only.
    double eikonal_residual = 0.0;
    ParamGrad grad;
};

/// Training loss on a batch and its exact gradient with respect to every
/// parameter:
///     alpha_m  * mean_surface |u|
///   + alpha_nm * mean_domain exp(-alpha_exp |u|)
///   + alpha_e  * mean_all | |grad u| - 1 - eps lap u |^p
/// where "all" is the union of surface and domain points.
inline LossAndGrad loss_gradient(const SineMlpParams& p, const TrainBatch& batch, const LossSpec& spec,
                                 int workers = 1) {
    spec.validate();
    detail::require_points(p, batch.surface_points);
    detail::require_points(p, batch.domain_points);
    const Eigen::Index ns = batch.surface_points.cols();
    const Eigen::Index nd = batch.domain_points.cols();
    require(ns > 0 && nd > 0, "training batch needs surface and domain points");
    const auto& w = spec.weights;
    const double eps = spec.epsilon;
    const double cm = w.alpha_m / static_cast<double>(ns);
    const double cnm = w.alpha_nm / static_cast<double>(nd);
    const double ce = w.alpha_e / static_cast<double>(ns + nd);

    struct Partial {
        double manifold = 0.0, nonmanifold = 0.0, visco = 0.0, eikonal = 0.0;
        LayerSet grad;
        bool finite = true;
    };
    const Eigen::Index chunks_s = (ns + detail::kChunk - 1) / detail::kChunk;
    const Eigen::Index chunks_d = (nd + detail::kChunk - 1) / detail::kChunk;
    std::vector<Partial> partials(static_cast<std::size_t>(chunks_s + chunks_d));

    auto work = [&](Eigen::Index chunk, bool surface, const Eigen::Ref<const Points>& x) {
        auto& part = partials[static_cast<std::size_t>(surface ? chunk : chunks_s + chunk)];
        part.grad = LayerSet::zeros_like(p.arch);
        const auto fc = detail::forward_stack(p, x);
        const Eigen::Index B = fc.count;
        const int d = fc.dim;
        if (!fc.out.allFinite()) {
            part.finite = false;
            return;
        }
        RowVec bar = RowVec::Zero(fc.out.size());
        for (Eigen::Index i = 0; i < B; ++i) {
            const double u = fc.out(i);
            double g2 = 0.0;
            for (int k = 1; k <= d; ++k) g2 += fc.out(k * B + i) * fc.out(k * B + i);
            const double gn = std::sqrt(g2);
            const double lap = fc.out((d + 1) * B + i);
            const double r = gn - 1.0 - eps * lap;
            part.visco += pointwise::power_abs(r, w.p);
            part.eikonal += pointwise::power_abs(gn - 1.0, w.p);
            const double dr = ce * pointwise::power_abs_derivative(r, w.p);
            if (gn > 0.0)
                for (int k = 1; k <= d; ++k) bar(k * B + i) = dr * fc.out(k * B + i) / gn;
            bar((d + 1) * B + i) = -eps * dr;
            if (surface) {
                part.manifold += std::abs(u);
                bar(i) = cm * sign_of(u);
            } else {
                part.nonmanifold += pointwise::offsurface(u, w.alpha_exp);
                bar(i) = cnm * pointwise::offsurface_derivative(u, w.alpha_exp);
            }
        }
        detail::backward_stack(p, fc, bar, part.grad);
    };

    // Surface and domain chunks are independent work items; distribute them together.
    const Eigen::Index total_chunks = chunks_s + chunks_d;
    auto run = [&](int wid, int stride) {
        for (Eigen::Index c = wid; c < total_chunks; c += stride) {
            if (c < chunks_s) {
                const Eigen::Index start = c * detail::kChunk;
                work(c, true, batch.surface_points.middleCols(start, std::min(detail::kChunk, ns - start)));
            } else {
                const Eigen::Index cd = c - chunks_s;
                const Eigen::Index start = cd * detail::kChunk;
                work(cd, false, batch.domain_points.middleCols(start, std::min(detail::kChunk, nd - start)));
            }
        }
    };
    if (workers <= 1 || total_chunks <= 1) {
        run(0, 1);
    } else {
        const int nw = static_cast<int>(std::min<Eigen::Index>(workers, total_chunks));
        std::vector<std::jthread> pool;
        for (int t = 0; t < nw; ++t) pool.emplace_back(run, t, nw);
    }

    LossAndGrad res;
    res.grad = LayerSet::zeros_like(p.arch);
    double sm = 0.0, snm = 0.0, sv = 0.0, se = 0.0;
    for (const auto& part : partials) {
        if (!part.finite) throw NonFiniteError("network output is not finite on the training batch");
        sm += part.manifold;
        snm += part.nonmanifold;
        sv += part.visco;
        se += part.eikonal;
        res.grad += part.grad;
    }
    res.parts = total_loss(w, sm / static_cast<double>(ns), snm / static_cast<double>(nd),
                           sv / static_cast<double>(ns + nd), eps);
    res.loss = res.parts.total;
    res.eikonal_residual = se / static_cast<double>(ns + nd);
    if (!std::isfinite(res.loss)) throw NonFiniteError("training loss is not finite");
    if (!res.grad.all_finite()) throw NonFiniteError("parameter gradient is not finite");
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint files
//
//   viscoreg-checkpoint 1
//   arch <input_dim> <hidden_layers> <width> <omega0> <omega_hidden>
//   layer <index> <rows> <cols>
//   <rows lines of cols weights, row-major>
//   <one line of rows biases>
//   ... one block per layer, output layer last
//
// Reals are printed with 17 significant digits, which round-trips doubles.

inline constexpr const char* kCheckpointMagic = "viscoreg-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& os, const SineMlpParams& p) {
    p.validate();
    os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    os << std::setprecision(17);
    os << "arch " << p.arch.input_dim << ' ' << p.arch.hidden_layers << ' ' << p.arch.width << ' ' << p.arch.omega0
       << ' ' << p.arch.omega_hidden << '\n';
    for (std::size_t l = 0; l < p.layers().size(); ++l) {
        const auto& L = p.layers()[l];
        os << "layer " << l << ' ' << L.weight.rows() << ' ' << L.weight.cols() << '\n';
        for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < L.weight.cols(); ++c) os << (c ? " " : "") << L.weight(r, c);
            os << '\n';
        }
        for (Eigen::Index r = 0; r < L.bias.size(); ++r) os << (r ? " " : "") << L.bias(r);
        os << '\n';
    }
}

inline SineMlpParams read_checkpoint(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kCheckpointMagic)
        throw IoError("not a viscoreg checkpoint (bad magic)");
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
    std::string tag;
    SineMlpParams p;
    if (!(is >> tag) || tag != "arch" ||
        !(is >> p.arch.input_dim >> p.arch.hidden_layers >> p.arch.width >> p.arch.omega0 >> p.arch.omega_hidden))
        throw IoError("checkpoint architecture header is malformed");
    try {
        p.arch.validate();
    } catch (const InvalidArgument& e) {
        throw IoError(std::string("checkpoint architecture invalid: ") + e.what());
    }
    p.net = LayerSet::zeros_like(p.arch);
    for (int l = 0; l < p.arch.layer_count(); ++l) {
        int idx = -1;
        Eigen::Index rows = 0, cols = 0;
        if (!(is >> tag >> idx >> rows >> cols) || tag != "layer" || idx != l)
            throw IoError("checkpoint layer header " + std::to_string(l) + " is malformed");
        auto& L = p.layers()[static_cast<std::size_t>(l)];
        if (rows != L.weight.rows() || cols != L.weight.cols())
            throw IoError("checkpoint layer " + std::to_string(l) + " has the wrong shape");
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                if (!(is >> L.weight(r, c))) throw IoError("checkpoint layer " + std::to_string(l) + " is truncated");
        for (Eigen::Index r = 0; r < rows; ++r)
            if (!(is >> L.bias(r))) throw IoError("checkpoint layer " + std::to_string(l) + " bias is truncated");
    }
    if (!p.net.all_finite()) throw IoError("checkpoint contains non-finite parameters");
    return p;
}

inline void save_checkpoint(const std::string& path, const SineMlpParams& p) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write checkpoint " + path);
    write_checkpoint(os, p);
    if (!os) throw IoError("failed writing checkpoint " + path);
}

inline SineMlpParams load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open checkpoint " + path);
    return read_checkpoint(is);
}

}  // namespace viscoreg
