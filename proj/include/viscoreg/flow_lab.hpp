#pragma once

// Gradient-flow experiments on the periodic square [0, 2pi)^2 with integer
// wavevectors. A field is stored as its periodic part v; the represented
// function is u(x) = ramp . x + v(x), so linear ramps need no windowing.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <vector>

#include "viscoreg/extract.hpp"
#include "viscoreg/metrics.hpp"

namespace viscoreg {

using Complex = std::complex<double>;
using SpectrumMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;

struct FlowState {
    GridField field;
    Eigen::Vector2d ramp = Eigen::Vector2d::Zero();
    double time = 0.0;
    double dt = 0.0;

    Eigen::Index n() const { return field.shape[0]; }

    static FlowState zeros(Eigen::Index n) {
        require(n >= 4, "periodic grid needs at least 4 nodes per axis");
        FlowState s;
        s.field = GridField::zeros(Vec::Zero(2), 2.0 * M_PI / static_cast<double>(n), {n, n});
        return s;
    }

    double at(Eigen::Index i, Eigen::Index j) const { return field.values[static_cast<std::size_t>(i * n() + j)]; }
    double& at(Eigen::Index i, Eigen::Index j) { return field.values[static_cast<std::size_t>(i * n() + j)]; }

    /// Largest |ramp . x + v| over the nodes.
    double max_abs() const {
        double m = 0.0;
        const Eigen::Index N = n();
        for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index j = 0; j < N; ++j)
                m = std::max(m, std::abs(ramp(0) * static_cast<double>(i) * field.h +
                                         ramp(1) * static_cast<double>(j) * field.h + at(i, j)));
        return m;
    }

    double mean() const {
        double s = 0.0;
        for (double v : field.values) s += v;
        return s / static_cast<double>(field.values.size());
    }

    void validate() const {
        field.validate();
        require(field.dim == 2 && field.shape[0] == field.shape[1], "flow fields live on square 2D grids");
        require(std::abs(field.h * static_cast<double>(n()) - 2.0 * M_PI) < 1e-12 && field.origin.isZero(),
                "flow grid must be the periodic square [0, 2pi)^2");
    }
};

struct ModeSpec {
    int w1 = 1;
    int w2 = 0;
    int kappa_e = 1;
    double epsilon = 0.0;

    double norm2() const { return static_cast<double>(w1) * w1 + static_cast<double>(w2) * w2; }

    void validate() const {
        require(kappa_e == 1 || kappa_e == -1, "kappa_e must be +1 or -1");
        require(epsilon >= 0.0 && std::isfinite(epsilon), "epsilon must be nonnegative");
    }
};

/// Fourier growth exponent of the linearized flows about u = x1:
///   p = 1:  kappa_e w1^2 - kappa_e eps^2 |w|^4
///   p = 2:  -w1^2 - eps^2 |w|^4 + i w1^3
inline Complex linear_growth_exponent(const ModeSpec& m, int p) {
    m.validate();
    require(p == 1 || p == 2, "p must be 1 or 2");
    const double w1sq = static_cast<double>(m.w1) * m.w1;
    const double w4 = m.norm2() * m.norm2();
    const double e2 = m.epsilon * m.epsilon;
    if (p == 1) return {m.kappa_e * w1sq - m.kappa_e * e2 * w4, 0.0};
    return {-w1sq - e2 * w4, static_cast<double>(m.w1) * w1sq};
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// In-place complex 2D transform pair on an n x n buffer.
class Fft2 {
public:
    explicit Fft2(Eigen::Index n) : n_(n) {
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n * n)));
        if (!buf_) throw Error("fftw_malloc failed");
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fwd_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;
    ~Fft2() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }

    /// Normalized coefficients c_k with v(x) = sum_k c_k exp(i k . x).
    SpectrumMat forward(const std::vector<double>& v) {
        for (Eigen::Index i = 0; i < n_ * n_; ++i) {
            buf_[i][0] = v[static_cast<std::size_t>(i)];
            buf_[i][1] = 0.0;
        }
        fftw_execute(fwd_);
        SpectrumMat c(n_, n_);
        const double s = 1.0 / static_cast<double>(n_ * n_);
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j < n_; ++j) c(i, j) = Complex(buf_[i * n_ + j][0], buf_[i * n_ + j][1]) * s;
        return c;
    }

    /// Real part of the synthesis sum.
    std::vector<double> inverse(const SpectrumMat& c) {
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j < n_; ++j) {
                buf_[i * n_ + j][0] = c(i, j).real();
                buf_[i * n_ + j][1] = c(i, j).imag();
            }
        fftw_execute(bwd_);
        std::vector<double> v(static_cast<std::size_t>(n_ * n_));
        for (Eigen::Index i = 0; i < n_ * n_; ++i) v[static_cast<std::size_t>(i)] = buf_[i][0];
        return v;
    }

private:
    Eigen::Index n_;
    fftw_complex* buf_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

}  // namespace detail

/// Signed integer frequency of FFT index i on an n-point axis.
inline int wavenumber(Eigen::Index i, Eigen::Index n) { return static_cast<int>(i < (n + 1) / 2 ? i : i - n); }

inline Eigen::Index fft_index(int k, Eigen::Index n) { return k >= 0 ? k : n + k; }

inline SpectrumMat spectrum(const FlowState& s) {
    detail::Fft2 fft(s.n());
    return fft.forward(s.field.values);
}

/// Modes with lo < |w| <= hi.
struct Band {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double r) const { return r > lo && r <= hi; }
};

/// Three shells: low (0, n/8], mid (n/8, n/4], high above half-Nyquist n/4.
inline std::vector<Band> default_bands(Eigen::Index n) {
    const double N = static_cast<double>(n);
    return {{0.0, N / 8.0}, {N / 8.0, N / 4.0}, {N / 4.0, N}};
}

inline std::vector<double> band_energies(const SpectrumMat& c, const std::vector<Band>& bands) {
    const Eigen::Index n = c.rows();
    std::vector<double> e(bands.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double r = std::hypot(wavenumber(i, n), wavenumber(j, n));
            for (std::size_t b = 0; b < bands.size(); ++b)
                if (bands[b].contains(r)) e[b] += std::norm(c(i, j));
        }
    return e;
}

/// High-band energy: sum of |c_k|^2 over |k| > n/4.
inline double high_band_energy(const FlowState& s) {
    const auto c = spectrum(s);
    return band_energies(c, {{static_cast<double>(s.n()) / 4.0, std::numeric_limits<double>::infinity()}})[0];
}

struct FlowTrajectory {
    std::vector<Band> bands;
    std::vector<double> t;
    std::vector<double> max_abs;
    std::vector<double> high_band;
    /// energy[r][b]: energy of band b at record r.
    std::vector<std::vector<double>> energy;
    std::vector<FlowState> snapshots;
    FlowState final_state;
    bool blew_up = false;
    double blowup_time = std::numeric_limits<double>::quiet_NaN();
    double dt_used = 0.0;
    double dt_max = std::numeric_limits<double>::infinity();
    long long steps = 0;

    static constexpr const char* kBandCsvHeader = "t,band_lo,band_hi,energy";

    void write_band_csv(std::ostream& os) const {
        os << kBandCsvHeader << '\n' << std::setprecision(17);
        for (std::size_t r = 0; r < t.size(); ++r)
            for (std::size_t b = 0; b < bands.size(); ++b)
                os << t[r] << ',' << bands[b].lo << ',' << bands[b].hi << ',' << energy[r][b] << '\n';
    }

    void record(const FlowState& s, const SpectrumMat& c) {
        t.push_back(s.time);
        max_abs.push_back(s.max_abs());
        energy.push_back(band_energies(c, bands));
        high_band.push_back(band_energies(c, {{static_cast<double>(s.n()) / 4.0, std::numeric_limits<double>::infinity()}})[0]);
    }
};

inline long long step_count(double T, double dt) {
    require(T >= 0.0 && std::isfinite(T), "final time must be nonnegative");
    require(dt > 0.0, "dt must be positive");
    return T == 0.0 ? 0 : static_cast<long long>(std::ceil(T / dt - 1e-9));
}

/// Exact spectral stepping of the linearized flow: every Fourier coefficient
/// is multiplied by exp(exponent * dt) per step. dt is shrunk so that an
/// integer number of steps reaches T. Snapshots are kept every
/// snapshot_every steps (0 keeps only the endpoints).
inline FlowTrajectory simulate_linear_flow(const FlowState& init, int kappa_e, double epsilon, int p, double T, double dt,
                                           long long snapshot_every = 0) {
    init.validate();
    require(init.ramp.isZero(), "linear flow acts on periodic fields only (ramp must be zero)");
    const Eigen::Index n = init.n();
    const long long steps = step_count(T, dt);
    const double h = steps ? T / static_cast<double>(steps) : dt;
    SpectrumMat factor(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            factor(i, j) = std::exp(linear_growth_exponent({wavenumber(i, n), wavenumber(j, n), kappa_e, epsilon}, p) * h);
    detail::Fft2 fft(n);
    SpectrumMat c = fft.forward(init.field.values);
    FlowTrajectory traj;
    traj.bands = default_bands(n);
    traj.dt_used = h;
    traj.steps = steps;
    FlowState s = init;
    s.dt = h;
    traj.record(s, c);
    traj.snapshots.push_back(s);
    for (long long k = 1; k <= steps; ++k) {
        c = c.cwiseProduct(factor);
        s.time = static_cast<double>(k) * h;
        traj.t.push_back(s.time);
        traj.energy.push_back(band_energies(c, traj.bands));
        traj.high_band.push_back(
            band_energies(c, {{static_cast<double>(n) / 4.0, std::numeric_limits<double>::infinity()}})[0]);
        const bool snap = k == steps || (snapshot_every > 0 && k % snapshot_every == 0);
        if (snap) {
            s.field.values = fft.inverse(c);
            traj.snapshots.push_back(s);
        }
        traj.max_abs.push_back(snap ? s.max_abs() : std::numeric_limits<double>::quiet_NaN());
    }
    s.field.values = fft.inverse(c);
    traj.final_state = s;
    return traj;
}

// ---------------------------------------------------------------------------
// Nonlinear flows

struct EikonalFlowOptions {
    /// Gradient-norm regularization: |grad u| is evaluated as sqrt(|grad u|^2 + delta^2).
    double delta = 1e-8;
    double blowup_threshold = 1e6;
    long long record_every = 1;
    long long snapshot_every = 0;
};

/// Explicit step-size limits: dt <= c2 h^2, and dt <= c4 h^4 / eps^2 when eps > 0.
inline constexpr double kCflSecondOrder = 1.0 / 8.0;
inline constexpr double kCflFourthOrder = 1.0 / 64.0;

inline double flow_dt_max(double h, double eps_max) {
    double dt = kCflSecondOrder * h * h;
    if (eps_max > 0.0) dt = std::min(dt, kCflFourthOrder * std::pow(h, 4) / (eps_max * eps_max));
    return dt;
}

namespace detail {

inline void periodic_laplacian(const std::vector<double>& v, Eigen::Index n, double h, std::vector<double>& out) {
    const double s = 1.0 / (h * h);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index ip = (i + 1) % n, im = (i + n - 1) % n;
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::Index jp = (j + 1) % n, jm = (j + n - 1) % n;
            out[static_cast<std::size_t>(i * n + j)] =
                s * (v[static_cast<std::size_t>(ip * n + j)] + v[static_cast<std::size_t>(im * n + j)] +
                     v[static_cast<std::size_t>(i * n + jp)] + v[static_cast<std::size_t>(i * n + jm)] -
                     4.0 * v[static_cast<std::size_t>(i * n + j)]);
        }
    }
}

}  // namespace detail

/// Right-hand side of the nonlinear flow for the field u = ramp . x + v.
///   p = 1:  u_t = div(kappa grad u / |grad u|) - eps^2 lap(kappa lap u),
///           kappa = sign(1 + eps lap u - |grad u|)
///   p = 2:  u_t = div(r grad u / |grad u|) + eps lap r,
///           r = |grad u| - 1 - eps lap u
/// The p = 2 form is the exact gradient flow of (1/2) int r^2. Divergences are
/// taken of face fluxes, so the field mean is conserved.
inline std::vector<double> eikonal_flow_rhs(const FlowState& s, double eps, int p, double delta) {
    const Eigen::Index n = s.n();
    const double h = s.field.h;
    const auto& v = s.field.values;
    const auto N = static_cast<std::size_t>(n * n);
    auto id = [n](Eigen::Index i, Eigen::Index j) { return static_cast<std::size_t>(((i + n) % n) * n + (j + n) % n); };
    std::vector<double> gx(N), gy(N), lap(N), coef(N), rhs(N, 0.0), extra(N);
    detail::periodic_laplacian(v, n, h, lap);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto k = id(i, j);
            gx[k] = (v[id(i + 1, j)] - v[id(i - 1, j)]) / (2.0 * h) + s.ramp(0);
            gy[k] = (v[id(i, j + 1)] - v[id(i, j - 1)]) / (2.0 * h) + s.ramp(1);
            const double gn = std::sqrt(gx[k] * gx[k] + gy[k] * gy[k] + delta * delta);
            coef[k] = p == 1 ? sign_of(1.0 + eps * lap[k] - gn) : gn - 1.0 - eps * lap[k];
        }
    // Face fluxes: fx[i,j] sits between (i,j) and (i+1,j); fy[i,j] between (i,j) and (i,j+1).
    std::vector<double> fx(N), fy(N);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto k = id(i, j);
            {
                const auto kn = id(i + 1, j);
                const double ux = (v[kn] - v[k]) / h + s.ramp(0);
                const double uy = 0.5 * (gy[k] + gy[kn]);
                fx[k] = 0.5 * (coef[k] + coef[kn]) * ux / std::sqrt(ux * ux + uy * uy + delta * delta);
            }
            {
                const auto kn = id(i, j + 1);
                const double uy = (v[kn] - v[k]) / h + s.ramp(1);
                const double ux = 0.5 * (gx[k] + gx[kn]);
                fy[k] = 0.5 * (coef[k] + coef[kn]) * uy / std::sqrt(ux * ux + uy * uy + delta * delta);
            }
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto k = id(i, j);
            rhs[k] = (fx[k] - fx[id(i - 1, j)]) / h + (fy[k] - fy[id(i, j - 1)]) / h;
        }
    if (eps > 0.0) {
        std::vector<double> inner(N);
        if (p == 1) {
            for (std::size_t k = 0; k < N; ++k) inner[k] = coef[k] * lap[k];
            detail::periodic_laplacian(inner, n, h, extra);
            for (std::size_t k = 0; k < N; ++k) rhs[k] -= eps * eps * extra[k];
        } else {
            detail::periodic_laplacian(coef, n, h, extra);
            for (std::size_t k = 0; k < N; ++k) rhs[k] += eps * extra[k];
        }
    }
    return rhs;
}

using EpsilonOfTime = std::function<double(double)>;

/// Forward-Euler integration of the nonlinear flow to time T. dt above the
/// explicit bound for the largest epsilon met is rejected before any step.
/// A run whose max |u| exceeds the blow-up threshold (or turns non-finite)
/// stops early with blew_up set.
inline FlowTrajectory simulate_eikonal_flow(const FlowState& init, const EpsilonOfTime& epsilon_of_t, int p, double T,
                                            double dt, const EikonalFlowOptions& opt = {}) {
    init.validate();
    require(p == 1 || p == 2, "p must be 1 or 2");
    require(opt.record_every >= 1, "record_every must be >= 1");
    const long long steps = step_count(T, dt);
    const double step = steps ? T / static_cast<double>(steps) : dt;
    double eps_max = 0.0;
    for (long long k = 0; k <= steps; ++k) {
        const double e = epsilon_of_t(static_cast<double>(k) * step);
        require(e >= 0.0 && std::isfinite(e), "epsilon must be nonnegative");
        eps_max = std::max(eps_max, e);
    }
    FlowTrajectory traj;
    traj.dt_max = flow_dt_max(init.field.h, eps_max);
    if (dt > traj.dt_max * (1.0 + 1e-12))
        throw InvalidArgument("dt = " + std::to_string(dt) + " exceeds the explicit stability bound " +
                              std::to_string(traj.dt_max));
    traj.bands = default_bands(init.n());
    traj.dt_used = step;
    detail::Fft2 fft(init.n());
    FlowState s = init;
    s.dt = step;
    traj.record(s, fft.forward(s.field.values));
    traj.snapshots.push_back(s);
    for (long long k = 1; k <= steps; ++k) {
        const double eps = epsilon_of_t(s.time);
        const auto rhs = eikonal_flow_rhs(s, eps, p, opt.delta);
        for (std::size_t q = 0; q < rhs.size(); ++q) s.field.values[q] += step * rhs[q];
        s.time = static_cast<double>(k) * step;
        traj.steps = k;
        const double m = s.max_abs();
        if (!std::isfinite(m) || m > opt.blowup_threshold) {
            traj.blew_up = true;
            traj.blowup_time = s.time;
            traj.t.push_back(s.time);
            traj.max_abs.push_back(std::isfinite(m) ? m : std::numeric_limits<double>::infinity());
            traj.high_band.push_back(std::numeric_limits<double>::infinity());
            traj.energy.emplace_back(traj.bands.size(), std::numeric_limits<double>::infinity());
            break;
        }
        if (k % opt.record_every == 0 || k == steps) traj.record(s, fft.forward(s.field.values));
        if (opt.snapshot_every > 0 && k % opt.snapshot_every == 0) traj.snapshots.push_back(s);
    }
    traj.final_state = s;
    return traj;
}

inline FlowTrajectory simulate_eikonal_flow(const FlowState& init, double epsilon, int p, double T, double dt,
                                            const EikonalFlowOptions& opt = {}) {
    return simulate_eikonal_flow(init, [epsilon](double) { return epsilon; }, p, T, dt, opt);
}

/// Ramp u = x1 plus amplitude * sin(w . x + phase) with w drawn from the four
/// axis wavevectors of length `freq` and a uniform random phase.
inline FlowState perturbed_ramp(Eigen::Index n, int freq, double amplitude, std::uint64_t seed) {
    FlowState s = FlowState::zeros(n);
    s.ramp = Eigen::Vector2d(1.0, 0.0);
    Rng rng(seed);
    static const int dirs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const auto pick = uniform_index(rng, 4);
    const double phase = uniform(rng, 0.0, 2.0 * M_PI);
    const double w1 = freq * dirs[pick][0], w2 = freq * dirs[pick][1];
    const double h = s.field.h;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            s.at(i, j) = amplitude * std::sin(w1 * static_cast<double>(i) * h + w2 * static_cast<double>(j) * h + phase);
    return s;
}

/// cos(w . x + phase) on an n x n periodic grid.
inline FlowState single_mode(Eigen::Index n, int w1, int w2, double amplitude = 1.0, double phase = 0.0) {
    FlowState s = FlowState::zeros(n);
    const double h = s.field.h;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            s.at(i, j) = amplitude * std::cos(w1 * static_cast<double>(i) * h + w2 * static_cast<double>(j) * h + phase);
    return s;
}

struct StabilityReport {
    std::vector<Band> bands;
    /// Least-squares slope of log amplitude (half log energy) against time, per band.
    std::vector<double> growth_rate;
    bool blew_up = false;
};

inline StabilityReport stability_report(const FlowTrajectory& traj) {
    StabilityReport r;
    r.bands = traj.bands;
    r.blew_up = traj.blew_up;
    for (std::size_t b = 0; b < traj.bands.size(); ++b) {
        std::vector<double> x, y;
        for (std::size_t k = 0; k < traj.t.size(); ++k) {
            const double e = traj.energy[k][b];
            if (e > 0.0 && std::isfinite(e)) {
                x.push_back(traj.t[k]);
                y.push_back(0.5 * std::log(e));
            }
        }
        bool spread = x.size() >= 2;
        if (spread) spread = x.front() != x.back();
        r.growth_rate.push_back(spread ? least_squares_line(x, y).first : 0.0);
    }
    return r;
}

}  // namespace viscoreg
