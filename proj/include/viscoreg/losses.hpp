#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "viscoreg/jet.hpp"

namespace viscoreg {

struct LossWeights {
    double alpha_m = 3000.0;
    double alpha_nm = 100.0;
    /// Weight of the Eikonal term, or of the viscous Eikonal term when viscosity is on.
    double alpha_e = 50.0;
    /// Sharpness of the off-surface penalty exp(-alpha_exp |u|).
    double alpha_exp = 100.0;
    int p = 1;

    void validate() const {
        require(alpha_m >= 0.0 && alpha_nm >= 0.0 && alpha_e >= 0.0, "loss weights must be nonnegative");
        require(alpha_m > 0.0 || alpha_nm > 0.0 || alpha_e > 0.0, "at least one loss weight must be positive");
        require(alpha_exp > 0.0, "alpha_exp must be positive");
        require(p == 1 || p == 2, "p must be 1 or 2");
    }
};

/// Piecewise-linear decay curve epsilon(progress), progress in [0, 1].
class ViscositySchedule {
public:
    using Breakpoint = std::pair<double, double>;

    ViscositySchedule() : points_{{0.0, 0.0}} {}

    explicit ViscositySchedule(std::vector<Breakpoint> points) : points_(std::move(points)) { validate(); }

    /// Parses "0:1, 0.2:0.8, 0.4:0.08, 0.6:0.01, 0.8:0".
    static ViscositySchedule parse(const std::string& text) {
        std::vector<Breakpoint> pts;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) {
                if (item.find_first_not_of(" \t") == std::string::npos) continue;
                throw InvalidArgument("schedule entry '" + item + "' is not progress:epsilon");
            }
            try {
                std::size_t used = 0;
                const std::string a = item.substr(0, colon);
                const std::string b = item.substr(colon + 1);
                const double prog = std::stod(a, &used);
                if (a.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(a);
                const double eps = std::stod(b, &used);
                if (b.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(b);
                pts.emplace_back(prog, eps);
            } catch (const std::logic_error&) {
                throw InvalidArgument("schedule entry '" + item + "' is not numeric");
            }
        }
        return ViscositySchedule(std::move(pts));
    }

    /// Initial 1, then 0.8/0.08/0.01/0 at 20/40/60/80% of training.
    static ViscositySchedule baseline() {
        return ViscositySchedule({{0.0, 1.0}, {0.2, 0.8}, {0.4, 0.08}, {0.6, 0.01}, {0.8, 0.0}});
    }

    static ViscositySchedule zero() { return ViscositySchedule(); }

    /// Every epsilon multiplied by factor.
    ViscositySchedule scaled(double factor) const {
        require(factor >= 0.0, "schedule scale must be nonnegative");
        auto pts = points_;
        for (auto& [p, e] : pts) e *= factor;
        return ViscositySchedule(std::move(pts));
    }

    /// Breakpoint progress values multiplied by factor, so the decay ends at factor * last.
    ViscositySchedule time_compressed(double factor) const {
        require(factor > 0.0 && factor * points_.back().first <= 1.0, "compressed schedule leaves [0,1]");
        auto pts = points_;
        for (auto& [p, e] : pts) p *= factor;
        return ViscositySchedule(std::move(pts));
    }

    double at(double progress) const {
        require(progress >= 0.0 && progress <= 1.0, "schedule progress outside [0,1]");
        if (progress >= points_.back().first) return 0.0;
        const auto hi = std::upper_bound(points_.begin(), points_.end(), progress,
                                         [](double x, const Breakpoint& b) { return x < b.first; });
        const auto lo = hi - 1;
        const double t = (progress - lo->first) / (hi->first - lo->first);
        return std::max(0.0, lo->second + t * (hi->second - lo->second));
    }

    double max_epsilon() const {
        double m = 0.0;
        for (const auto& [p, e] : points_) m = std::max(m, e);
        return m;
    }

    bool is_zero() const { return max_epsilon() == 0.0; }

    const std::vector<Breakpoint>& breakpoints() const { return points_; }

    std::string to_string() const {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (i) os << ", ";
            os << points_[i].first << ':' << points_[i].second;
        }
        return os.str();
    }

    bool operator==(const ViscositySchedule&) const = default;

private:
    void validate() const {
        require(!points_.empty(), "schedule needs at least one breakpoint");
        require(points_.front().first == 0.0, "schedule must start at progress 0");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            require(std::isfinite(points_[i].first) && std::isfinite(points_[i].second), "schedule values must be finite");
            require(points_[i].first >= 0.0 && points_[i].first <= 1.0, "schedule progress outside [0,1]");
            require(points_[i].second >= 0.0, "schedule epsilon must be nonnegative");
            if (i) require(points_[i].first > points_[i - 1].first, "schedule progress must be strictly increasing");
        }
        require(points_.back().second == 0.0, "schedule must end at epsilon 0");
    }

    std::vector<Breakpoint> points_;
};

inline double epsilon_at(const ViscositySchedule& schedule, double progress) { return schedule.at(progress); }

struct LossBreakdown {
    double manifold = 0.0;
    double nonmanifold = 0.0;
    double eikonal_or_visco = 0.0;
    double total = 0.0;
    double epsilon_used = 0.0;
};

namespace pointwise {

/// Residual of the viscous Eikonal equation: |grad| - 1 - eps * laplacian.
inline double visco_residual(const Eigen::Ref<const Vec>& grad, double laplacian, double epsilon) {
    return grad.norm() - 1.0 - epsilon * laplacian;
}

inline double power_abs(double r, int p) { return p == 1 ? std::abs(r) : r * r; }

/// d|r|^p / dr, with the subgradient 0 at r = 0 for p = 1.
inline double power_abs_derivative(double r, int p) { return p == 1 ? sign_of(r) : 2.0 * r; }

inline double offsurface(double u, double alpha) { return std::exp(-alpha * std::abs(u)); }

inline double offsurface_derivative(double u, double alpha) {
    return -alpha * sign_of(u) * std::exp(-alpha * std::abs(u));
}

}  // namespace pointwise

namespace detail {
inline void require_nonempty(std::size_t n) {
    if (n == 0) throw InvalidArgument("loss over an empty batch");
}
}  // namespace detail

inline double manifold_loss(const std::vector<Jet2>& surface_jets) {
    detail::require_nonempty(surface_jets.size());
    double s = 0.0;
    for (const auto& j : surface_jets) s += std::abs(j.value);
    return s / static_cast<double>(surface_jets.size());
}

inline double nonmanifold_loss(const std::vector<double>& offsurface_values, double alpha_exp) {
    detail::require_nonempty(offsurface_values.size());
    require(alpha_exp > 0.0, "alpha_exp must be positive");
    double s = 0.0;
    for (double u : offsurface_values) s += pointwise::offsurface(u, alpha_exp);
    return s / static_cast<double>(offsurface_values.size());
}

inline double viscoreg_loss(const std::vector<Jet2>& jets, double epsilon, int p) {
    detail::require_nonempty(jets.size());
    require(epsilon >= 0.0, "epsilon must be nonnegative");
    require(p == 1 || p == 2, "p must be 1 or 2");
    double s = 0.0;
    for (const auto& j : jets) s += pointwise::power_abs(pointwise::visco_residual(j.grad, j.laplacian, epsilon), p);
    return s / static_cast<double>(jets.size());
}

inline double eikonal_loss(const std::vector<Jet2>& jets, int p) { return viscoreg_loss(jets, 0.0, p); }

/// Parts are (manifold, nonmanifold, eikonal-or-viscous) losses on one batch.
inline LossBreakdown total_loss(const LossWeights& w, double manifold, double nonmanifold, double eikonal_or_visco,
                                double epsilon_used = 0.0) {
    LossBreakdown b;
    b.manifold = manifold;
    b.nonmanifold = nonmanifold;
    b.eikonal_or_visco = eikonal_or_visco;
    b.total = w.alpha_m * manifold + w.alpha_nm * nonmanifold + w.alpha_e * eikonal_or_visco;
    b.epsilon_used = epsilon_used;
    return b;
}

/// Everything needed to turn jets on a training batch into one scalar loss.
struct LossSpec {
    LossWeights weights;
    double epsilon = 0.0;

    void validate() const {
        weights.validate();
        require(epsilon >= 0.0 && std::isfinite(epsilon), "epsilon must be finite and nonnegative");
    }
};

}  // namespace viscoreg
