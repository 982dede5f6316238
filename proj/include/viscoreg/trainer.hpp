#pragma once

#include <chrono>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "viscoreg/config.hpp"
#include "viscoreg/field_net.hpp"
#include "viscoreg/sampler_io.hpp"

namespace viscoreg {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;

    void validate() const {
        require(beta1 > 0.0 && beta1 < 1.0, "adam beta1 must lie in (0,1)");
        require(beta2 > 0.0 && beta2 < 1.0, "adam beta2 must lie in (0,1)");
        require(eps_hat > 0.0, "adam eps_hat must be positive");
    }
};

struct AdamState {
    LayerSet m;
    LayerSet v;
    long long step = 0;

    static AdamState zeros_like(const Architecture& arch) {
        return {LayerSet::zeros_like(arch), LayerSet::zeros_like(arch), 0};
    }
};

/// One bias-corrected Adam update of params in place.
inline void adam_step(AdamState& state, LayerSet& params, const LayerSet& grad, double lr, const AdamConfig& cfg = {}) {
    require(params.layers.size() == grad.layers.size() && state.m.layers.size() == grad.layers.size(),
            "adam: shapes are not congruent");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        theta.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps_hat);
    };
    for (std::size_t l = 0; l < grad.layers.size(); ++l) {
        require(params.layers[l].weight.rows() == grad.layers[l].weight.rows() &&
                    params.layers[l].weight.cols() == grad.layers[l].weight.cols(),
                "adam: shapes are not congruent");
        update(params.layers[l].weight, state.m.layers[l].weight, state.v.layers[l].weight, grad.layers[l].weight);
        update(params.layers[l].bias, state.m.layers[l].bias, state.v.layers[l].bias, grad.layers[l].bias);
    }
}

enum class InitKind { mfgi, geometric };

struct TrainConfig {
    Architecture arch{2, 2, 32, 30.0, 1.0};
    InitKind init = InitKind::mfgi;
    double sphere_scale = 1.6;
    double perturb = 0.1;

    long long iterations = 10000;
    double learning_rate = 1e-4;
    LossWeights weights;
    /// When false the plain Eikonal term is trained (epsilon forced to 0).
    bool viscous = true;
    ViscositySchedule schedule = ViscositySchedule::baseline();

    Eigen::Index n_surface = 2000;
    Eigen::Index n_domain = 2000;
    std::uint64_t seed = 0;
    long long log_every = 1;
    /// 0 means every 10% of the iterations.
    long long checkpoint_every = 0;
    AdamConfig adam;
    int workers = 1;
    /// Wall-clock milliseconds in the log; off makes logs byte-reproducible.
    bool record_wall_time = true;

    long long checkpoint_interval() const {
        return checkpoint_every > 0 ? checkpoint_every : std::max<long long>(1, iterations / 10);
    }

    double epsilon_at_iteration(long long i) const {
        if (!viscous) return 0.0;
        return schedule.at(static_cast<double>(i) / static_cast<double>(iterations));
    }

    void validate() const {
        arch.validate();
        require(iterations > 0, "iterations must be positive");
        require(learning_rate > 0.0, "learning_rate must be positive");
        weights.validate();
        adam.validate();
        require(n_surface > 0 && n_domain > 0, "batch sizes must be positive");
        require(log_every > 0, "log_every must be positive");
        require(checkpoint_every >= 0, "checkpoint_every must be nonnegative");
        require(workers >= 1, "workers must be >= 1");
        require(sphere_scale > 0.0 && perturb >= 0.0, "invalid MFGI parameters");
    }

    /// Reads every TrainConfig key present in cfg; absent keys keep the values of base.
    static TrainConfig from_config(const Config& cfg, const TrainConfig& base) {
        TrainConfig c = base;
        c.arch.input_dim = static_cast<int>(cfg.get_int("input_dim", c.arch.input_dim));
        c.arch.hidden_layers = static_cast<int>(cfg.get_int("hidden_layers", c.arch.hidden_layers));
        c.arch.width = static_cast<int>(cfg.get_int("width", c.arch.width));
        c.arch.omega0 = cfg.get_double("omega0", c.arch.omega0);
        c.arch.omega_hidden = cfg.get_double("omega_hidden", c.arch.omega_hidden);
        const std::string init = cfg.get_string("init", c.init == InitKind::mfgi ? "mfgi" : "geometric");
        if (init == "mfgi")
            c.init = InitKind::mfgi;
        else if (init == "geometric")
            c.init = InitKind::geometric;
        else
            throw InvalidArgument("config key 'init' must be mfgi or geometric");
        c.sphere_scale = cfg.get_double("sphere_scale", c.sphere_scale);
        c.perturb = cfg.get_double("perturb", c.perturb);
        c.iterations = cfg.get_int("iterations", c.iterations);
        c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
        c.weights.alpha_m = cfg.get_double("alpha_m", c.weights.alpha_m);
        c.weights.alpha_nm = cfg.get_double("alpha_nm", c.weights.alpha_nm);
        c.weights.alpha_e = cfg.get_double("alpha_e", c.weights.alpha_e);
        c.weights.alpha_exp = cfg.get_double("alpha_exp", c.weights.alpha_exp);
        c.weights.p = static_cast<int>(cfg.get_int("p", c.weights.p));
        c.viscous = cfg.get_bool("viscous", c.viscous);
        if (cfg.has("schedule")) c.schedule = ViscositySchedule::parse(cfg.get_string("schedule", ""));
        c.n_surface = cfg.get_int("n_surface", c.n_surface);
        c.n_domain = cfg.get_int("n_domain", c.n_domain);
        c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
        c.log_every = cfg.get_int("log_every", c.log_every);
        c.checkpoint_every = cfg.get_int("checkpoint_every", c.checkpoint_every);
        c.adam.beta1 = cfg.get_double("adam_beta1", c.adam.beta1);
        c.adam.beta2 = cfg.get_double("adam_beta2", c.adam.beta2);
        c.adam.eps_hat = cfg.get_double("adam_eps", c.adam.eps_hat);
        c.workers = static_cast<int>(cfg.get_int("workers", c.workers));
        c.record_wall_time = cfg.get_bool("record_wall_time", c.record_wall_time);
        c.validate();
        return c;
    }

    std::string to_config_text() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "input_dim = " << arch.input_dim << "\nhidden_layers = " << arch.hidden_layers << "\nwidth = " << arch.width
           << "\nomega0 = " << arch.omega0 << "\nomega_hidden = " << arch.omega_hidden
           << "\ninit = " << (init == InitKind::mfgi ? "mfgi" : "geometric") << "\nsphere_scale = " << sphere_scale
           << "\nperturb = " << perturb << "\niterations = " << iterations << "\nlearning_rate = " << learning_rate
           << "\nalpha_m = " << weights.alpha_m << "\nalpha_nm = " << weights.alpha_nm << "\nalpha_e = " << weights.alpha_e
           << "\nalpha_exp = " << weights.alpha_exp << "\np = " << weights.p << "\nviscous = " << (viscous ? "true" : "false")
           << "\nschedule = " << schedule.to_string() << "\nn_surface = " << n_surface << "\nn_domain = " << n_domain
           << "\nseed = " << seed << "\nlog_every = " << log_every << "\ncheckpoint_every = " << checkpoint_every
           << "\nadam_beta1 = " << adam.beta1 << "\nadam_beta2 = " << adam.beta2 << "\nadam_eps = " << adam.eps_hat
           << "\nworkers = " << workers << "\nrecord_wall_time = " << (record_wall_time ? "true" : "false") << '\n';
        return os.str();
    }
};

struct TrainRecord {
    long long iter = 0;
    double epsilon = 0.0;
    LossBreakdown parts;
    /// Plain Eikonal residual mean | |grad u| - 1 |^p on the same batch.
    double eikonal_residual = 0.0;
    double grad_norm = 0.0;
    double ms = 0.0;
};

struct TrainLog {
    std::vector<TrainRecord> records;

    static constexpr const char* kCsvHeader = "iter,eps,L_m,L_nm,L_veik,total,grad_norm,ms";

    void write_csv(std::ostream& os) const {
        os << kCsvHeader << '\n' << std::setprecision(17);
        for (const auto& r : records)
            os << r.iter << ',' << r.epsilon << ',' << r.parts.manifold << ',' << r.parts.nonmanifold << ','
               << r.parts.eikonal_or_visco << ',' << r.parts.total << ',' << r.grad_norm << ',' << r.ms << '\n';
    }
};

/// Raised when the loss or the parameters stop being finite.
class TrainingAborted : public NonFiniteError {
public:
    TrainingAborted(long long iteration, double epsilon, const std::string& term)
        : NonFiniteError("training aborted at iteration " + std::to_string(iteration) + " (eps=" +
                         std::to_string(epsilon) + "): " + term),
          iteration(iteration),
          epsilon(epsilon),
          term(term) {}

    long long iteration;
    double epsilon;
    std::string term;
};

inline SineMlpParams initial_params(const TrainConfig& cfg) {
    return cfg.init == InitKind::mfgi ? init_mfgi(cfg.arch, cfg.seed, cfg.sphere_scale, cfg.perturb)
                                      : init_geometric(cfg.arch, cfg.seed);
}

struct TrainResult {
    SineMlpParams params;
    TrainLog log;
};

/// Called with (iteration, params) at iteration 0, every checkpoint interval, and at the end.
using CheckpointFn = std::function<void(long long, const SineMlpParams&)>;

/// Runs exactly cfg.iterations Adam steps; iteration i trains with
/// epsilon = schedule(i / iterations).
inline TrainResult train(const TrainConfig& cfg, const PointCloud& cloud, const CheckpointFn& on_checkpoint = {}) {
    cfg.validate();
    require(cloud.dim == cfg.arch.input_dim, "cloud dimension does not match network input_dim");
    TrainResult res{initial_params(cfg), {}};
    AdamState adam = AdamState::zeros_like(cfg.arch);
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL);
    const auto t0 = std::chrono::steady_clock::now();
    const long long every = cfg.checkpoint_interval();
    if (on_checkpoint) on_checkpoint(0, res.params);

    LossSpec spec{cfg.weights, 0.0};
    for (long long i = 0; i < cfg.iterations; ++i) {
        spec.epsilon = cfg.epsilon_at_iteration(i);
        const TrainBatch batch = sample_batch(cloud, rng, cfg.n_surface, cfg.n_domain);
        LossAndGrad lg;
        try {
            lg = loss_gradient(res.params, batch, spec, cfg.workers);
        } catch (const NonFiniteError& e) {
            throw TrainingAborted(i, spec.epsilon, e.what());
        }
        const double gnorm = std::sqrt(lg.grad.squared_norm());
        adam_step(adam, res.params.net, lg.grad, cfg.learning_rate, cfg.adam);
        if (!res.params.net.all_finite()) throw TrainingAborted(i, spec.epsilon, "parameters after Adam update");
        if (i % cfg.log_every == 0 || i + 1 == cfg.iterations) {
            TrainRecord r;
            r.iter = i;
            r.epsilon = spec.epsilon;
            r.parts = lg.parts;
            r.eikonal_residual = lg.eikonal_residual;
            r.grad_norm = gnorm;
            if (cfg.record_wall_time)
                r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            res.log.records.push_back(r);
        }
        if (on_checkpoint && ((i + 1) % every == 0 || i + 1 == cfg.iterations)) on_checkpoint(i + 1, res.params);
    }
    return res;
}

}  // namespace viscoreg
