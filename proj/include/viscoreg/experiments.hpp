#pragma once

// End-to-end runs shared by the command-line tool and the acceptance suite:
// synthesize a shape, train, extract the zero level set, and score it.

#include <algorithm>
#include <string>
#include <vector>

#include "viscoreg/eikonal_oracle.hpp"
#include "viscoreg/trainer.hpp"

namespace viscoreg {

struct ReconstructionSetup {
    ShapeSpec shape;
    Eigen::Index n_points = 2000;
    std::uint64_t data_seed = 7;
    TrainConfig train;
    double box_scale = 1.1;
    Eigen::Index resolution = 256;
    /// Points drawn from the extracted surface and from the reference surface.
    Eigen::Index eval_samples = 30000;
    /// Keep every checkpoint produced during training in memory.
    bool keep_checkpoints = false;
    /// Precomputed reference samples (working coordinates); empty means draw them.
    Points reference;
};

struct ReconstructionResult {
    PointCloud cloud;
    SyntheticShape shape;
    TrainResult trained;
    std::vector<std::pair<long long, SineMlpParams>> checkpoints;
    SurfaceMesh mesh;
    Points reference;
    MetricsReport metrics;
    /// Empty surfaces cannot be scored; metrics are then +inf.
    bool empty_surface = false;
};

/// Dense samples of the true surface in working coordinates.
inline Points reference_surface(const SyntheticShape& shape, Eigen::Index n, std::uint64_t seed) {
    auto [raw, unused] = synth_shape(shape.spec, n, seed);
    Points out(raw.dim, raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) out.col(i) = shape.transform.apply(raw.points.col(i));
    return out;
}

/// The training cloud in working coordinates together with the shape mapped
/// into the same frame.
inline std::pair<PointCloud, SyntheticShape> prepare_shape(const ShapeSpec& spec, Eigen::Index n_points, std::uint64_t seed,
                                                          double box_scale) {
    auto [raw, shape] = synth_shape(spec, n_points, seed);
    PointCloud cloud = normalize(raw, box_scale);
    return {cloud, shape.with_transform(cloud.source_transform)};
}

/// The reference run_reconstruction would draw for this setup.
inline Points reference_for(const ReconstructionSetup& setup) {
    const auto prepared = prepare_shape(setup.shape, setup.n_points, setup.data_seed, setup.box_scale);
    return reference_surface(prepared.second, setup.eval_samples, setup.data_seed + 1000003);
}

inline MetricsReport score_surface(const SurfaceMesh& mesh, const Points& reference, Eigen::Index samples,
                                   std::uint64_t seed, int workers = 1) {
    if (mesh.empty()) {
        MetricsReport r;
        r.chamfer = r.hausdorff = r.squared_chamfer = std::numeric_limits<double>::infinity();
        return r;
    }
    return distance_metrics(sample_mesh_surface(mesh, samples, seed), reference, workers);
}

inline ReconstructionResult run_reconstruction(const ReconstructionSetup& setup, const CheckpointFn& extra = {}) {
    ReconstructionResult res;
    std::tie(res.cloud, res.shape) = prepare_shape(setup.shape, setup.n_points, setup.data_seed, setup.box_scale);
    TrainConfig cfg = setup.train;
    cfg.arch.input_dim = setup.shape.dim();
    auto on_ckpt = [&](long long it, const SineMlpParams& p) {
        if (setup.keep_checkpoints) res.checkpoints.emplace_back(it, p);
        if (extra) extra(it, p);
    };
    res.trained = train(cfg, res.cloud, on_ckpt);
    const GridField grid = eval_grid(res.trained.params, res.cloud.bbox, setup.resolution, cfg.workers);
    res.mesh = march(grid, 0.0);
    res.empty_surface = res.mesh.empty();
    res.reference = setup.reference.cols() > 0 ? setup.reference
                                               : reference_surface(res.shape, setup.eval_samples, setup.data_seed + 1000003);
    res.metrics = score_surface(res.mesh, res.reference, setup.eval_samples, setup.data_seed + 2000003, cfg.workers);
    return res;
}

/// Iterations whose logged visco/Eikonal term exceeds factor times the run's
/// median, ignoring the first skip_fraction of the run.
inline std::vector<long long> residual_spikes(const TrainLog& log, double factor = 10.0, double skip_fraction = 0.1,
                                              bool plain_eikonal = false) {
    std::vector<double> vals;
    for (const auto& r : log.records) vals.push_back(plain_eikonal ? r.eikonal_residual : r.parts.eikonal_or_visco);
    std::vector<long long> spikes;
    if (vals.empty()) return spikes;
    std::vector<double> sorted = vals;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const long long last = log.records.back().iter;
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (static_cast<double>(log.records[i].iter) >= skip_fraction * static_cast<double>(last) &&
            vals[i] > factor * median)
            spikes.push_back(log.records[i].iter);
    return spikes;
}

struct NamedSchedule {
    std::string label;
    bool viscous = true;
    ViscositySchedule schedule;
};

/// Baseline, doubled, halved, fast decay (compressed to end at 20% of
/// training), slow decay (ending at 90%), and the plain Eikonal row.
inline std::vector<NamedSchedule> ablation_schedules() {
    const auto base = ViscositySchedule::baseline();
    return {{"baseline", true, base},
            {"eps_x2", true, base.scaled(2.0)},
            {"eps_x0.5", true, base.scaled(0.5)},
            {"fast_decay", true, base.time_compressed(0.2 / 0.8)},
            {"slow_decay", true, base.time_compressed(0.9 / 0.8)},
            {"eps0_plain_eikonal", false, ViscositySchedule::zero()}};
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace viscoreg
