#pragma once

// The viscoreg command-line tool. Each subcommand maps onto library calls;
// run() returns the process exit code:
//   0 success, 2 usage or configuration error, 3 data or file error,
//   4 numeric failure (non-finite training state).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "viscoreg/experiments.hpp"
#include "viscoreg/flow_lab.hpp"

#ifndef VISCOREG_GIT_DESCRIBE
#define VISCOREG_GIT_DESCRIBE "unknown"
#endif

namespace viscoreg::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

/// Configuration problems (bad keys, bad values, refused output paths).
class UsageError : public Error {
public:
    using Error::Error;
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline fs::path output_root() {
    const char* env = std::getenv("VISCOREG_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("viscoreg_runs");
}

struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::string git_describe = VISCOREG_GIT_DESCRIBE;
    std::string output;
    std::string started;
    std::string finished;
    std::vector<std::string> argv;
    int exit_code = 0;

    /// Appends one JSON line to dir/manifest.jsonl.
    void append(const fs::path& dir) const {
        fs::create_directories(dir);
        nlohmann::json j{{"command", command}, {"config", config_path}, {"seed", seed},
                         {"git_describe", git_describe}, {"output", output}, {"started", started},
                         {"finished", finished}, {"argv", argv}, {"exit_code", exit_code}};
        std::ofstream os(dir / "manifest.jsonl", std::ios::app);
        if (!os) throw IoError("cannot append manifest in " + dir.string());
        os << j.dump() << '\n';
    }
};

/// Creates dir, refusing a non-empty existing directory unless force is set.
inline void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw UsageError("output path " + dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !force)
            throw UsageError("output directory " + dir.string() + " already exists; pass --force to reuse it");
    }
    fs::create_directories(dir);
}

inline Config load_config_or_throw(const std::string& path) {
    if (path.empty()) return {};
    if (!fs::exists(path)) throw UsageError("config file " + path + " does not exist");
    try {
        return Config::load(path);
    } catch (const ParseError& e) {
        throw UsageError(std::string("config ") + path + ": " + e.what());
    }
}

inline void reject_unused(const Config& cfg) {
    const auto extra = cfg.unused_keys();
    if (extra.empty()) return;
    std::string msg = "unknown config keys:";
    for (const auto& k : extra) msg += " " + k;
    throw UsageError(msg);
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string shape;
    std::string cloud;
    std::string out;
    long long seed = -1;
    long long iters = -1;
    long long n_points = -1;
    int workers = 0;
    bool force = false;
};

inline int cmd_train(const TrainArgs& a, RunManifest& man, std::ostream& out) {
    Config cfg = load_config_or_throw(a.config);
    const std::string shape_text = !a.shape.empty() ? a.shape : cfg.get_string("shape", "");
    const std::string cloud_path = !a.cloud.empty() ? a.cloud : cfg.get_string("cloud", "");
    if (shape_text.empty() == cloud_path.empty())
        throw UsageError("train needs exactly one of --shape or --cloud (or a config 'shape'/'cloud' key)");
    const double box_scale = cfg.get_double("box_scale", 1.1);
    const Eigen::Index n_points = a.n_points > 0 ? a.n_points : cfg.get_int("n_points", 2000);
    const Eigen::Index ref_samples = cfg.get_int("reference_samples", 30000);
    TrainConfig tc;
    tc.record_wall_time = true;
    tc = TrainConfig::from_config(cfg, tc);
    if (a.seed >= 0) tc.seed = static_cast<std::uint64_t>(a.seed);
    if (a.iters > 0) tc.iterations = a.iters;
    if (a.workers > 0) tc.workers = a.workers;
    reject_unused(cfg);

    PointCloud cloud;
    std::optional<SyntheticShape> shape;
    std::string tag;
    if (!shape_text.empty()) {
        const ShapeSpec spec = ShapeSpec::parse(shape_text);
        auto prepared = prepare_shape(spec, n_points, tc.seed + 100, box_scale);
        cloud = prepared.first;
        shape = prepared.second;
        tag = to_string(spec.kind);
    } else {
        cloud = normalize(load_point_cloud(cloud_path), box_scale);
        tag = fs::path(cloud_path).stem().string();
    }
    tc.arch.input_dim = cloud.dim;
    tc.validate();

    const fs::path dir = !a.out.empty() ? fs::path(a.out) : output_root() / ("train-" + tag + "-seed" + std::to_string(tc.seed));
    prepare_output_dir(dir, a.force);
    man.seed = tc.seed;
    man.output = dir.string();
    fs::create_directories(dir / "checkpoints");
    write_text(dir / "config.txt", tc.to_config_text() + "box_scale = " + std::to_string(box_scale) + "\n");
    {
        std::ofstream os(dir / "train_cloud.xyz");
        write_xyz(os, cloud.points);
    }
    {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "source " << (shape ? shape_text : cloud_path) << "\nscale " << cloud.source_transform.scale << "\ntranslation";
        for (Eigen::Index k = 0; k < cloud.dim; ++k) os << ' ' << cloud.source_transform.translation(k);
        os << "\nbox_scale " << box_scale << '\n';
        write_text(dir / "normalization.txt", os.str());
    }
    if (shape) {
        std::ofstream os(dir / "reference.xyz");
        write_xyz(os, reference_surface(*shape, ref_samples, tc.seed + 1000003));
    }

    auto save = [&](long long it, const SineMlpParams& p) {
        char name[64];
        std::snprintf(name, sizeof name, "ckpt_%09lld.txt", it);
        save_checkpoint((dir / "checkpoints" / name).string(), p);
    };
    TrainResult res = train(tc, cloud, save);
    save_checkpoint((dir / "final.ckpt").string(), res.params);
    {
        std::ofstream os(dir / "log.csv");
        res.log.write_csv(os);
    }
    const auto& last = res.log.records.back();
    out << "trained " << tc.iterations << " iterations; final L_m=" << last.parts.manifold
        << " L_veik=" << last.parts.eikonal_or_visco << "\noutput: " << dir.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string checkpoint;
    std::string out;
    std::string grid_out;
    long long res = 256;
    double box_scale = 1.1;
    double iso = 0.0;
    int workers = 1;
};

inline int cmd_extract(const ExtractArgs& a, RunManifest& man, std::ostream& out) {
    if (a.res < 2) throw UsageError("--res must be >= 2");
    const SineMlpParams p = load_checkpoint(a.checkpoint);
    const int d = p.arch.input_dim;
    const Box box = Box::centered_cube(d, a.box_scale);
    const GridField grid = eval_grid(p, box, a.res, a.workers);
    const SurfaceMesh mesh = march(grid, a.iso);
    fs::path dest = a.out;
    if (dest.empty()) dest = fs::path(a.checkpoint).parent_path() / (d == 3 ? "mesh.obj" : "contour.csv");
    if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
    if (dest.extension() == ".csv") {
        std::ofstream os(dest);
        if (!os) throw IoError("cannot write " + dest.string());
        write_contour_csv(os, mesh);
    } else {
        export_mesh(mesh, dest.string());
    }
    if (!a.grid_out.empty()) {
        std::ofstream os(a.grid_out);
        if (!os) throw IoError("cannot write " + a.grid_out);
        write_grid(os, grid);
    }
    man.output = dest.string();
    out << "grid " << grid.shape[0];
    for (int k = 1; k < d; ++k) out << 'x' << grid.shape[static_cast<std::size_t>(k)];
    out << ", " << mesh.vertex_count() << " vertices, " << mesh.element_count() << (d == 3 ? " triangles" : " segments")
        << "\noutput: " << dest.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string out;
    std::string label = "run";
    long long samples = 30000;
    long long seed = 0;
    int workers = 1;
};

/// Mesh files are sampled by area; point files are used as they are.
inline Points load_geometry(const std::string& path, Eigen::Index samples, std::uint64_t seed) {
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".obj") {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open " + path);
        return sample_mesh_surface(read_obj(is), samples, seed);
    }
    if (ext == ".csv") {
        // Contour CSV written by extract: consecutive rows with one id form a polyline.
        std::ifstream is(path);
        if (!is) throw IoError("cannot open " + path);
        std::string line;
        std::getline(is, line);
        if (detail::trim(line) != "x,y,segment_id") throw ParseError("contour CSV header mismatch", 1);
        SurfaceMesh m;
        m.dim = 2;
        std::vector<Eigen::Vector2d> verts;
        long prev_id = -1;
        std::size_t lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            if (detail::trim(line).empty()) continue;
            std::stringstream ss(line);
            std::string xs, ys, ids;
            if (!std::getline(ss, xs, ',') || !std::getline(ss, ys, ',') || !std::getline(ss, ids))
                throw ParseError("contour CSV row needs x,y,segment_id", lineno);
            const long id = static_cast<long>(detail::parse_real(ids, lineno));
            verts.emplace_back(detail::parse_real(xs, lineno), detail::parse_real(ys, lineno));
            const auto v = static_cast<Eigen::Index>(verts.size() - 1);
            if (id == prev_id) m.segments.push_back({v - 1, v});
            prev_id = id;
        }
        m.vertices.resize(2, static_cast<Eigen::Index>(verts.size()));
        for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
        return sample_mesh_surface(m, samples, seed);
    }
    if (ext == ".ply") {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open " + path);
        return read_ply(is).points;
    }
    return load_point_cloud(path).points;
}

inline int cmd_eval(const EvalArgs& a, RunManifest& man, std::ostream& out) {
    const Points pred = load_geometry(a.pred, a.samples, static_cast<std::uint64_t>(a.seed));
    const Points truth = load_geometry(a.truth, a.samples, static_cast<std::uint64_t>(a.seed) + 1);
    if (pred.rows() != truth.rows())
        throw IoError("dimension mismatch: " + a.pred + " is " + std::to_string(pred.rows()) + "D, " + a.truth + " is " +
                      std::to_string(truth.rows()) + "D");
    const MetricsReport r = distance_metrics(pred, truth, a.workers);
    write_metrics_table(out, {{a.label, r}});
    if (!a.out.empty()) {
        const fs::path dest(a.out);
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        std::ofstream os(dest);
        if (!os) throw IoError("cannot write " + a.out);
        os << MetricsReport::kCsvHeader << '\n';
        r.write_csv_row(os, a.label);
        man.output = a.out;
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct OracleArgs {
    std::string mode = "fmm";
    std::string fixture = "circle";
    std::string config;
    std::string out;
    double h = 0.01;
    double slowness = 1.0;
    double radius = 0.5;
    double amplitude = 0.05;
    long long draws = 10;
    long long seed = 0;
};

inline int cmd_oracle(const OracleArgs& a, RunManifest& man, std::ostream& out) {
    Config cfg = load_config_or_throw(a.config);
    const double f = cfg.get_double("slowness", a.slowness);
    const double h = cfg.get_double("h", a.h);
    const double radius = cfg.get_double("radius", a.radius);
    const double amplitude = cfg.get_double("amplitude", a.amplitude);
    const long long draws = cfg.get_int("draws", a.draws);
    reject_unused(cfg);
    if (!(f > 0.0) || !std::isfinite(f)) throw UsageError("slowness must be positive");
    if (!(h > 0.0) || h > 0.5) throw UsageError("h must lie in (0, 0.5]");
    if (a.fixture != "circle" && a.fixture != "point") throw UsageError("unknown fixture '" + a.fixture + "'");
    if (draws < 1) throw UsageError("draws must be >= 1");
    man.seed = static_cast<std::uint64_t>(a.seed);

    const GridField geo = centered_grid(2, 2.0 * radius, h);
    auto base = [&](double slow) {
        return a.fixture == "point" ? point_source_problem(geo, Vec::Zero(2), slow)
                                    : circle_problem(geo, radius, Vec::Zero(2));
    };
    std::ostringstream csv;
    bool all_pass = true;
    if (a.mode == "fmm") {
        EikonalProblem prob = base(f);
        if (a.fixture == "circle") {
            std::fill(prob.slowness.values.begin(), prob.slowness.values.end(), f);
            prob.c_f = std::max(f, 1.0 / f);
        }
        const GridField u = fmm_solve(prob);
        double err = 0.0;
        for (Eigen::Index i = 0; i < geo.count(); ++i) {
            const double r = geo.point(i).norm();
            if (a.fixture == "point" && r <= radius) err = std::max(err, std::abs(u.values[static_cast<std::size_t>(i)] - f * r));
            if (a.fixture == "circle" && r < radius)
                err = std::max(err, std::abs(u.values[static_cast<std::size_t>(i)] - f * (radius - r)));
        }
        all_pass = err <= 3.0 * h;
        csv << "fixture,h,slowness,max_error,limit_3h,pass\n"
            << std::setprecision(17) << a.fixture << ',' << h << ',' << f << ',' << err << ',' << 3.0 * h << ','
            << (all_pass ? 1 : 0) << '\n';
        out << "fmm " << a.fixture << ": max error " << err << " (limit 3h = " << 3.0 * h << ") "
            << (all_pass ? "PASS" : "FAIL") << '\n';
        if (!a.out.empty()) {
            std::ofstream os(fs::path(a.out).replace_extension(".grid"));
            write_grid(os, u);
        }
    } else if (a.mode == "lemma1" || a.mode == "lemma2") {
        Rng rng(static_cast<std::uint64_t>(a.seed));
        const EikonalProblem prob = base(1.0);
        csv << "draw," << LemmaReport::kCsvHeader << '\n';
        for (long long k = 0; k < draws; ++k) {
            LemmaReport r;
            if (a.mode == "lemma1") {
                std::vector<double> g1(prob.boundary.size(), 0.0), g2 = g1;
                for (std::size_t i = 0; i < g2.size(); ++i)
                    if (prob.boundary[i]) g2[i] = uniform(rng, -amplitude, amplitude);
                r = verify_lemma1(prob, g1, g2);
            } else {
                std::vector<double> f1(prob.slowness.values.size(), 1.0), f2 = f1;
                const double c1 = uniform(rng, 1.0, 4.0), c2 = uniform(rng, 1.0, 4.0);
                const double p1 = uniform(rng, 0.0, 2.0 * M_PI), p2 = uniform(rng, 0.0, 2.0 * M_PI);
                for (Eigen::Index i = 0; i < geo.count(); ++i) {
                    const Vec x = geo.point(i);
                    f2[static_cast<std::size_t>(i)] =
                        1.0 + amplitude * std::sin(c1 * x(0) + p1) * std::cos(c2 * x(1) + p2);
                }
                r = verify_lemma2(prob, f1, f2, 2.0 * radius);
            }
            all_pass = all_pass && r.pass;
            csv << k << ',';
            r.write_csv_row(csv);
            out << a.mode << " draw " << k << ": lhs " << r.lhs << " <= " << r.bound << " + " << r.slack << "  "
                << (r.pass ? "PASS" : "FAIL") << '\n';
        }
    } else {
        throw UsageError("unknown oracle mode '" + a.mode + "' (fmm, lemma1, lemma2)");
    }
    if (!a.out.empty()) {
        const fs::path dest(a.out);
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        write_text(dest, csv.str());
        man.output = a.out;
    }
    return all_pass ? kOk : kNumeric;
}

// ---------------------------------------------------------------------------

struct FlowArgs {
    std::string mode = "linear";
    std::string out;
    int w1 = 3;
    int w2 = 0;
    int kappa = 1;
    int p = 1;
    double eps = 0.3;
    double T = 0.1;
    double dt = 0.0;
    double amplitude = 1.0;
    long long n = 32;
    int freq = 16;
    long long seed = 0;
};

inline int cmd_flow(const FlowArgs& a, RunManifest& man, std::ostream& out) {
    if (a.p != 1 && a.p != 2) throw UsageError("--p must be 1 or 2");
    if (a.n < 4) throw UsageError("--n must be >= 4");
    man.seed = static_cast<std::uint64_t>(a.seed);
    FlowTrajectory traj;
    if (a.mode == "linear") {
        if (a.kappa != 1 && a.kappa != -1) throw UsageError("--kappa must be +1 or -1");
        if (std::max(std::abs(a.w1), std::abs(a.w2)) * 2 >= a.n) throw UsageError("mode does not fit on the grid");
        const FlowState init = single_mode(a.n, a.w1, a.w2, a.amplitude);
        const double dt = a.dt > 0.0 ? a.dt : a.T / 10.0;
        traj = simulate_linear_flow(init, a.kappa, a.eps, a.p, a.T, dt > 0.0 ? dt : 1.0);
        const auto c0 = spectrum(init), c1 = spectrum(traj.final_state);
        const auto i = fft_index(a.w1, a.n), j = fft_index(a.w2, a.n);
        const Complex lam = linear_growth_exponent({a.w1, a.w2, a.kappa, a.eps}, a.p);
        const Complex expected = std::exp(lam * a.T);
        out << std::setprecision(12) << "exponent " << lam.real() << (lam.imag() < 0 ? " - " : " + ") << std::abs(lam.imag())
            << "i\n";
        if (std::abs(c0(i, j)) > 0.0) {
            const Complex ratio = c1(i, j) / c0(i, j);
            out << "amplitude ratio " << std::abs(ratio) << " (exact " << std::abs(expected) << ")\n";
        } else {
            out << "zero field: all band energies 0\n";
        }
    } else if (a.mode == "nonlinear") {
        const FlowState init = perturbed_ramp(a.n, a.freq, a.amplitude * 1e-3, static_cast<std::uint64_t>(a.seed));
        const double dt = a.dt > 0.0 ? a.dt : flow_dt_max(init.field.h, a.eps);
        traj = simulate_eikonal_flow(init, a.eps, a.p, a.T, dt);
        out << "steps " << traj.steps << ", dt " << traj.dt_used << " (max " << traj.dt_max << ")\n"
            << "final high-band energy " << traj.high_band.back() << (traj.blew_up ? "  BLOW-UP" : "") << '\n';
    } else {
        throw UsageError("unknown flow mode '" + a.mode + "' (linear, nonlinear)");
    }
    const StabilityReport rep = stability_report(traj);
    for (std::size_t b = 0; b < rep.bands.size(); ++b)
        out << "band (" << rep.bands[b].lo << ", " << rep.bands[b].hi << "]: growth rate " << rep.growth_rate[b] << '\n';
    if (!a.out.empty()) {
        const fs::path dest(a.out);
        if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
        std::ofstream os(dest);
        if (!os) throw IoError("cannot write " + a.out);
        traj.write_band_csv(os);
        man.output = a.out;
    }
    return traj.blew_up ? kNumeric : kOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string config;
    std::string shape = "circle";
    std::string schedules;
    std::string out;
    long long seed = 0;
    long long seeds = 1;
    long long iters = -1;
    long long res = -1;
    int workers = 0;
    bool force = false;
};

inline int cmd_ablate(const AblateArgs& a, RunManifest& man, std::ostream& out) {
    Config cfg = load_config_or_throw(a.config);
    ReconstructionSetup setup;
    setup.shape = ShapeSpec::parse(cfg.get_string("shape", a.shape));
    setup.n_points = cfg.get_int("n_points", setup.n_points);
    setup.box_scale = cfg.get_double("box_scale", setup.box_scale);
    setup.resolution = a.res > 0 ? a.res : cfg.get_int("resolution", setup.resolution);
    setup.eval_samples = cfg.get_int("reference_samples", setup.eval_samples);
    TrainConfig base;
    base.record_wall_time = false;
    base = TrainConfig::from_config(cfg, base);
    reject_unused(cfg);
    if (a.iters > 0) base.iterations = a.iters;
    if (a.workers > 0) base.workers = a.workers;
    if (a.seeds < 1) throw UsageError("--seeds must be >= 1");

    std::vector<NamedSchedule> grid = ablation_schedules();
    if (!a.schedules.empty()) {
        std::vector<NamedSchedule> chosen;
        std::stringstream ss(a.schedules);
        std::string name;
        while (std::getline(ss, name, ',')) {
            name = detail::trim(name);
            const auto it = std::find_if(grid.begin(), grid.end(), [&](const NamedSchedule& s) { return s.label == name; });
            if (it == grid.end()) throw UsageError("unknown schedule '" + name + "'");
            chosen.push_back(*it);
        }
        grid = chosen;
    }

    const fs::path dir = !a.out.empty() ? fs::path(a.out)
                                        : output_root() / ("ablate-" + to_string(setup.shape.kind) + "-seed" + std::to_string(a.seed));
    prepare_output_dir(dir, a.force);
    man.seed = static_cast<std::uint64_t>(a.seed);
    man.output = dir.string();

    std::ofstream runs(dir / "runs.csv");
    runs << "schedule,seed,chamfer,hausdorff,squared_chamfer,eikonal_spikes\n" << std::setprecision(17);
    std::vector<std::pair<std::string, MetricsReport>> table;
    std::ofstream summary(dir / "ablation.csv");
    summary << "schedule,epsilon_breakpoints,median_chamfer,median_hausdorff,median_squared_chamfer\n"
            << std::setprecision(17);
    for (const auto& sched : grid) {
        std::vector<double> ch, hd, sq;
        for (long long s = 0; s < a.seeds; ++s) {
            ReconstructionSetup run = setup;
            run.train = base;
            run.train.viscous = sched.viscous;
            run.train.schedule = sched.schedule;
            run.train.seed = static_cast<std::uint64_t>(a.seed + s);
            run.data_seed = run.train.seed + 100;
            const auto res = run_reconstruction(run);
            const auto spikes = residual_spikes(res.trained.log, 10.0, 0.1, true);
            runs << sched.label << ',' << run.train.seed << ',' << res.metrics.chamfer << ',' << res.metrics.hausdorff << ','
                 << res.metrics.squared_chamfer << ',' << spikes.size() << '\n';
            std::ofstream log(dir / (sched.label + "_seed" + std::to_string(run.train.seed) + "_log.csv"));
            res.trained.log.write_csv(log);
            ch.push_back(res.metrics.chamfer);
            hd.push_back(res.metrics.hausdorff);
            sq.push_back(res.metrics.squared_chamfer);
        }
        MetricsReport m;
        m.chamfer = median(ch);
        m.hausdorff = median(hd);
        m.squared_chamfer = median(sq);
        summary << sched.label << ",\"" << (sched.viscous ? sched.schedule.to_string() : "0") << "\"," << m.chamfer << ','
                << m.hausdorff << ',' << m.squared_chamfer << '\n';
        table.emplace_back(sched.label, m);
    }
    out << "epsilon ablation on " << to_string(setup.shape.kind) << " (median over " << a.seeds << " seed(s))\n";
    write_metrics_table(out, table);
    return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Neural SDF fitting with a decaying viscosity regularizer, plus numerical oracles.", "viscoreg"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Fit a network to a point cloud or synthetic shape");
    train_cmd->add_option("--config", ta.config, "key = value run configuration");
    train_cmd->add_option("--shape", ta.shape, "synthetic shape: circle, sphere, torus, mandelbrot (with :key=value)");
    train_cmd->add_option("--cloud", ta.cloud, "input point cloud (.xyz or ASCII .ply)");
    train_cmd->add_option("--seed", ta.seed, "random seed");
    train_cmd->add_option("--iters", ta.iters, "training iterations");
    train_cmd->add_option("--n-points", ta.n_points, "points sampled on a synthetic shape");
    train_cmd->add_option("--workers", ta.workers, "worker threads for batch evaluation");
    train_cmd->add_option("--out", ta.out, "output directory");
    train_cmd->add_flag("--force", ta.force, "reuse a non-empty output directory");

    ExtractArgs ea;
    auto* extract_cmd = app.add_subcommand("extract", "Extract the zero level set of a checkpoint");
    extract_cmd->add_option("checkpoint", ea.checkpoint, "checkpoint file")->required();
    extract_cmd->add_option("--res", ea.res, "grid nodes along each axis");
    extract_cmd->add_option("--out", ea.out, "mesh (.obj/.ply) or 2D contour (.csv) path");
    extract_cmd->add_option("--grid", ea.grid_out, "also write the sampled grid");
    extract_cmd->add_option("--box-scale", ea.box_scale, "side of the centered extraction cube");
    extract_cmd->add_option("--iso", ea.iso, "iso value");
    extract_cmd->add_option("--workers", ea.workers, "worker threads");

    EvalArgs va;
    auto* eval_cmd = app.add_subcommand("eval", "Distance metrics between a prediction and a reference");
    eval_cmd->add_option("--pred", va.pred, "predicted mesh, contour CSV or point cloud")->required();
    eval_cmd->add_option("--truth", va.truth, "reference mesh, contour CSV or point cloud")->required();
    eval_cmd->add_option("--samples", va.samples, "surface samples drawn from meshes");
    eval_cmd->add_option("--label", va.label, "row label");
    eval_cmd->add_option("--seed", va.seed, "sampling seed");
    eval_cmd->add_option("--out", va.out, "metrics CSV path");
    eval_cmd->add_option("--workers", va.workers, "worker threads");

    OracleArgs oa;
    auto* oracle_cmd = app.add_subcommand("oracle", "Fast marching solves and stability checks");
    oracle_cmd->set_help_flag("--help", "Print this help message and exit");
    oracle_cmd->add_option("mode", oa.mode, "fmm, lemma1 or lemma2");
    oracle_cmd->add_option("--fixture", oa.fixture, "circle or point");
    oracle_cmd->add_option("--config", oa.config, "key = value overrides (slowness, h, radius, amplitude, draws)");
    oracle_cmd->add_option("--h", oa.h, "grid spacing");
    oracle_cmd->add_option("--slowness", oa.slowness, "constant slowness f");
    oracle_cmd->add_option("--amplitude", oa.amplitude, "perturbation amplitude");
    oracle_cmd->add_option("--draws", oa.draws, "random perturbations");
    oracle_cmd->add_option("--seed", oa.seed, "random seed");
    oracle_cmd->add_option("--out", oa.out, "report CSV path");

    FlowArgs fa;
    auto* flow_cmd = app.add_subcommand("flow", "Linearized and nonlinear gradient-flow simulations");
    flow_cmd->add_option("mode", fa.mode, "linear or nonlinear");
    flow_cmd->add_option("--w1", fa.w1, "mode wavenumber along x1 (linear)");
    flow_cmd->add_option("--w2", fa.w2, "mode wavenumber along x2 (linear)");
    flow_cmd->add_option("--kappa", fa.kappa, "kappa_e, +1 or -1 (linear, p = 1)");
    flow_cmd->add_option("--p", fa.p, "loss exponent 1 or 2");
    flow_cmd->add_option("--eps", fa.eps, "viscosity epsilon");
    flow_cmd->add_option("--T", fa.T, "final time");
    flow_cmd->add_option("--dt", fa.dt, "time step");
    flow_cmd->add_option("--amplitude", fa.amplitude, "initial amplitude (nonlinear: in units of 1e-3)");
    flow_cmd->add_option("--n", fa.n, "grid nodes per axis");
    flow_cmd->add_option("--freq", fa.freq, "perturbation wavenumber (nonlinear)");
    flow_cmd->add_option("--seed", fa.seed, "random seed");
    flow_cmd->add_option("--out", fa.out, "band energy CSV path");

    AblateArgs aa;
    auto* ablate_cmd = app.add_subcommand("ablate", "Epsilon-schedule ablation grid");
    ablate_cmd->add_option("--config", aa.config, "key = value run configuration");
    ablate_cmd->add_option("--shape", aa.shape, "synthetic shape");
    ablate_cmd->add_option("--schedules", aa.schedules,
                           "comma-separated subset of baseline,eps_x2,eps_x0.5,fast_decay,slow_decay,eps0_plain_eikonal");
    ablate_cmd->add_option("--seed", aa.seed, "first seed");
    ablate_cmd->add_option("--seeds", aa.seeds, "seeds per schedule");
    ablate_cmd->add_option("--iters", aa.iters, "training iterations");
    ablate_cmd->add_option("--res", aa.res, "extraction grid resolution");
    ablate_cmd->add_option("--workers", aa.workers, "worker threads");
    ablate_cmd->add_option("--out", aa.out, "output directory");
    ablate_cmd->add_flag("--force", aa.force, "reuse a non-empty output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    RunManifest man;
    man.started = utc_timestamp();
    for (int i = 0; i < argc; ++i) man.argv.emplace_back(argv[i]);
    int code = kOk;
    CLI::App* used = app.get_subcommands().front();
    man.command = used->get_name();
    fs::path manifest_dir;
    try {
        if (used == train_cmd) {
            man.config_path = ta.config;
            code = cmd_train(ta, man, out);
        } else if (used == extract_cmd) {
            code = cmd_extract(ea, man, out);
        } else if (used == eval_cmd) {
            code = cmd_eval(va, man, out);
        } else if (used == oracle_cmd) {
            man.config_path = oa.config;
            code = cmd_oracle(oa, man, out);
        } else if (used == flow_cmd) {
            code = cmd_flow(fa, man, out);
        } else {
            man.config_path = aa.config;
            code = cmd_ablate(aa, man, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << used->help();
        code = kUsage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        code = kUsage;
    } catch (const TrainingAborted& e) {
        err << "numeric failure: " << e.what() << '\n';
        code = kNumeric;
    } catch (const NonFiniteError& e) {
        err << "numeric failure: " << e.what() << '\n';
        code = kNumeric;
    } catch (const ParseError& e) {
        err << "data error: " << e.what() << '\n';
        code = kData;
    } catch (const IoError& e) {
        err << "data error: " << e.what() << '\n';
        code = kData;
    } catch (const fs::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
        code = kData;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        code = kData;
    }
    if (code == kUsage && man.output.empty()) return code;
    man.finished = utc_timestamp();
    man.exit_code = code;
    if (!man.output.empty()) {
        const fs::path o(man.output);
        manifest_dir = fs::is_directory(o) ? o : (o.has_parent_path() ? o.parent_path() : fs::path("."));
    } else {
        manifest_dir = output_root();
    }
    try {
        man.append(manifest_dir);
    } catch (const std::exception& e) {
        err << "warning: " << e.what() << '\n';
    }
    return code;
}

}  // namespace viscoreg::cli
