#include "pdtv/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pdtv/errors.hpp"

namespace pdtv {

namespace fs = std::filesystem;

ProblemKind problem_from_string(const std::string& s) {
    if (s == "denoise2d") return ProblemKind::denoise2d;
    if (s == "radon2d") return ProblemKind::radon2d;
    if (s == "gps3d") return ProblemKind::gps3d;
    throw config_error("unknown problem: " + s);
}

PhantomId phantom_from_string(const std::string& s) {
    if (s == "disc") return PhantomId::disc;
    if (s == "blocks") return PhantomId::blocks;
    if (s == "shepp_like") return PhantomId::shepp_like;
    throw parameter_error("unknown phantom id: " + s);
}

SolverMode mode_from_string(const std::string& s) {
    if (s == "alg1") return SolverMode::alg1;
    if (s == "alg2") return SolverMode::alg2;
    if (s == "bregman" || s == "bregman_iterated")
        return SolverMode::bregman_iterated;
    throw config_error("unknown solver mode: " + s);
}

Schedule schedule_from_string(const std::string& s) {
    if (s == "dynamic") return Schedule::dynamic;
    if (s == "fixed_theorem") return Schedule::fixed_theorem;
    throw config_error("unknown schedule: " + s);
}

const char* to_string(ProblemKind p) {
    switch (p) {
    case ProblemKind::denoise2d: return "denoise2d";
    case ProblemKind::radon2d: return "radon2d";
    case ProblemKind::gps3d: return "gps3d";
    }
    return "unknown";
}

const char* to_string(PhantomId p) {
    switch (p) {
    case PhantomId::disc: return "disc";
    case PhantomId::blocks: return "blocks";
    case PhantomId::shepp_like: return "shepp_like";
    }
    return "unknown";
}

const char* to_string(SolverMode m) {
    switch (m) {
    case SolverMode::alg1: return "alg1";
    case SolverMode::alg2: return "alg2";
    case SolverMode::bregman_iterated: return "bregman_iterated";
    }
    return "unknown";
}

const char* to_string(Schedule s) {
    switch (s) {
    case Schedule::dynamic: return "dynamic";
    case Schedule::fixed_theorem: return "fixed_theorem";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    if (noise_fractions.empty())
        throw config_error("config needs at least one noise fraction");
    for (double f : noise_fractions)
        if (!(f >= 0.0))
            throw config_error("noise fractions must be nonnegative");
    if (seeds.empty())
        throw config_error("config needs at least one seed");
    if (output_dir.empty())
        throw config_error("config needs an output directory");
    const std::size_t axes = grid.size();
    if (problem == ProblemKind::gps3d && axes != 3)
        throw config_error("gps3d needs a 3-D grid");
    if (problem != ProblemKind::gps3d && axes != 2)
        throw config_error(std::string(to_string(problem)) +
                           " needs a 2-D grid");
    for (auto n : grid)
        if (n == 0) throw config_error("grid axes must be positive");
    try {
        solver.validate();
    } catch (const parameter_error& e) {
        throw config_error(std::string("solver config: ") + e.what());
    }
    if (problem == ProblemKind::gps3d) {
        if (gps.num_satellites < 1 || gps.num_stations < 1 ||
            gps.rays_per_station < 1)
            throw config_error("gps scene counts must be at least 1");
        if (gps.rays_per_station > gps.num_satellites)
            throw config_error("gps rays_per_station exceeds satellites");
    }
    if (problem == ProblemKind::radon2d && radon.num_angles < 1)
        throw config_error("radon2d needs at least one angle");
}

ExperimentConfig ExperimentConfig::defaults(ProblemKind problem) {
    ExperimentConfig cfg;
    cfg.problem = problem;
    switch (problem) {
    case ProblemKind::denoise2d:
        cfg.grid = {64, 64};
        break;
    case ProblemKind::radon2d:
        cfg.grid = {64, 64};
        break;
    case ProblemKind::gps3d:
        cfg.grid = {16, 16, 8};
        cfg.phantom = PhantomId::disc;
        cfg.solver.mode = SolverMode::alg2;
        cfg.solver.alpha0 = 0.1; // keeps reconstructions tight on the rays
        cfg.noise_fractions = {0.02};
        break;
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ProblemKind problem = ProblemKind::radon2d;
    if (j.contains("problem"))
        problem = problem_from_string(j.at("problem").get<std::string>());
    ExperimentConfig cfg = defaults(problem);
    try {
        if (j.contains("grid")) j.at("grid").get_to(cfg.grid);
        if (j.contains("phantom"))
            cfg.phantom =
                phantom_from_string(j.at("phantom").get<std::string>());
        if (j.contains("noise_fractions"))
            j.at("noise_fractions").get_to(cfg.noise_fractions);
        if (j.contains("seeds")) j.at("seeds").get_to(cfg.seeds);
        if (j.contains("output_dir"))
            j.at("output_dir").get_to(cfg.output_dir);
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            if (s.contains("mode"))
                cfg.solver.mode =
                    mode_from_string(s.at("mode").get<std::string>());
            if (s.contains("tau_lower"))
                s.at("tau_lower").get_to(cfg.solver.tau_lower);
            if (s.contains("tau_upper"))
                s.at("tau_upper").get_to(cfg.solver.tau_upper);
            if (s.contains("alpha0")) s.at("alpha0").get_to(cfg.solver.alpha0);
            if (s.contains("lambda")) s.at("lambda").get_to(cfg.solver.lambda);
            if (s.contains("epsilon"))
                s.at("epsilon").get_to(cfg.solver.epsilon);
            if (s.contains("max_iter"))
                s.at("max_iter").get_to(cfg.solver.max_iter);
            if (s.contains("schedule"))
                cfg.solver.schedule =
                    schedule_from_string(s.at("schedule").get<std::string>());
            if (s.contains("mu_safety"))
                s.at("mu_safety").get_to(cfg.solver.mu_safety);
            if (s.contains("inner_iters"))
                s.at("inner_iters").get_to(cfg.solver.bregman_inner_iters);
        }
        if (j.contains("radon")) {
            const auto& r = j.at("radon");
            if (r.contains("num_angles"))
                r.at("num_angles").get_to(cfg.radon.num_angles);
            if (r.contains("num_detectors"))
                r.at("num_detectors").get_to(cfg.radon.num_detectors);
            if (r.contains("detector_spacing"))
                r.at("detector_spacing").get_to(cfg.radon.detector_spacing);
        }
        if (j.contains("gps")) {
            const auto& g = j.at("gps");
            if (g.contains("num_satellites"))
                g.at("num_satellites").get_to(cfg.gps.num_satellites);
            if (g.contains("num_stations"))
                g.at("num_stations").get_to(cfg.gps.num_stations);
            if (g.contains("rays_per_station"))
                g.at("rays_per_station").get_to(cfg.gps.rays_per_station);
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("invalid config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("cannot parse config file " + path + ": " +
                           e.what());
    }
    return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
    return nlohmann::json{
        {"problem", to_string(problem)},
        {"grid", grid},
        {"phantom", to_string(phantom)},
        {"noise_fractions", noise_fractions},
        {"seeds", seeds},
        {"output_dir", output_dir},
        {"solver",
         {{"mode", to_string(solver.mode)},
          {"tau_lower", solver.tau_lower},
          {"tau_upper", solver.tau_upper},
          {"alpha0", solver.alpha0},
          {"lambda", solver.lambda},
          {"epsilon", solver.epsilon},
          {"max_iter", solver.max_iter},
          {"schedule", to_string(solver.schedule)},
          {"mu_safety", solver.mu_safety},
          {"inner_iters", solver.bregman_inner_iters}}},
        {"radon",
         {{"num_angles", radon.num_angles},
          {"num_detectors", radon.num_detectors},
          {"detector_spacing", radon.detector_spacing}}},
        {"gps",
         {{"num_satellites", gps.num_satellites},
          {"num_stations", gps.num_stations},
          {"rays_per_station", gps.rays_per_station}}}};
}

namespace {

// normalized cell-center coordinate in (-0.5, 0.5) per axis
double norm_coord(std::size_t i, std::size_t n) {
    return (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 0.5;
}

template <class Fill>
GridField fill_phantom(const Shape& shape, Fill&& fill) {
    auto u = GridField::zeros(GridSpec::unit(shape));
    const auto strides = row_major_strides(shape);
    std::vector<double> xi(shape.size(), 0.0);
    for (std::size_t idx = 0; idx < u.values.size(); ++idx) {
        for (std::size_t a = 0; a < shape.size(); ++a)
            xi[a] = norm_coord((idx / strides[a]) % shape[a], shape[a]);
        u.values[idx] = fill(xi);
    }
    return u;
}

bool in_range(double x, double lo, double hi) { return x >= lo && x <= hi; }

double ellipse_r2(const std::vector<double>& xi,
                  const std::vector<double>& center,
                  const std::vector<double>& semi) {
    double s = 0.0;
    for (std::size_t a = 0; a < xi.size(); ++a) {
        const double d = (xi[a] - center[a]) / semi[a];
        s += d * d;
    }
    return s;
}

} // namespace

GridField make_phantom(PhantomId id, const Shape& shape) {
    const std::size_t axes = shape.size();
    if (axes != 2 && axes != 3)
        throw parameter_error("phantoms are defined for 2-D and 3-D grids");
    for (auto n : shape)
        if (n == 0) throw parameter_error("phantom grid axes must be positive");

    switch (id) {
    case PhantomId::disc:
        return fill_phantom(shape, [](const std::vector<double>& xi) {
            double r2 = 0.0;
            for (double x : xi) r2 += x * x;
            return r2 <= 0.35 * 0.35 ? 1.0 : 0.0;
        });
    case PhantomId::blocks:
        return fill_phantom(shape, [axes](const std::vector<double>& xi) {
            double v = 0.0;
            const bool z1 = axes < 3 || in_range(xi[2], -0.35, 0.05);
            const bool z2 = axes < 3 || in_range(xi[2], -0.25, 0.25);
            const bool z3 = axes < 3 || in_range(xi[2], -0.05, 0.35);
            if (in_range(xi[0], -0.35, -0.05) &&
                in_range(xi[1], -0.35, -0.05) && z1)
                v = 1.0;
            if (in_range(xi[0], 0.05, 0.35) && in_range(xi[1], -0.30, 0.10) &&
                z2)
                v = 0.6;
            if (in_range(xi[0], -0.30, 0.00) && in_range(xi[1], 0.10, 0.35) &&
                z3)
                v = 0.3;
            return v;
        });
    case PhantomId::shepp_like:
        return fill_phantom(shape, [axes](const std::vector<double>& xi) {
            const std::vector<double> zero(axes, 0.0);
            auto semi = [axes](double a, double b) {
                std::vector<double> s{a, b};
                if (axes == 3) s.push_back(0.40);
                return s;
            };
            auto center = [axes](double a, double b) {
                std::vector<double> c{a, b};
                if (axes == 3) c.push_back(0.0);
                return c;
            };
            double v = 0.0;
            if (ellipse_r2(xi, zero, semi(0.42, 0.38)) <= 1.0) v = 0.8;
            if (ellipse_r2(xi, zero, semi(0.36, 0.32)) <= 1.0) v = 0.4;
            if (ellipse_r2(xi, center(-0.10, 0.08), semi(0.08, 0.12)) <= 1.0)
                v = 1.0;
            if (ellipse_r2(xi, center(0.13, -0.10), semi(0.10, 0.07)) <= 1.0)
                v = 0.1;
            return v;
        });
    }
    throw parameter_error("unknown phantom id");
}

ProblemInstance build_problem(const ExperimentConfig& cfg) {
    cfg.validate();
    ProblemInstance inst;
    const GridSpec spec = GridSpec::unit(cfg.grid);
    inst.truth = make_phantom(cfg.phantom, cfg.grid);
    switch (cfg.problem) {
    case ProblemKind::denoise2d:
        inst.op = std::make_unique<IdentityOperator>(spec);
        inst.geometry_tag = "identity";
        break;
    case ProblemKind::radon2d: {
        std::size_t dets = cfg.radon.num_detectors;
        if (dets == 0) {
            // cover the grid diagonal with a small margin, odd count so
            // one detector sits on the rotation axis
            const double diag = std::hypot(static_cast<double>(cfg.grid[0]),
                                           static_cast<double>(cfg.grid[1]));
            dets = static_cast<std::size_t>(std::ceil(diag)) + 3;
            if (dets % 2 == 0) ++dets;
        }
        inst.op = std::make_unique<RadonTransform2D>(
            spec, SinogramGeometry::uniform(cfg.radon.num_angles, dets,
                                            cfg.radon.detector_spacing));
        inst.geometry_tag = "radon2d";
        break;
    }
    case ProblemKind::gps3d: {
        auto scene =
            make_gps_scene(spec, cfg.gps.num_satellites, cfg.gps.num_stations,
                           cfg.gps.rays_per_station, cfg.seeds.front());
        inst.op = std::make_unique<RayTransform3D>(spec, std::move(scene));
        inst.geometry_tag = "ray3d";
        break;
    }
    }
    inst.v_clean = inst.op->apply(inst.truth);
    return inst;
}

std::string format_double(double x) {
    if (std::isnan(x)) return {};
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

namespace {

const char* kMetricsHeader =
    "iter,residual_image_space,rel_error_preimage,objective,alpha_i,mu_i,"
    "nu_i,wall_ms";

void write_metric_row(std::ostream& out, const IterationRecord& row) {
    out << row.iter << ',' << format_double(row.residual) << ','
        << format_double(row.rel_error) << ',' << format_double(row.objective)
        << ',' << format_double(row.alpha) << ',' << format_double(row.mu)
        << ',' << format_double(row.nu) << ',' << row.wall_ms << '\n';
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    return out;
}

void ensure_output_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw config_error("cannot create output directory " + dir + ": " +
                           ec.message());
    const auto probe = fs::path(dir) / ".write_probe";
    std::ofstream p(probe);
    if (!p) throw config_error("output directory not writable: " + dir);
    p.close();
    fs::remove(probe, ec);
}

double final_rel_error(const SolveResult& res) {
    return res.history.empty() ? std::numeric_limits<double>::quiet_NaN()
                               : res.history.back().rel_error;
}

std::string frac_label(double f) { return format_double(f); }

} // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<IterationRecord>& history) {
    auto out = open_out(path);
    out << kMetricsHeader << '\n';
    for (const auto& row : history) write_metric_row(out, row);
}

void write_metrics_csv_grouped(
    const std::string& path, const std::vector<std::string>& keys,
    const std::vector<const std::vector<IterationRecord>*>& curves) {
    if (keys.size() != curves.size())
        throw parameter_error("grouped csv needs one key per curve");
    auto out = open_out(path);
    out << "mode," << kMetricsHeader << '\n';
    for (std::size_t g = 0; g < keys.size(); ++g)
        for (const auto& row : *curves[g]) {
            out << keys[g] << ',';
            write_metric_row(out, row);
        }
}

void write_volume_csv(const std::string& path, const GridField& u) {
    if (u.num_axes() != 2 && u.num_axes() != 3)
        throw shape_error("volume dumps are defined for 2-D and 3-D fields");
    auto out = open_out(path);
    out << "x,y,z,value\n";
    const auto strides = row_major_strides(u.shape);
    for (std::size_t idx = 0; idx < u.values.size(); ++idx) {
        const std::size_t x = (idx / strides[0]) % u.shape[0];
        const std::size_t y = (idx / strides[1]) % u.shape[1];
        const std::size_t z =
            u.num_axes() == 3 ? (idx / strides[2]) % u.shape[2] : 0;
        out << x << ',' << y << ',' << z << ','
            << format_double(u.values[idx]) << '\n';
    }
}

GridField load_volume_csv(const std::string& path, const GridSpec& spec) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "x,y,z,value")
        throw io_error("unexpected header in " + path);
    auto u = GridField::zeros(spec);
    const auto strides = row_major_strides(spec.shape);
    while (std::getline(in, line)) {
        std::array<std::size_t, 3> coord{0, 0, 0};
        std::size_t pos = 0;
        for (int c = 0; c < 3; ++c) {
            const auto comma = line.find(',', pos);
            if (comma == std::string::npos)
                throw io_error("malformed row in " + path);
            coord[c] = std::stoul(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        std::size_t idx = coord[0] * strides[0] + coord[1] * strides[1];
        if (spec.num_axes() == 3) idx += coord[2] * strides[2];
        u.values.at(idx) = std::stod(line.substr(pos));
    }
    return u;
}

bool csv_equal_ignoring_wall(const std::string& path_a,
                             const std::string& path_b) {
    std::ifstream a(path_a), b(path_b);
    if (!a || !b) throw io_error("cannot open files for comparison");
    std::string la, lb;
    bool more_a = true, more_b = true;
    std::ptrdiff_t wall_col = -1;
    bool first = true;
    while (true) {
        more_a = static_cast<bool>(std::getline(a, la));
        more_b = static_cast<bool>(std::getline(b, lb));
        if (more_a != more_b) return false;
        if (!more_a) return true;
        if (first) {
            first = false;
            if (la != lb) return false;
            std::stringstream ss(la);
            std::string col;
            std::ptrdiff_t i = 0;
            while (std::getline(ss, col, ',')) {
                if (col == "wall_ms") wall_col = i;
                ++i;
            }
            continue;
        }
        if (wall_col < 0) {
            if (la != lb) return false;
            continue;
        }
        const auto strip = [&](const std::string& line) {
            std::string out;
            std::stringstream ss(line);
            std::string col;
            std::ptrdiff_t i = 0;
            while (std::getline(ss, col, ',')) {
                if (i != wall_col) {
                    out += col;
                    out += ',';
                }
                ++i;
            }
            return out;
        };
        if (strip(la) != strip(lb)) return false;
    }
}

namespace {

RunSummary run_one(const ProblemInstance& inst, const MeasurementSet& ms,
                   double frac, std::uint64_t seed, const SolverConfig& scfg,
                   std::vector<IterationRecord>* history_out,
                   GridField* volume_out) {
    RunSummary summary;
    summary.noise_fraction = frac;
    summary.seed = seed;
    summary.delta = ms.delta;
    const auto u0 = GridField::zeros(inst.op->domain());
    try {
        auto res = solve(*inst.op, ms.values, ms.delta, u0,
                         Constraint::nonnegative(), scfg, &inst.truth);
        summary.report = res.report;
        summary.final_rel_error = final_rel_error(res);
        if (history_out) *history_out = std::move(res.history);
        if (volume_out) *volume_out = std::move(res.u);
    } catch (const divergence_error& e) {
        summary.diverged = true;
        summary.error = e.what();
    }
    return summary;
}

void write_summary_row(std::ostream& out, const RunSummary& s) {
    out << format_double(s.noise_fraction) << ',' << s.seed << ','
        << format_double(s.delta) << ','
        << (s.diverged ? "divergence" : to_string(s.report.reason)) << ','
        << s.report.i_star << ',' << format_double(s.report.final_residual)
        << ',' << format_double(s.final_rel_error) << '\n';
}

} // namespace

SweepOutcome run_noise_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    ensure_output_dir(cfg.output_dir);
    const auto inst = build_problem(cfg);

    SweepOutcome outcome;
    for (double frac : cfg.noise_fractions)
        for (auto seed : cfg.seeds) {
            const auto ms =
                add_noise(inst.v_clean, frac, seed, inst.geometry_tag);
            std::vector<IterationRecord> history;
            GridField volume;
            auto summary =
                run_one(inst, ms, frac, seed, cfg.solver, &history, &volume);
            const std::string stem = cfg.output_dir + "/sweep_" +
                                     frac_label(frac) + "_" +
                                     std::to_string(seed);
            save_measurements(stem + "_measurements", ms);
            outcome.files.push_back(stem + "_measurements.csv");
            outcome.files.push_back(stem + "_measurements.json");
            if (!summary.diverged) {
                write_metrics_csv(stem + ".csv", history);
                write_volume_csv(stem + "_volume.csv", volume);
                outcome.files.push_back(stem + ".csv");
                outcome.files.push_back(stem + "_volume.csv");
            }
            outcome.runs.push_back(std::move(summary));
        }

    // the qualitative regularization claim: more noise, larger final error
    outcome.monotone_rel_error = true;
    for (auto seed : cfg.seeds) {
        double prev = -1.0;
        for (double frac : cfg.noise_fractions) {
            for (const auto& r : outcome.runs)
                if (r.seed == seed && r.noise_fraction == frac) {
                    if (r.diverged || (prev >= 0.0 &&
                                       r.final_rel_error < prev - 1e-12))
                        outcome.monotone_rel_error = false;
                    prev = r.final_rel_error;
                }
        }
    }

    const std::string summary_path = cfg.output_dir + "/sweep_summary.csv";
    auto out = open_out(summary_path);
    out << "noise_fraction,seed,delta,stop_reason,i_star,final_residual,"
           "final_rel_error\n";
    for (const auto& r : outcome.runs) write_summary_row(out, r);
    out << "monotone_rel_error,"
        << (outcome.monotone_rel_error ? "pass" : "fail") << '\n';
    outcome.files.push_back(summary_path);
    return outcome;
}

BenchOutcome run_benchmark_alg1_vs_alg2(const ExperimentConfig& cfg) {
    cfg.validate();
    ensure_output_dir(cfg.output_dir);
    const auto inst = build_problem(cfg);
    const double frac = cfg.noise_fractions.front();
    const auto seed = cfg.seeds.front();
    const auto ms = add_noise(inst.v_clean, frac, seed, inst.geometry_tag);

    BenchOutcome outcome;
    std::vector<IterationRecord> hist1, hist2;
    GridField vol1, vol2;
    SolverConfig c1 = cfg.solver;
    c1.mode = SolverMode::alg1;
    SolverConfig c2 = cfg.solver;
    c2.mode = SolverMode::alg2;
    outcome.alg1 = run_one(inst, ms, frac, seed, c1, &hist1, &vol1);
    outcome.alg2 = run_one(inst, ms, frac, seed, c2, &hist2, &vol2);
    if (outcome.alg1.diverged || outcome.alg2.diverged) {
        outcome.first_to_band = "divergence";
        outcome.lower_final_rel_error = "divergence";
    } else {
        const auto i1 = outcome.alg1.report.i_star;
        const auto i2 = outcome.alg2.report.i_star;
        outcome.first_to_band = i1 == i2 ? "tie" : (i2 < i1 ? "alg2" : "alg1");
        const double e1 = outcome.alg1.final_rel_error;
        const double e2 = outcome.alg2.final_rel_error;
        outcome.lower_final_rel_error =
            e1 == e2 ? "tie" : (e2 < e1 ? "alg2" : "alg1");
    }

    const std::string curves_path = cfg.output_dir + "/bench.csv";
    write_metrics_csv_grouped(curves_path, {"alg1", "alg2"},
                              {&hist1, &hist2});
    outcome.files.push_back(curves_path);
    if (!outcome.alg1.diverged) {
        write_volume_csv(cfg.output_dir + "/bench_alg1_volume.csv", vol1);
        outcome.files.push_back(cfg.output_dir + "/bench_alg1_volume.csv");
    }
    if (!outcome.alg2.diverged) {
        write_volume_csv(cfg.output_dir + "/bench_alg2_volume.csv", vol2);
        outcome.files.push_back(cfg.output_dir + "/bench_alg2_volume.csv");
    }

    const std::string summary_path = cfg.output_dir + "/bench_summary.csv";
    auto out = open_out(summary_path);
    out << "mode,noise_fraction,seed,delta,stop_reason,i_star,final_residual,"
           "final_rel_error\n";
    out << "alg1,";
    write_summary_row(out, outcome.alg1);
    out << "alg2,";
    write_summary_row(out, outcome.alg2);
    out << "first_to_band," << outcome.first_to_band << '\n';
    out << "lower_final_rel_error," << outcome.lower_final_rel_error << '\n';
    outcome.files.push_back(summary_path);
    return outcome;
}

std::vector<std::size_t> signal_chord_voxels(const RayTransform3D& op,
                                             std::span<const double> v,
                                             double signal_frac,
                                             double chord_min) {
    double peak = 0.0;
    for (double x : v) peak = std::max(peak, std::abs(x));
    double h_min = 1.0;
    if (!op.domain().spacing.empty())
        for (double h : op.domain().spacing) h_min = std::min(h_min, h);
    std::set<std::size_t> out;
    std::vector<double> basis(op.range_size(), 0.0);
    for (std::size_t r = 0; r < op.range_size(); ++r) {
        if (std::abs(v[r]) <= signal_frac * peak) continue;
        basis[r] = 1.0;
        const auto chords = op.adjoint(basis); // per-voxel chord lengths
        basis[r] = 0.0;
        for (auto vx : op.traversed_voxels(r))
            if (chords.values[vx] > chord_min * h_min) out.insert(vx);
    }
    return {out.begin(), out.end()};
}

RayGeometry3D make_trace_ray(const GridSpec& grid) {
    grid.validate();
    if (grid.num_axes() != 3)
        throw shape_error("trace ray needs a 3-D grid");
    const auto spacing =
        grid.spacing.empty() ? std::vector<double>(3, 1.0) : grid.spacing;
    const std::array<double, 3> extent = {
        static_cast<double>(grid.shape[0]) * spacing[0],
        static_cast<double>(grid.shape[1]) * spacing[1],
        static_cast<double>(grid.shape[2]) * spacing[2]};
    const std::array<double, 3> station{0.325 * extent[0], 0.70625 * extent[1],
                                        0.0};
    const std::array<double, 3> center{extent[0] / 2.0, extent[1] / 2.0,
                                       extent[2] / 2.0};
    RayGeometry3D geom;
    geom.receivers.push_back(station);
    std::array<double, 3> satellite;
    for (int a = 0; a < 3; ++a)
        satellite[a] = station[a] + 14.0 * (center[a] - station[a]);
    geom.transmitters.push_back(satellite);
    geom.rays.emplace_back(0, 0);
    return geom;
}

double support_jaccard(const GridField& u,
                       const std::vector<std::size_t>& voxels,
                       double rel_threshold) {
    double max_val = 0.0;
    for (double x : u.values) max_val = std::max(max_val, std::abs(x));
    std::set<std::size_t> support;
    if (max_val > 0.0) {
        const double threshold = rel_threshold * max_val;
        for (std::size_t i = 0; i < u.values.size(); ++i)
            if (std::abs(u.values[i]) > threshold) support.insert(i);
    }
    std::set<std::size_t> target(voxels.begin(), voxels.end());
    if (support.empty() && target.empty()) return 1.0;
    std::size_t inter = 0;
    for (auto i : support) inter += target.count(i);
    const std::size_t uni = support.size() + target.size() - inter;
    return uni == 0 ? 1.0
                    : static_cast<double>(inter) / static_cast<double>(uni);
}

GpsOutcome run_gps_experiments(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.problem != ProblemKind::gps3d)
        throw config_error("gps experiments need problem = gps3d");
    ensure_output_dir(cfg.output_dir);

    const GridSpec spec = GridSpec::unit(cfg.grid);
    const auto truth = make_phantom(cfg.phantom, cfg.grid);
    const double frac = cfg.noise_fractions.front();
    const auto seed = cfg.seeds.front();

    std::vector<std::size_t> scenes{1};
    if (cfg.gps.num_satellites >= 5) scenes.push_back(5);
    if (cfg.gps.num_satellites > 1 &&
        cfg.gps.num_satellites != scenes.back())
        scenes.push_back(cfg.gps.num_satellites);

    GpsOutcome outcome;
    const std::string summary_path = cfg.output_dir + "/gps_summary.csv";
    auto out = open_out(summary_path);
    out << "scene,schedule,num_rays,noise_fraction,seed,delta,"
           "stop_reason,i_star,final_residual,final_rel_error,"
           "support_jaccard\n";

    const auto run_cell = [&](const std::string& label,
                              const RayTransform3D& op, std::size_t rays,
                              Schedule schedule) {
        const auto v_clean = op.apply(truth);
        const auto ms = add_noise(v_clean, frac, seed, "ray3d");
        const auto target = signal_chord_voxels(op, ms.values);

        SolverConfig scfg = cfg.solver;
        scfg.schedule = schedule;
        ProblemInstance inst;
        inst.truth = truth;
        inst.geometry_tag = "ray3d";
        inst.op = std::make_unique<RayTransform3D>(op);

        std::vector<IterationRecord> history;
        GridField volume;
        GpsRunOutcome run;
        run.label = label;
        run.rays_per_station = rays;
        run.schedule = schedule;
        run.summary = run_one(inst, ms, frac, seed, scfg, &history, &volume);
        const std::string stem =
            cfg.output_dir + "/gps_" + label + "_" + to_string(schedule);
        if (!run.summary.diverged) {
            write_metrics_csv(stem + ".csv", history);
            write_volume_csv(stem + "_volume.csv", volume);
            run.support_jaccard = support_jaccard(volume, target);
            outcome.files.push_back(stem + ".csv");
            outcome.files.push_back(stem + "_volume.csv");
        }
        out << label << ',' << to_string(schedule) << ',' << op.range_size()
            << ',' << format_double(frac) << ',' << seed << ','
            << format_double(run.summary.delta) << ','
            << (run.summary.diverged ? "divergence"
                                     : to_string(run.summary.report.reason))
            << ',' << run.summary.report.i_star << ','
            << format_double(run.summary.report.final_residual) << ','
            << format_double(run.summary.final_rel_error) << ','
            << format_double(run.support_jaccard) << '\n';
        outcome.runs.push_back(std::move(run));
    };

    const auto save_geometry = [&](const std::string& label,
                                   const RayGeometry3D& geom) {
        const std::string path =
            cfg.output_dir + "/gps_" + label + "_geometry.json";
        auto gout = open_out(path);
        gout << nlohmann::json(geom).dump(2) << '\n';
        outcome.files.push_back(path);
    };

    for (auto rays : scenes) {
        auto scene = make_gps_scene(spec, cfg.gps.num_satellites,
                                    cfg.gps.num_stations, rays, seed);
        save_geometry("rays" + std::to_string(rays), scene);
        RayTransform3D op(spec, std::move(scene));
        for (Schedule schedule : {Schedule::dynamic, Schedule::fixed_theorem})
            run_cell("rays" + std::to_string(rays), op, rays, schedule);
    }

    // single-ray trace cell: the reconstruction should light exactly
    // the signal-carrying chord
    {
        auto trace = make_trace_ray(spec);
        save_geometry("trace", trace);
        RayTransform3D op(spec, std::move(trace));
        run_cell("trace", op, 1, Schedule::dynamic);
    }

    outcome.files.push_back(summary_path);
    return outcome;
}

void write_selftest_csv(const std::string& path,
                        const std::vector<SelftestResult>& results) {
    auto out = open_out(path);
    out << "name,pass,detail\n";
    for (const auto& r : results)
        out << r.name << ',' << (r.pass ? "pass" : "fail") << ',' << r.detail
            << '\n';
}

} // namespace pdtv
