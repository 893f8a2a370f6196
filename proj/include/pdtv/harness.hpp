#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdtv/grid.hpp"
#include "pdtv/solver.hpp"
#include "pdtv/tomo.hpp"

namespace pdtv {

enum class ProblemKind { denoise2d, radon2d, gps3d };
enum class PhantomId { disc, blocks, shepp_like };

ProblemKind problem_from_string(const std::string& s);
PhantomId phantom_from_string(const std::string& s);
SolverMode mode_from_string(const std::string& s);
Schedule schedule_from_string(const std::string& s);
const char* to_string(ProblemKind p);
const char* to_string(PhantomId p);
const char* to_string(SolverMode m);
const char* to_string(Schedule s);

struct RadonSettings {
    std::size_t num_angles = 60;
    std::size_t num_detectors = 0; // 0: sized to cover the grid diagonal
    double detector_spacing = 1.0;
};

struct GpsSettings {
    std::size_t num_satellites = 8;
    std::size_t num_stations = 25;
    std::size_t rays_per_station = 5;
};

struct ExperimentConfig {
    ProblemKind problem = ProblemKind::radon2d;
    Shape grid = {64, 64};
    PhantomId phantom = PhantomId::shepp_like;
    std::vector<double> noise_fractions = {0.01, 0.03, 0.05};
    std::vector<std::uint64_t> seeds = {1};
    SolverConfig solver;
    std::string output_dir = "out";
    RadonSettings radon;
    GpsSettings gps;

    void validate() const; // throws config_error
    static ExperimentConfig defaults(ProblemKind problem);
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    nlohmann::json to_json() const;
};

/// Deterministic piecewise-constant nonnegative phantom with values in
/// [0, 1]; finite total variation by construction.
GridField make_phantom(PhantomId id, const Shape& shape);

/// Operator, ground truth and clean measurements for one experiment.
struct ProblemInstance {
    std::unique_ptr<LinearOperator> op;
    GridField truth;
    std::vector<double> v_clean;
    std::string geometry_tag;
};

ProblemInstance build_problem(const ExperimentConfig& cfg);

struct RunSummary {
    double noise_fraction = 0.0;
    std::uint64_t seed = 0;
    double delta = 0.0;
    StopReport report;
    double final_rel_error = 0.0;
    bool diverged = false;
    std::string error;
};

struct SweepOutcome {
    std::vector<RunSummary> runs;
    bool monotone_rel_error = false;
    std::vector<std::string> files;
};

/// One solver run per (noise fraction, seed) cell; per-cell metrics CSV
/// plus a summary with the noise-monotonicity check in its footer.
SweepOutcome run_noise_sweep(const ExperimentConfig& cfg);

struct BenchOutcome {
    RunSummary alg1;
    RunSummary alg2;
    std::string first_to_band;         // "alg1", "alg2" or "tie"
    std::string lower_final_rel_error; // same keys
    std::vector<std::string> files;
};

/// Both algorithms on the identical measurement; paired error curves.
BenchOutcome run_benchmark_alg1_vs_alg2(const ExperimentConfig& cfg);

struct GpsRunOutcome {
    std::string label;          // "rays<k>" or "trace"
    std::size_t rays_per_station = 0;
    Schedule schedule = Schedule::dynamic;
    RunSummary summary;
    double support_jaccard = 0.0;
};

struct GpsOutcome {
    std::vector<GpsRunOutcome> runs;
    std::vector<std::string> files;
};

/// Dynamic vs fixed-step schedules across 1-, 5- and all-satellite ray
/// scenes, plus a deterministic single-ray trace cell (one satellite,
/// one station, ray through the volume center). Emits metrics, volume
/// dumps and a summary with the support overlap of each reconstruction
/// against the signal-carrying chords.
GpsOutcome run_gps_experiments(const ExperimentConfig& cfg);

/// The one-ray scene of the trace experiment.
RayGeometry3D make_trace_ray(const GridSpec& grid);

/// |support(u) ∩ voxels| / |support(u) ∪ voxels| with the support taken
/// at rel_threshold times the maximum value.
double support_jaccard(const GridField& u,
                       const std::vector<std::size_t>& voxels,
                       double rel_threshold = 0.02);

/// Voxels of the rays that carry signal (measurement above signal_frac
/// of the peak), keeping only chords longer than chord_min in units of
/// the smallest voxel spacing.
std::vector<std::size_t> signal_chord_voxels(const RayTransform3D& op,
                                             std::span<const double> v,
                                             double signal_frac = 0.01,
                                             double chord_min = 0.1);

// --- CSV emission (all floats shortest-round-trip formatted) ---

std::string format_double(double x);

void write_metrics_csv(const std::string& path,
                       const std::vector<IterationRecord>& history);
void write_metrics_csv_grouped(const std::string& path,
                               const std::vector<std::string>& keys,
                               const std::vector<const std::vector<IterationRecord>*>& curves);

/// Flat "x,y,z,value" dump, z = 0 for 2-D fields; rows in index order.
void write_volume_csv(const std::string& path, const GridField& u);
GridField load_volume_csv(const std::string& path, const GridSpec& spec);

/// Byte comparison that masks the wall_ms column.
bool csv_equal_ignoring_wall(const std::string& path_a,
                             const std::string& path_b);

struct SelftestResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Cheap deterministic run of the module invariants: adjoint suites,
/// algebraic identities, prox and subgradient properties, traversal
/// length conservation, noise exactness, schedule formulas, stopping
/// semantics.
std::vector<SelftestResult> run_selftest();
void write_selftest_csv(const std::string& path,
                        const std::vector<SelftestResult>& results);

/// Entry point behind the pdtv binary: subcommands sweep, bench, gps,
/// selftest. Returns 0 on success, 1 on configuration errors, 2 when a
/// solver run diverged.
int cli_main(int argc, const char* const* argv);

} // namespace pdtv
