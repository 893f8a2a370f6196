#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pdtv/grid.hpp"
#include "pdtv/operators.hpp"
#include "pdtv/proximal.hpp"

namespace pdtv {

enum class SolverMode { alg1, alg2, bregman_iterated };
enum class Schedule { dynamic, fixed_theorem };

struct SolverConfig {
    SolverMode mode = SolverMode::alg1;
    double tau_lower = 1.1;  // discrepancy band lower factor, > 1
    double tau_upper = 1.5;  // stop at residual <= tau_upper * delta
    double alpha0 = 1.0;     // regularization scale, alpha_i = alpha0 / i
    // relaxation, in (1, 2) for alg2; the relaxed primal step is stable
    // when lambda * mu_safety < 1 (effective step lambda*mu below the
    // 2/||T||^2 bound), hence the conservative default
    double lambda = 1.1;
    double epsilon = 0.0;    // relative-error floor; <= 0 disables
    std::size_t max_iter = 5000;
    Schedule schedule = Schedule::dynamic;
    double mu_safety = 0.9;  // fraction of the 2/||T||^2 step bound
    std::size_t bregman_inner_iters = 10; // anchor refresh period

    void validate() const; // throws parameter_error
};

struct ScheduledParams {
    double mu = 0.0;
    double nu = 0.0;
    double alpha = 0.0;
};

/// Step length, dual step and regularization weight for 1-indexed
/// iteration i.
///
/// dynamic:        mu = mu_safety * 2 / ||T||^2, alpha_i = alpha0 / i.
/// fixed_theorem:  mu = 1 / (2 * i_star_cap * ||T||^2), same alpha rule.
///
/// Both use nu_i = mu_i / (16 alpha_i), clipped to 1e12: the largest
/// dual step for which the primal-dual linearization on near-flat
/// edges stays non-oscillatory (difference modes have sigma^2 <= 8),
/// comfortably inside the mu_i alpha_i <= 1/sqrt(nu_i) requirement.
ScheduledParams schedule_parameters(std::size_t i, double delta,
                                    double op_norm, const SolverConfig& cfg,
                                    std::size_t i_star_cap);

/// Iterate pair plus the Bregman anchor. Managed by initialize_state
/// and the step functions; tu caches the forward map of u.
struct SolverState {
    GridField u;               // current primal iterate
    GridField u_hat;           // pre-relaxation iterate (alg2 only)
    GridField u_anchor;        // Bregman prior (initial guess, or the
                               // latest outer iterate in bregman mode)
    StackedGradientField w;    // dual iterate, inside the unit inf-ball
    StackedGradientField w0;   // subgradient of the TV term at the anchor
    std::vector<double> tu;    // cached T u
    std::size_t iter = 0;
    double mu = 0.0;
    double nu = 0.0;
    double alpha = 0.0;
    double residual = 0.0;     // ||T u - v||
};

SolverState initialize_state(const LinearOperator& op,
                             std::span<const double> v_delta,
                             const GridField& u0, const Constraint& c);

/// One primal-dual step: projected gradient step on the misfit plus the
/// dual coupling, then dual ascent clamped to the unit inf-ball. The
/// dual update evaluates D at the new primal iterate. Parameters for
/// the step must already sit in state (mu, nu, alpha).
void step_alg1(SolverState& state, const LinearOperator& op,
               std::span<const double> v_delta, const Constraint& c);

/// The alg1 update into u_hat, dual update at u_hat, then relaxation
/// u <- (1-lambda) u + lambda u_hat re-projected onto the constraint.
void step_alg2(SolverState& state, const LinearOperator& op,
               std::span<const double> v_delta, const Constraint& c,
               double lambda);

double extrapolate_relaxed(double u, double u_hat, double lambda);

/// One outer Bregman step: refresh the anchor to the current iterate
/// (w0 <- subgradient of TV at u, dual reset to w0), then inner_iters
/// alg1 steps with the global iteration counter driving the schedule.
void step_bregman_iterated(SolverState& state, const LinearOperator& op,
                           std::span<const double> v_delta,
                           const Constraint& c, std::size_t inner_iters,
                           double delta, double op_norm,
                           const SolverConfig& cfg, std::size_t i_star_cap);

void refresh_bregman_anchor(SolverState& state);

enum class MdpDecision { continue_iterating, stop_in_band };

/// Morozov stop test: stop once the residual falls to tau_upper * delta.
/// Disabled for delta = 0.
MdpDecision mdp_decide(double residual, double delta,
                       const SolverConfig& cfg);

struct StopReport {
    enum class Reason { mdp_band, oracle_floor, max_iter };
    Reason reason = Reason::max_iter;
    std::size_t i_star = 0;
    double final_residual = 0.0;
    std::pair<double, double> tau_delta_bounds{0.0, 0.0};
    bool band_lower_overshot = false; // residual jumped below tau_lower*delta
};

const char* to_string(StopReport::Reason reason);

struct IterationRecord {
    std::size_t iter = 0;
    double residual = 0.0;
    double objective = 0.0;
    double rel_error = 0.0; // NaN when no ground truth supplied
    double alpha = 0.0;
    double mu = 0.0;
    double nu = 0.0;
    std::int64_t wall_ms = 0;
};

struct SolveResult {
    GridField u;
    StopReport report;
    std::vector<IterationRecord> history; // one record per iterate, i = 0..stop
};

/// Full iterative run: initializes w0 from the initial guess, loops the
/// configured step, and stops on the discrepancy band, the optional
/// relative-error floor (needs truth), or max_iter. A residual of
/// exactly zero stops immediately even with delta = 0.
SolveResult solve(const LinearOperator& op, std::span<const double> v_delta,
                  double delta, const GridField& u0, const Constraint& c,
                  const SolverConfig& cfg, const GridField* truth = nullptr);

/// Scaled distance of (u, w) from satisfying the coupled prox
/// characterization of the regularized minimizer; small values certify
/// an approximate fixed point.
double fixed_point_residual(const GridField& u, const StackedGradientField& w,
                            const LinearOperator& op,
                            std::span<const double> v_delta, double alpha,
                            double mu, double nu,
                            const StackedGradientField& w0,
                            const Constraint& c);

} // namespace pdtv
