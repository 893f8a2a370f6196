#include "pdtv/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "pdtv/errors.hpp"

namespace pdtv {

namespace {

constexpr double kNuClip = 1e12;

double residual_norm(std::span<const double> tu,
                     std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < tu.size(); ++i) {
        const double r = tu[i] - v[i];
        s += r * r;
    }
    return std::sqrt(s);
}

void require_finite(std::span<const double> x, const char* what,
                    std::size_t iter) {
    if (!vec::all_finite(x))
        throw divergence_error(std::string(what) +
                               " became non-finite at iteration " +
                               std::to_string(iter));
}

// u - mu * (T^T(T u - v) + alpha * D^T(w - w0)), projected.
GridField primal_update(const SolverState& s, const LinearOperator& op,
                        std::span<const double> v, const Constraint& c) {
    const auto misfit_grad = op.adjoint(vec::sub(s.tu, v));
    StackedGradientField wdiff = s.w;
    for (std::size_t comp = 0; comp < wdiff.components.size(); ++comp)
        vec::axpy(-1.0, s.w0.components[comp], wdiff.components[comp]);
    const auto coupling = gradient_adjoint(wdiff);

    GridField out = s.u;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] -= s.mu * (misfit_grad.values[i] +
                                 s.alpha * coupling.values[i]);
    project_inplace(out.values, c);
    return out;
}

void dual_update(SolverState& s, const GridField& at) {
    const auto du = gradient(at);
    for (std::size_t comp = 0; comp < s.w.components.size(); ++comp) {
        auto& wc = s.w.components[comp];
        vec::axpy(s.nu, du.components[comp], wc);
        require_finite(wc, "dual update argument", s.iter + 1);
    }
    clamp_to_unit_ball_inplace(s.w);
}

void finish_step(SolverState& s, const LinearOperator& op,
                 std::span<const double> v) {
    s.tu = op.apply(s.u);
    s.residual = residual_norm(s.tu, v);
    if (!std::isfinite(s.residual))
        throw divergence_error("residual became non-finite at iteration " +
                               std::to_string(s.iter + 1));
    s.iter += 1;
}

} // namespace

void SolverConfig::validate() const {
    if (!(tau_lower > 1.0))
        throw parameter_error("tau_lower must exceed 1");
    if (!(tau_upper >= tau_lower))
        throw parameter_error("tau_upper must be >= tau_lower");
    if (!(alpha0 > 0.0))
        throw parameter_error("alpha0 must be positive");
    if (mode == SolverMode::alg2 && !(lambda > 1.0 && lambda < 2.0))
        throw parameter_error("alg2 needs lambda strictly inside (1, 2)");
    if (!(mu_safety > 0.0 && mu_safety <= 1.0))
        throw parameter_error("mu_safety must lie in (0, 1]");
    if (max_iter < 1)
        throw parameter_error("max_iter must be at least 1");
    if (mode == SolverMode::bregman_iterated && bregman_inner_iters < 1)
        throw parameter_error("bregman_inner_iters must be at least 1");
}

ScheduledParams schedule_parameters(std::size_t i, double /*delta*/,
                                    double op_norm, const SolverConfig& cfg,
                                    std::size_t i_star_cap) {
    if (i == 0)
        throw parameter_error("schedules are 1-indexed; got i = 0");
    if (!(op_norm > 0.0))
        throw parameter_error("schedule needs a positive operator norm");
    if (i_star_cap == 0)
        throw parameter_error("schedule needs i_star_cap >= 1");

    ScheduledParams p;
    const double norm_sq = op_norm * op_norm;
    switch (cfg.schedule) {
    case Schedule::dynamic:
        p.mu = cfg.mu_safety * 2.0 / norm_sq;
        break;
    case Schedule::fixed_theorem:
        p.mu = 1.0 / (2.0 * static_cast<double>(i_star_cap) * norm_sq);
        break;
    }
    p.alpha = cfg.alpha0 / static_cast<double>(i);
    // largest dual step that keeps the coupled primal-dual linearization
    // non-oscillatory on near-flat edges (difference modes satisfy
    // sigma^2 <= 8); also well inside the mu_i alpha_i <= 1/sqrt(nu_i)
    // requirement of the stability analysis
    p.nu = std::min(p.mu / (16.0 * p.alpha), kNuClip);
    return p;
}

SolverState initialize_state(const LinearOperator& op,
                             std::span<const double> v_delta,
                             const GridField& u0, const Constraint& c) {
    op.check_range(v_delta);
    SolverState s;
    s.u = prox_indicator(u0, c);
    if (s.u.shape != op.domain().shape)
        throw shape_error("initial guess does not match the operator domain");
    s.u_hat = s.u;
    s.u_anchor = s.u;
    s.w0 = l1_subgradient(gradient(s.u));
    s.w = s.w0; // w_1 = w_0
    s.tu = op.apply(s.u);
    s.residual = residual_norm(s.tu, v_delta);
    return s;
}

void step_alg1(SolverState& s, const LinearOperator& op,
               std::span<const double> v, const Constraint& c) {
    GridField next = primal_update(s, op, v, c);
    require_finite(next.values, "primal iterate", s.iter + 1);
    s.u = std::move(next);
    dual_update(s, s.u);
    finish_step(s, op, v);
}

double extrapolate_relaxed(double u, double u_hat, double lambda) {
    return (1.0 - lambda) * u + lambda * u_hat;
}

void step_alg2(SolverState& s, const LinearOperator& op,
               std::span<const double> v, const Constraint& c,
               double lambda) {
    GridField hat = primal_update(s, op, v, c);
    require_finite(hat.values, "pre-relaxation iterate", s.iter + 1);
    dual_update(s, hat);

    // relaxation on the segment through u_i and u_hat; lambda > 1 can
    // leave the feasible set, so the result is projected again
    for (std::size_t i = 0; i < s.u.values.size(); ++i)
        s.u.values[i] =
            extrapolate_relaxed(s.u.values[i], hat.values[i], lambda);
    project_inplace(s.u.values, c);
    require_finite(s.u.values, "relaxed iterate", s.iter + 1);
    s.u_hat = std::move(hat);
    finish_step(s, op, v);
}

void refresh_bregman_anchor(SolverState& s) {
    s.u_anchor = s.u;
    s.w0 = l1_subgradient(gradient(s.u));
    s.w = s.w0;
}

void step_bregman_iterated(SolverState& s, const LinearOperator& op,
                           std::span<const double> v, const Constraint& c,
                           std::size_t inner_iters, double delta,
                           double op_norm, const SolverConfig& cfg,
                           std::size_t i_star_cap) {
    if (inner_iters < 1)
        throw parameter_error("bregman step needs inner_iters >= 1");
    refresh_bregman_anchor(s);
    for (std::size_t k = 0; k < inner_iters; ++k) {
        const auto p =
            schedule_parameters(s.iter + 1, delta, op_norm, cfg, i_star_cap);
        s.mu = p.mu;
        s.nu = p.nu;
        s.alpha = p.alpha;
        step_alg1(s, op, v, c);
    }
}

MdpDecision mdp_decide(double residual, double delta,
                       const SolverConfig& cfg) {
    if (delta < 0.0)
        throw parameter_error("mdp_decide needs delta >= 0");
    if (delta == 0.0)
        return MdpDecision::continue_iterating;
    return residual <= cfg.tau_upper * delta ? MdpDecision::stop_in_band
                                             : MdpDecision::continue_iterating;
}

const char* to_string(StopReport::Reason reason) {
    switch (reason) {
    case StopReport::Reason::mdp_band:
        return "mdp_band";
    case StopReport::Reason::oracle_floor:
        return "oracle_floor";
    case StopReport::Reason::max_iter:
        return "max_iter";
    }
    return "unknown";
}

SolveResult solve(const LinearOperator& op, std::span<const double> v_delta,
                  double delta, const GridField& u0, const Constraint& c,
                  const SolverConfig& cfg, const GridField* truth) {
    cfg.validate();
    if (delta < 0.0)
        throw parameter_error("solve needs delta >= 0");
    if (truth && truth->shape != op.domain().shape)
        throw shape_error("ground truth does not match the operator domain");

    const auto started = std::chrono::steady_clock::now();
    const auto norm_est = estimate_operator_norm(op);
    if (!(norm_est.value > 0.0))
        throw parameter_error("operator norm estimate is zero; nothing to solve");
    const double op_norm = norm_est.value;
    const std::size_t i_star_cap = cfg.max_iter;

    SolverState s = initialize_state(op, v_delta, u0, c);
    const double truth_norm = truth ? vec::norm2(truth->values) : 0.0;

    SolveResult result;
    result.history.reserve(std::min<std::size_t>(cfg.max_iter + 1, 1 << 20));

    const auto rel_error = [&](const GridField& u) {
        if (!truth || truth_norm == 0.0)
            return std::numeric_limits<double>::quiet_NaN();
        double s2 = 0.0;
        for (std::size_t i = 0; i < u.values.size(); ++i) {
            const double d = u.values[i] - truth->values[i];
            s2 += d * d;
        }
        return std::sqrt(s2) / truth_norm;
    };

    const auto record = [&](const ScheduledParams& p) {
        IterationRecord row;
        row.iter = s.iter;
        row.residual = s.residual;
        row.objective = 0.5 * s.residual * s.residual +
                        p.alpha * bregman_distance(s.u, s.u_anchor, s.w0).value;
        row.rel_error = rel_error(s.u);
        row.alpha = p.alpha;
        row.mu = p.mu;
        row.nu = p.nu;
        row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
        result.history.push_back(row);
    };

    const auto make_report = [&](StopReport::Reason reason) {
        StopReport rep;
        rep.reason = reason;
        rep.i_star = s.iter;
        rep.final_residual = s.residual;
        rep.tau_delta_bounds = {cfg.tau_lower * delta, cfg.tau_upper * delta};
        rep.band_lower_overshot = delta > 0.0 &&
                                  reason == StopReport::Reason::mdp_band &&
                                  s.residual < cfg.tau_lower * delta;
        return rep;
    };

    // record the starting point against the first step's parameters
    record(schedule_parameters(1, delta, op_norm, cfg, i_star_cap));

    const auto stop_now = [&]() -> std::optional<StopReport::Reason> {
        if (mdp_decide(s.residual, delta, cfg) == MdpDecision::stop_in_band ||
            s.residual == 0.0)
            return StopReport::Reason::mdp_band;
        const double rel = rel_error(s.u);
        if (cfg.epsilon > 0.0 && !std::isnan(rel) && rel <= cfg.epsilon)
            return StopReport::Reason::oracle_floor;
        return std::nullopt;
    };

    if (auto reason = stop_now()) {
        result.report = make_report(*reason);
        result.u = s.u;
        return result;
    }

    while (s.iter < cfg.max_iter) {
        const auto p =
            schedule_parameters(s.iter + 1, delta, op_norm, cfg, i_star_cap);
        s.mu = p.mu;
        s.nu = p.nu;
        s.alpha = p.alpha;
        switch (cfg.mode) {
        case SolverMode::alg1:
            step_alg1(s, op, v_delta, c);
            break;
        case SolverMode::alg2: {
            const double lambda = cfg.schedule == Schedule::fixed_theorem
                                      ? 2.0 / static_cast<double>(i_star_cap)
                                      : cfg.lambda;
            step_alg2(s, op, v_delta, c, lambda);
            break;
        }
        case SolverMode::bregman_iterated:
            if ((s.iter % cfg.bregman_inner_iters) == 0)
                refresh_bregman_anchor(s);
            step_alg1(s, op, v_delta, c);
            break;
        }
        record(p);
        if (auto reason = stop_now()) {
            result.report = make_report(*reason);
            result.u = s.u;
            return result;
        }
    }

    result.report = make_report(StopReport::Reason::max_iter);
    result.u = s.u;
    return result;
}

double fixed_point_residual(const GridField& u, const StackedGradientField& w,
                            const LinearOperator& op,
                            std::span<const double> v_delta, double alpha,
                            double mu, double nu,
                            const StackedGradientField& w0,
                            const Constraint& c) {
    if (!(mu > 0.0) || !(nu > 0.0))
        throw parameter_error("fixed_point_residual needs mu, nu > 0");

    SolverState probe;
    probe.u = u;
    probe.w = w;
    probe.w0 = w0;
    probe.mu = mu;
    probe.alpha = alpha;
    probe.tu = op.apply(u);
    const GridField reproj = primal_update(probe, op, v_delta, c);

    double primal_gap = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        const double d = u.values[i] - reproj.values[i];
        primal_gap += d * d;
    }
    primal_gap = std::sqrt(primal_gap) / (1.0 + vec::norm2(u.values));

    const auto wq = prox_dual_l1(w, nu, gradient(u));
    double dual_gap = 0.0;
    for (std::size_t comp = 0; comp < w.components.size(); ++comp)
        for (std::size_t i = 0; i < w.components[comp].size(); ++i) {
            const double d = w.components[comp][i] - wq.components[comp][i];
            dual_gap += d * d;
        }
    dual_gap = std::sqrt(dual_gap) / (1.0 + vec::norm2(w));

    return std::max(primal_gap, dual_gap);
}

} // namespace pdtv
