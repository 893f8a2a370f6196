#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "pdtv/errors.hpp"
#include "pdtv/harness.hpp"
#include "pdtv/rng.hpp"
#include "pdtv/solver.hpp"

using namespace pdtv;

namespace {

// ---- straight-line transcription of the update formulas on four
// samples with T = I and nonnegativity; w0 is the anchor subgradient.
// Used as the independent oracle for the step functions.

struct Ref4 {
    std::array<double, 4> u{0.0, 0.0, 0.0, 0.0};
    std::array<double, 4> w{0.0, 0.0, 0.0, 0.0};
};

std::array<double, 4> ref4_primal(const Ref4& s,
                                  const std::array<double, 4>& w0,
                                  const std::array<double, 4>& v, double mu,
                                  double alpha) {
    const auto& u = s.u;
    const std::array<double, 4> wd{s.w[0] - w0[0], s.w[1] - w0[1],
                                   s.w[2] - w0[2], s.w[3] - w0[3]};
    const double dtw0 = -wd[0];
    const double dtw1 = wd[0] - wd[1];
    const double dtw2 = wd[1] - wd[2];
    const double dtw3 = wd[2];
    return {std::max(0.0, u[0] - mu * ((u[0] - v[0]) + alpha * dtw0)),
            std::max(0.0, u[1] - mu * ((u[1] - v[1]) + alpha * dtw1)),
            std::max(0.0, u[2] - mu * ((u[2] - v[2]) + alpha * dtw2)),
            std::max(0.0, u[3] - mu * ((u[3] - v[3]) + alpha * dtw3))};
}

Ref4 ref4_step_alg1(const Ref4& s, const std::array<double, 4>& w0,
                    const std::array<double, 4>& v, double mu, double nu,
                    double alpha) {
    Ref4 out;
    out.u = ref4_primal(s, w0, v, mu, alpha);
    out.w[0] = std::clamp(s.w[0] + nu * (out.u[1] - out.u[0]), -1.0, 1.0);
    out.w[1] = std::clamp(s.w[1] + nu * (out.u[2] - out.u[1]), -1.0, 1.0);
    out.w[2] = std::clamp(s.w[2] + nu * (out.u[3] - out.u[2]), -1.0, 1.0);
    out.w[3] = std::clamp(s.w[3] + nu * 0.0, -1.0, 1.0);
    return out;
}

Ref4 ref4_step_alg2(const Ref4& s, const std::array<double, 4>& w0,
                    const std::array<double, 4>& v, double mu, double nu,
                    double alpha, double lambda) {
    Ref4 out;
    const auto uhat = ref4_primal(s, w0, v, mu, alpha);
    out.w[0] = std::clamp(s.w[0] + nu * (uhat[1] - uhat[0]), -1.0, 1.0);
    out.w[1] = std::clamp(s.w[1] + nu * (uhat[2] - uhat[1]), -1.0, 1.0);
    out.w[2] = std::clamp(s.w[2] + nu * (uhat[3] - uhat[2]), -1.0, 1.0);
    out.w[3] = std::clamp(s.w[3] + nu * 0.0, -1.0, 1.0);
    out.u[0] = std::max(0.0, (1.0 - lambda) * s.u[0] + lambda * uhat[0]);
    out.u[1] = std::max(0.0, (1.0 - lambda) * s.u[1] + lambda * uhat[1]);
    out.u[2] = std::max(0.0, (1.0 - lambda) * s.u[2] + lambda * uhat[2]);
    out.u[3] = std::max(0.0, (1.0 - lambda) * s.u[3] + lambda * uhat[3]);
    return out;
}

// the toy instance shared by the oracle tests
const std::array<double, 4> kToyData{1.0, 0.5, 0.25, 0.8};

SolverState make_toy_state(const IdentityOperator& op) {
    return initialize_state(op, kToyData, GridField::zeros(op.domain()),
                            Constraint::nonnegative());
}

double max_abs_diff(std::span<const double> a, const std::array<double, 4>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("schedule formulas at the documented evaluation points") {
    SolverConfig cfg;
    cfg.mu_safety = 1.0;
    cfg.alpha0 = 1.0;

    auto p = schedule_parameters(1, 0.1, 2.0, cfg, 50);
    CHECK(p.mu == 0.5);
    CHECK(p.alpha == 1.0);
    CHECK(p.nu == 0.5 / 16.0);

    p = schedule_parameters(4, 0.1, 2.0, cfg, 50);
    CHECK(p.alpha == 0.25);

    SolverConfig fixed = cfg;
    fixed.schedule = Schedule::fixed_theorem;
    for (std::size_t i : {1u, 3u, 9u}) {
        p = schedule_parameters(i, 0.1, 1.0, fixed, 10);
        CHECK(p.mu == 1.0 / 20.0);
    }
}

TEST_CASE("schedule guards") {
    SolverConfig cfg;
    CHECK_THROWS_AS((void)schedule_parameters(0, 0.0, 1.0, cfg, 10),
                    parameter_error);
    CHECK_THROWS_AS((void)schedule_parameters(1, 0.0, 0.0, cfg, 10),
                    parameter_error);
    CHECK_THROWS_AS((void)schedule_parameters(1, 0.0, 1.0, cfg, 0),
                    parameter_error);
}

TEST_CASE("schedule respects the step and dual-step bounds") {
    SolverConfig cfg;
    cfg.mu_safety = 0.9;
    for (std::size_t i = 1; i <= 200; i += 7) {
        const auto p = schedule_parameters(i, 0.05, 3.7, cfg, 500);
        CHECK(p.mu <= 2.0 / (3.7 * 3.7) + 1e-15);
        CHECK(p.nu == doctest::Approx(p.mu / (16.0 * p.alpha)).epsilon(1e-15));
        // the stability analyses require mu * alpha <= 1/sqrt(nu)
        CHECK(p.mu * p.alpha <= 1.0 / std::sqrt(p.nu) + 1e-15);
    }
}

TEST_CASE("nu is clipped at 1e12") {
    SolverConfig cfg;
    const auto p =
        schedule_parameters(1000000000000000ULL, 0.0, 1.0, cfg, 1ULL << 60);
    CHECK(p.nu == 1e12);
}

TEST_CASE("config validation") {
    SolverConfig cfg;
    cfg.tau_lower = 1.0;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg = {};
    cfg.tau_upper = 1.05;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg = {};
    cfg.mode = SolverMode::alg2;
    cfg.lambda = 2.0;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg.lambda = 1.0;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg = {};
    cfg.mu_safety = 0.0;
    CHECK_THROWS_AS(cfg.validate(), parameter_error);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("mdp rule on the documented residual sequence") {
    SolverConfig cfg;
    cfg.tau_upper = 2.0;
    CHECK(mdp_decide(0.5, 0.1, cfg) == MdpDecision::continue_iterating);
    CHECK(mdp_decide(0.3, 0.1, cfg) == MdpDecision::continue_iterating);
    CHECK(mdp_decide(0.15, 0.1, cfg) == MdpDecision::stop_in_band);
    CHECK(mdp_decide(0.15, 0.0, cfg) == MdpDecision::continue_iterating);
    CHECK_THROWS_AS((void)mdp_decide(0.1, -1.0, cfg), parameter_error);
}

TEST_CASE("alg1 step is stationary at exact data with matched duals") {
    const GridSpec spec = GridSpec::unit({4, 4});
    IdentityOperator op(spec);
    const auto u0 = make_phantom(PhantomId::blocks, spec.shape);
    const auto v = op.apply(u0);
    auto state = initialize_state(op, v, u0, Constraint::nonnegative());
    state.mu = 0.9;
    state.nu = 2.0;
    state.alpha = 0.0; // dual coupling off, misfit gradient already zero
    const auto before = state.u.values;
    step_alg1(state, op, v, Constraint::nonnegative());
    CHECK(state.u.values == before);
    CHECK(state.iter == 1);
}

TEST_CASE("alg1 projection zeroes negative components") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    GridField u0{{4}, {1.0}, {0.1, 0.0, 0.3, 0.0}};
    const std::vector<double> v{-5.0, -5.0, -5.0, -5.0};
    auto state = initialize_state(op, v, u0, Constraint::nonnegative());
    state.mu = 1.0;
    state.nu = 1.0;
    state.alpha = 0.0;
    step_alg1(state, op, v, Constraint::nonnegative());
    for (double x : state.u.values) CHECK(x == 0.0);
}

TEST_CASE("alg1 matches the loop-free reference for 10 steps") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    auto state = make_toy_state(op);

    Ref4 ref; // u0 = 0 so the anchor subgradient is zero
    const std::array<double, 4> w0{0.0, 0.0, 0.0, 0.0};

    SolverConfig cfg;
    for (std::size_t i = 1; i <= 10; ++i) {
        const auto p = schedule_parameters(i, 0.0, 1.0, cfg, 100);
        state.mu = p.mu;
        state.nu = p.nu;
        state.alpha = p.alpha;
        step_alg1(state, op, kToyData, Constraint::nonnegative());

        // independent transcription of the same schedule
        const double mu = 0.9 * 2.0;
        const double alpha = 1.0 / static_cast<double>(i);
        const double nu = mu / (16.0 * alpha);
        ref = ref4_step_alg1(ref, w0, kToyData, mu, nu, alpha);

        CHECK(max_abs_diff(state.u.values, ref.u) <= 1e-12);
        CHECK(max_abs_diff(state.w.components[0], ref.w) <= 1e-12);
    }
}

TEST_CASE("alg2 matches the loop-free reference for 10 steps") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    auto state = make_toy_state(op);

    Ref4 ref;
    const std::array<double, 4> w0{0.0, 0.0, 0.0, 0.0};
    const double lambda = 1.5;

    SolverConfig cfg;
    for (std::size_t i = 1; i <= 10; ++i) {
        const auto p = schedule_parameters(i, 0.0, 1.0, cfg, 100);
        state.mu = p.mu;
        state.nu = p.nu;
        state.alpha = p.alpha;
        step_alg2(state, op, kToyData, Constraint::nonnegative(), lambda);

        const double mu = 0.9 * 2.0;
        const double alpha = 1.0 / static_cast<double>(i);
        const double nu = mu / (16.0 * alpha);
        ref = ref4_step_alg2(ref, w0, kToyData, mu, nu, alpha, lambda);

        CHECK(max_abs_diff(state.u.values, ref.u) <= 1e-12);
        CHECK(max_abs_diff(state.w.components[0], ref.w) <= 1e-12);
    }
}

TEST_CASE("alg2 at lambda just above 1 reproduces alg1") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    auto s1 = make_toy_state(op);
    auto s2 = make_toy_state(op);
    SolverConfig cfg;
    for (std::size_t i = 1; i <= 20; ++i) {
        const auto p = schedule_parameters(i, 0.0, 1.0, cfg, 100);
        s1.mu = s2.mu = p.mu;
        s1.nu = s2.nu = p.nu;
        s1.alpha = s2.alpha = p.alpha;
        step_alg1(s1, op, kToyData, Constraint::nonnegative());
        step_alg2(s2, op, kToyData, Constraint::nonnegative(), 1.0 + 1e-9);
        CHECK(vec::norm2(vec::sub(s1.u.values, s2.u.values)) <= 1e-6);
    }
}

TEST_CASE("relaxation map: fixed point and raw extrapolation value") {
    CHECK(extrapolate_relaxed(0.0, 2.0, 1.5) == 3.0);
    for (double lambda : {1.1, 1.5, 1.9})
        CHECK(extrapolate_relaxed(0.7, 0.7, lambda) ==
              doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("relaxed iterate equals u when u_hat equals u") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    // a state already at the fixed point: exact data, zero alpha
    GridField flat{{4}, {1.0}, {0.2, 0.2, 0.2, 0.2}};
    const auto v = op.apply(flat);
    auto state = initialize_state(op, v, flat, Constraint::nonnegative());
    state.mu = 0.5;
    state.nu = 1.0;
    state.alpha = 0.0;
    step_alg2(state, op, v, Constraint::nonnegative(), 1.7);
    CHECK(vec::norm2(vec::sub(state.u.values, flat.values)) <= 1e-15);
}

TEST_CASE("bregman outer step with constant start coincides with alg1") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    SolverConfig cfg;

    auto s_alg1 = make_toy_state(op);
    auto s_breg = make_toy_state(op);
    step_bregman_iterated(s_breg, op, kToyData, Constraint::nonnegative(), 5,
                          0.0, 1.0, cfg, 100);
    for (std::size_t i = 1; i <= 5; ++i) {
        const auto p = schedule_parameters(i, 0.0, 1.0, cfg, 100);
        s_alg1.mu = p.mu;
        s_alg1.nu = p.nu;
        s_alg1.alpha = p.alpha;
        step_alg1(s_alg1, op, kToyData, Constraint::nonnegative());
    }
    CHECK(vec::norm2(vec::sub(s_breg.u.values, s_alg1.u.values)) <= 1e-15);
    CHECK(s_breg.iter == 5);
}

TEST_CASE("bregman outer step is stationary at an exact-data optimum") {
    const GridSpec spec = GridSpec::unit({4, 4});
    IdentityOperator op(spec);
    const auto u_star = make_phantom(PhantomId::blocks, spec.shape);
    const auto v = op.apply(u_star);
    SolverConfig cfg;
    auto state = initialize_state(op, v, u_star, Constraint::nonnegative());
    step_bregman_iterated(state, op, v, Constraint::nonnegative(), 3, 0.0,
                          1.0, cfg, 100);
    CHECK(vec::norm2(vec::sub(state.u.values, u_star.values)) <= 1e-14);
}

TEST_CASE("bregman outer residuals do not increase on the 1-D toy") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    SolverConfig cfg;
    cfg.alpha0 = 0.25; // gentle TV pull keeps the outer residuals ordered
    auto state = make_toy_state(op);

    // reference trajectory from the transcribed step with anchor refresh
    Ref4 ref;
    std::array<double, 4> w0ref{0.0, 0.0, 0.0, 0.0};
    std::size_t ref_iter = 0;

    double prev_residual = state.residual;
    for (int outer = 0; outer < 3; ++outer) {
        step_bregman_iterated(state, op, kToyData, Constraint::nonnegative(),
                              4, 0.0, 1.0, cfg, 100);

        for (int k = 0; k < 4; ++k) {
            if (ref_iter % 4 == 0) {
                // refresh: subgradient of TV at the current iterate
                const std::array<double, 3> d{ref.u[1] - ref.u[0],
                                              ref.u[2] - ref.u[1],
                                              ref.u[3] - ref.u[2]};
                w0ref = {d[0] > 0 ? 1.0 : d[0] < 0 ? -1.0 : 0.0,
                         d[1] > 0 ? 1.0 : d[1] < 0 ? -1.0 : 0.0,
                         d[2] > 0 ? 1.0 : d[2] < 0 ? -1.0 : 0.0, 0.0};
                ref.w = w0ref;
            }
            ++ref_iter;
            const double mu = 0.9 * 2.0;
            const double alpha = 0.25 / static_cast<double>(ref_iter);
            const double nu = mu / (16.0 * alpha);
            ref = ref4_step_alg1(ref, w0ref, kToyData, mu, nu, alpha);
        }
        CHECK(max_abs_diff(state.u.values, ref.u) <= 1e-12);
        CHECK(state.residual <= prev_residual + 1e-12);
        prev_residual = state.residual;
    }
}

TEST_CASE("solve stops immediately at exact data") {
    const GridSpec spec = GridSpec::unit({5, 5});
    IdentityOperator op(spec);
    const auto u0 = make_phantom(PhantomId::disc, spec.shape);
    const auto v = op.apply(u0);
    SolverConfig cfg;
    const auto res = solve(op, v, 0.0, u0, Constraint::nonnegative(), cfg);
    CHECK(res.report.reason == StopReport::Reason::mdp_band);
    CHECK(res.report.i_star == 0);
    CHECK(res.report.final_residual == 0.0);
    CHECK(res.history.size() == 1);
}

TEST_CASE("solve improves the 16x16 denoising phantom under 5% noise") {
    const GridSpec spec = GridSpec::unit({16, 16});
    IdentityOperator op(spec);
    const auto truth = make_phantom(PhantomId::disc, spec.shape);
    const auto ms = add_noise(op.apply(truth), 0.05, 7);
    SolverConfig cfg;
    const auto res = solve(op, ms.values, ms.delta, GridField::zeros(spec),
                           Constraint::nonnegative(), cfg, &truth);
    REQUIRE(res.history.size() >= 2);
    const double initial_rel = res.history.front().rel_error;
    const double final_rel = res.history.back().rel_error;
    CHECK(final_rel < initial_rel);
    CHECK(res.history.size() == res.report.i_star + 1);
}

TEST_CASE("solve histories satisfy the discrepancy stopping contract") {
    const GridSpec spec = GridSpec::unit({12, 12});
    IdentityOperator op(spec);
    const auto truth = make_phantom(PhantomId::blocks, spec.shape);
    const auto ms = add_noise(op.apply(truth), 0.03, 5);
    SolverConfig cfg;
    const auto res = solve(op, ms.values, ms.delta, GridField::zeros(spec),
                           Constraint::nonnegative(), cfg, &truth);
    REQUIRE(res.report.reason == StopReport::Reason::mdp_band);
    const double band = cfg.tau_upper * ms.delta;
    // first index in the band is the stop index
    for (std::size_t i = 0; i + 1 < res.history.size(); ++i)
        CHECK(res.history[i].residual > band);
    CHECK(res.history.back().residual <= band);

    // consequence of the discrepancy stop against the clean data
    const auto tu = op.apply(res.u);
    const auto v_clean = op.apply(truth);
    const double img_err = vec::norm2(vec::sub(tu, v_clean));
    CHECK(img_err <= (cfg.tau_upper + 1.0) * ms.delta + 1e-9);
}

TEST_CASE("solve honors the oracle floor when truth is supplied") {
    const GridSpec spec = GridSpec::unit({8, 8});
    IdentityOperator op(spec);
    const auto truth = make_phantom(PhantomId::disc, spec.shape);
    const auto v = op.apply(truth);
    SolverConfig cfg;
    cfg.epsilon = 0.2;
    // noiseless data but delta = 0 disables the band; the floor stops
    const auto res = solve(op, v, 0.0, GridField::zeros(spec),
                           Constraint::nonnegative(), cfg, &truth);
    CHECK(res.report.reason == StopReport::Reason::oracle_floor);
    CHECK(res.history.back().rel_error <= 0.2);
}

TEST_CASE("solve reaches max_iter when nothing else stops it") {
    const GridSpec spec = GridSpec::unit({6, 6});
    IdentityOperator op(spec);
    const auto truth = make_phantom(PhantomId::disc, spec.shape);
    const auto ms = add_noise(op.apply(truth), 0.05, 11);
    SolverConfig cfg;
    cfg.max_iter = 7;
    const auto res = solve(op, ms.values, 0.0, GridField::zeros(spec),
                           Constraint::nonnegative(), cfg, &truth);
    CHECK(res.report.reason == StopReport::Reason::max_iter);
    CHECK(res.report.i_star == 7);
    CHECK(res.history.size() == 8);
}

TEST_CASE("manual step with an absurd step length raises divergence") {
    const GridSpec spec = GridSpec::unit({4});
    IdentityOperator op(spec);
    auto state = make_toy_state(op);
    state.mu = 1e308;
    state.nu = 1.0;
    state.alpha = 1e308;
    // drive the iterate to overflow within a few steps
    CHECK_THROWS_AS(
        [&] {
            for (int i = 0; i < 50; ++i)
                step_alg1(state, op, kToyData, Constraint::none());
        }(),
        divergence_error);
}

TEST_CASE("fixed point residual vanishes at a stationary pair") {
    const GridSpec spec = GridSpec::unit({5, 5});
    IdentityOperator op(spec);
    const auto u0 = make_phantom(PhantomId::disc, spec.shape);
    const auto v = op.apply(u0);
    const auto w0 = l1_subgradient(gradient(u0));
    const double r = fixed_point_residual(u0, w0, op, v, 0.5, 1.0, 3.0, w0,
                                          Constraint::nonnegative());
    CHECK(r <= 1e-12);
}

TEST_CASE("fixed point residual flags a far-from-optimal pair") {
    const GridSpec spec = GridSpec::unit({5, 5});
    IdentityOperator op(spec);
    Sampler sampler(301);
    auto u = GridField::zeros(spec);
    for (auto& x : u.values) x = std::abs(sampler.normal()) + 0.5;
    auto w = StackedGradientField::zeros(spec.shape);
    for (auto& comp : w.components)
        for (auto& x : comp) x = std::clamp(sampler.normal(), -1.0, 1.0);
    const auto v = sampler.normal_vector(spec.size());
    const auto w0 = StackedGradientField::zeros(spec.shape);
    const double r = fixed_point_residual(u, w, op, v, 0.5, 1.0, 2.0, w0,
                                          Constraint::nonnegative());
    CHECK(r > 1e-2);
}

TEST_CASE("long denoising run certifies an approximate fixed point") {
    const GridSpec spec = GridSpec::unit({8, 8});
    IdentityOperator op(spec);
    const auto truth = make_phantom(PhantomId::blocks, spec.shape);
    const auto ms = add_noise(op.apply(truth), 0.02, 5);
    SolverConfig cfg;
    cfg.mu_safety = 0.2; // positive contraction, no iterate alternation
    cfg.alpha0 = 0.1;
    auto state = initialize_state(op, ms.values, GridField::zeros(spec),
                                  Constraint::nonnegative());
    for (std::size_t i = 1; i <= 2000; ++i) {
        const auto p = schedule_parameters(i, 0.0, 1.0, cfg, 2000);
        state.mu = p.mu;
        state.nu = p.nu;
        state.alpha = p.alpha;
        step_alg1(state, op, ms.values, Constraint::nonnegative());
    }
    const double r = fixed_point_residual(state.u, state.w, op, ms.values,
                                          state.alpha, state.mu, state.nu,
                                          state.w0, Constraint::nonnegative());
    CHECK(r < 1e-6);
}

TEST_CASE("solve runs the iterated-Bregman mode end to end") {
    const GridSpec spec = GridSpec::unit({8, 8});
    IdentityOperator op(spec);
    const auto truth = make_phantom(PhantomId::blocks, spec.shape);
    const auto ms = add_noise(op.apply(truth), 0.05, 9);
    SolverConfig cfg;
    cfg.mode = SolverMode::bregman_iterated;
    cfg.bregman_inner_iters = 5;
    const auto res = solve(op, ms.values, ms.delta, GridField::zeros(spec),
                           Constraint::nonnegative(), cfg, &truth);
    CHECK(res.report.reason == StopReport::Reason::mdp_band);
    CHECK(res.history.back().rel_error < res.history.front().rel_error);
    CHECK(res.history.size() == res.report.i_star + 1);
}

TEST_CASE("solve rejects the zero operator") {
    DenseMatrixOperator op(GridSpec::unit({3}), 3,
                           std::vector<double>(9, 0.0));
    SolverConfig cfg;
    const std::vector<double> v{1.0, 2.0, 3.0};
    CHECK_THROWS_AS((void)solve(op, v, 0.0, GridField::zeros(op.domain()),
                                Constraint::none(), cfg),
                    parameter_error);
}
