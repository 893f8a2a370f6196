#include "pdtv/proximal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pdtv/errors.hpp"

namespace pdtv {

Constraint Constraint::box(double lo, double hi) {
    if (!(lo <= hi))
        throw parameter_error("box constraint needs lo <= hi");
    return {Kind::box, lo, hi};
}

bool Constraint::feasible(std::span<const double> values) const {
    switch (kind) {
    case Kind::none:
        return true;
    case Kind::nonnegative:
        for (double x : values)
            if (x < 0.0) return false;
        return true;
    case Kind::box:
        for (double x : values)
            if (x < lo || x > hi) return false;
        return true;
    }
    return true;
}

void project_inplace(std::span<double> values, const Constraint& c) {
    switch (c.kind) {
    case Constraint::Kind::none:
        return;
    case Constraint::Kind::nonnegative:
        for (auto& x : values) x = std::max(x, 0.0);
        return;
    case Constraint::Kind::box:
        for (auto& x : values) x = std::clamp(x, c.lo, c.hi);
        return;
    }
}

GridField prox_indicator(const GridField& u, const Constraint& c) {
    u.validate();
    GridField out = u;
    project_inplace(out.values, c);
    return out;
}

void clamp_to_unit_ball_inplace(StackedGradientField& w) {
    for (auto& comp : w.components)
        for (auto& x : comp) x = std::clamp(x, -1.0, 1.0);
}

StackedGradientField prox_dual_l1(const StackedGradientField& w, double nu,
                                  const StackedGradientField& du) {
    if (!(nu > 0.0))
        throw parameter_error("prox_dual_l1 needs nu > 0");
    w.validate();
    if (du.shape != w.shape || du.components.size() != w.components.size())
        throw shape_error("prox_dual_l1: gradient field shape mismatch");
    StackedGradientField out = w;
    for (std::size_t c = 0; c < out.components.size(); ++c)
        vec::axpy(nu, du.components[c], out.components[c]);
    clamp_to_unit_ball_inplace(out);
    return out;
}

StackedGradientField l1_subgradient(const StackedGradientField& d) {
    d.validate();
    StackedGradientField out = d;
    for (auto& comp : out.components)
        for (auto& x : comp) x = (x > 0.0) ? 1.0 : (x < 0.0) ? -1.0 : 0.0;
    return out;
}

double tv_value(const GridField& u) {
    const auto du = gradient(u);
    double s = 0.0;
    for (const auto& comp : du.components)
        for (double x : comp) s += std::abs(x);
    return s;
}

BregmanEvaluation bregman_distance(const GridField& u, const GridField& u_ref,
                                   const StackedGradientField& q_ref) {
    if (u.shape != u_ref.shape)
        throw shape_error("bregman_distance: field shapes differ");
    if (q_ref.shape != u_ref.shape)
        throw shape_error("bregman_distance: subgradient shape mismatch");
    BregmanEvaluation ev;
    const auto du = gradient(u);
    const auto du_ref = gradient(u_ref);
    for (const auto& comp : du.components)
        for (double x : comp) ev.j_u += std::abs(x);
    for (const auto& comp : du_ref.components)
        for (double x : comp) ev.j_ref += std::abs(x);
    // <q*, u - u*> evaluated through the composite form as <q*, D(u - u*)>
    for (std::size_t c = 0; c < q_ref.components.size(); ++c) {
        const auto& q = q_ref.components[c];
        const auto& a = du.components[c];
        const auto& b = du_ref.components[c];
        for (std::size_t i = 0; i < q.size(); ++i)
            ev.pairing += q[i] * (a[i] - b[i]);
    }
    ev.value = ev.j_u - ev.j_ref - ev.pairing;
    return ev;
}

double objective_value(const LinearOperator& op, const GridField& u,
                       std::span<const double> v_delta, double alpha,
                       const GridField& u0, const StackedGradientField& w0,
                       const Constraint& c) {
    if (!c.feasible(u.values))
        return std::numeric_limits<double>::infinity();
    const auto tu = op.apply(u);
    if (tu.size() != v_delta.size())
        throw shape_error("objective_value: measurement length mismatch");
    double misfit = 0.0;
    for (std::size_t i = 0; i < tu.size(); ++i) {
        const double r = tu[i] - v_delta[i];
        misfit += r * r;
    }
    double penalty = 0.0;
    if (alpha != 0.0)
        penalty = alpha * bregman_distance(u, u0, w0).value;
    return 0.5 * misfit + penalty;
}

} // namespace pdtv
