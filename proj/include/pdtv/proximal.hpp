#pragma once

#include <span>

#include "pdtv/grid.hpp"
#include "pdtv/operators.hpp"

namespace pdtv {

/// Feasible set for the indicator penalty: none, the nonnegative
/// orthant, or a scalar box [lo, hi] broadcast over all samples.
struct Constraint {
    enum class Kind { none, nonnegative, box };

    Kind kind = Kind::none;
    double lo = 0.0;
    double hi = 0.0;

    static Constraint none() { return {Kind::none, 0.0, 0.0}; }
    static Constraint nonnegative() { return {Kind::nonnegative, 0.0, 0.0}; }
    static Constraint box(double lo, double hi);

    bool feasible(std::span<const double> values) const;
};

/// Componentwise metric projection onto the feasible set.
void project_inplace(std::span<double> values, const Constraint& c);

/// Prox of the indicator of the feasible set: the projection. The step
/// size of the prox is immaterial for an indicator.
GridField prox_indicator(const GridField& u, const Constraint& c);

/// Componentwise clamp to [-1, 1].
void clamp_to_unit_ball_inplace(StackedGradientField& w);

/// Prox of nu * g^* at w + nu * du, with g the l1 norm: g^* is the
/// indicator of the unit inf-ball, so this is the clamp of the
/// argument, independent of nu.
StackedGradientField prox_dual_l1(const StackedGradientField& w, double nu,
                                  const StackedGradientField& du);

/// Componentwise sign with 0 at exact zeros; an element of the l1
/// subdifferential at d, always inside the unit inf-ball.
StackedGradientField l1_subgradient(const StackedGradientField& d);

/// Anisotropic total variation: l1 norm of all forward differences.
double tv_value(const GridField& u);

struct BregmanEvaluation {
    double value = 0.0;   // j_u - j_ref - pairing, >= 0 up to rounding
    double j_u = 0.0;
    double j_ref = 0.0;
    double pairing = 0.0; // <q_ref, D(u - u_ref)>
};

/// Bregman distance of the TV functional between u and u_ref, with
/// q_ref a caller-supplied subgradient of g at D u_ref.
BregmanEvaluation bregman_distance(const GridField& u, const GridField& u_ref,
                                   const StackedGradientField& q_ref);

/// 0.5 * ||Tu - v||^2 + alpha * Bregman-TV(u, u0); +infinity when u is
/// infeasible, so line searches over the objective stay total.
double objective_value(const LinearOperator& op, const GridField& u,
                       std::span<const double> v_delta, double alpha,
                       const GridField& u0, const StackedGradientField& w0,
                       const Constraint& c);

} // namespace pdtv
