#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pdtv/grid.hpp"

namespace pdtv {

/// Forward map with an exact algebraic adjoint. Handles are immutable
/// after construction and safe to share across concurrent solver runs.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual const GridSpec& domain() const = 0;
    virtual std::size_t range_size() const = 0;
    virtual std::string_view backend() const = 0;

    virtual std::vector<double> apply(const GridField& u) const = 0;
    virtual GridField adjoint(std::span<const double> v) const = 0;

    void check_domain(const GridField& u) const; // throws shape_error
    void check_range(std::span<const double> v) const;
};

/// Forward differences along every axis, replicate (Neumann) boundary:
/// the last slice of each component is zero. Spacing is not applied;
/// D is the pure difference operator.
StackedGradientField gradient(const GridField& u);

/// Exact algebraic adjoint of gradient (negative divergence with the
/// matching boundary handling): <Du, w> == <u, D^T w> to rounding.
GridField gradient_adjoint(const StackedGradientField& w);

/// M x N row-major dense matrix acting on flattened grid values.
class DenseMatrixOperator final : public LinearOperator {
public:
    DenseMatrixOperator(GridSpec domain, std::size_t rows,
                        std::vector<double> entries);

    /// Plain-text format: first line "M N", then M rows of N reals.
    /// The pre-image is treated as a 1-D grid of N samples unless a
    /// domain spec is supplied.
    static DenseMatrixOperator load_text(const std::string& path);
    static DenseMatrixOperator load_text(const std::string& path,
                                         GridSpec domain);
    void save_text(const std::string& path) const;

    static DenseMatrixOperator identity_matrix(GridSpec domain);

    const GridSpec& domain() const override { return domain_; }
    std::size_t range_size() const override { return rows_; }
    std::string_view backend() const override { return "dense-matrix"; }

    std::vector<double> apply(const GridField& u) const override;
    GridField adjoint(std::span<const double> v) const override;

    std::size_t cols() const { return cols_; }
    double entry(std::size_t r, std::size_t c) const {
        return entries_[r * cols_ + c];
    }

private:
    GridSpec domain_;
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> entries_;
};

/// T = I without the O(N^2) storage; the denoising forward model.
class IdentityOperator final : public LinearOperator {
public:
    explicit IdentityOperator(GridSpec domain);

    const GridSpec& domain() const override { return domain_; }
    std::size_t range_size() const override { return domain_.size(); }
    std::string_view backend() const override { return "identity"; }

    std::vector<double> apply(const GridField& u) const override;
    GridField adjoint(std::span<const double> v) const override;

private:
    GridSpec domain_;
};

struct OperatorNormEstimate {
    double value = 0.0;
    int iterations_used = 0;
    bool converged = false;
};

/// Power iteration on T^T T from a deterministic all-ones seed; falls
/// back to a seeded pseudo-random vector when the seed happens to lie
/// in the kernel. Converged means successive Rayleigh quotients agree
/// to the relative tolerance.
OperatorNormEstimate estimate_operator_norm(const LinearOperator& op,
                                            int max_iters = 200,
                                            double tol = 1e-8);

} // namespace pdtv
