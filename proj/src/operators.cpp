#include "pdtv/operators.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pdtv/errors.hpp"
#include "pdtv/rng.hpp"

namespace pdtv {

void LinearOperator::check_domain(const GridField& u) const {
    if (u.shape != domain().shape)
        throw shape_error("field shape does not match operator domain");
    if (u.values.size() != u.size())
        throw shape_error("field value count does not match its shape");
}

void LinearOperator::check_range(std::span<const double> v) const {
    if (v.size() != range_size())
        throw shape_error("measurement length " + std::to_string(v.size()) +
                          " does not match operator range " +
                          std::to_string(range_size()));
}

StackedGradientField gradient(const GridField& u) {
    u.validate();
    const std::size_t axes = u.num_axes();
    if (axes < 1 || axes > 3)
        throw shape_error("gradient: unsupported dimension " +
                          std::to_string(axes));
    const auto strides = row_major_strides(u.shape);
    const std::size_t n = u.size();
    auto out = StackedGradientField::zeros(u.shape);
    for (std::size_t a = 0; a < axes; ++a) {
        const std::size_t stride = strides[a];
        const std::size_t extent = u.shape[a];
        auto& comp = out.components[a];
        for (std::size_t idx = 0; idx < n; ++idx) {
            const std::size_t ia = (idx / stride) % extent;
            comp[idx] = (ia + 1 < extent)
                            ? u.values[idx + stride] - u.values[idx]
                            : 0.0;
        }
    }
    return out;
}

GridField gradient_adjoint(const StackedGradientField& w) {
    w.validate();
    const std::size_t axes = w.num_axes();
    if (axes < 1 || axes > 3)
        throw shape_error("gradient_adjoint: unsupported dimension " +
                          std::to_string(axes));
    const auto strides = row_major_strides(w.shape);
    const std::size_t n = w.size();
    auto out = GridField::zeros(GridSpec::unit(w.shape));
    for (std::size_t a = 0; a < axes; ++a) {
        const std::size_t stride = strides[a];
        const std::size_t extent = w.shape[a];
        const auto& comp = w.components[a];
        for (std::size_t idx = 0; idx < n; ++idx) {
            const std::size_t ia = (idx / stride) % extent;
            double acc = 0.0;
            if (ia > 0) acc += comp[idx - stride];
            if (ia + 1 < extent) acc -= comp[idx];
            out.values[idx] += acc;
        }
    }
    return out;
}

DenseMatrixOperator::DenseMatrixOperator(GridSpec domain, std::size_t rows,
                                         std::vector<double> entries)
    : domain_(std::move(domain)), rows_(rows), cols_(domain_.size()),
      entries_(std::move(entries)) {
    domain_.validate();
    if (rows_ == 0) throw shape_error("dense operator with zero rows");
    if (entries_.size() != rows_ * cols_)
        throw shape_error("dense operator entry count does not match M*N");
}

DenseMatrixOperator DenseMatrixOperator::load_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open matrix file: " + path);
    std::size_t rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows == 0 || cols == 0)
        throw io_error("malformed matrix header in " + path);
    std::vector<double> entries(rows * cols);
    for (auto& e : entries)
        if (!(in >> e))
            throw io_error("matrix file " + path + " ended early");
    return DenseMatrixOperator(GridSpec::unit({cols}), rows,
                               std::move(entries));
}

DenseMatrixOperator DenseMatrixOperator::load_text(const std::string& path,
                                                   GridSpec domain) {
    auto op = load_text(path);
    domain.validate();
    if (domain.size() != op.cols_)
        throw shape_error("matrix in " + path + " has " +
                          std::to_string(op.cols_) +
                          " columns, domain asks for " +
                          std::to_string(domain.size()));
    return DenseMatrixOperator(std::move(domain), op.rows_,
                               std::move(op.entries_));
}

void DenseMatrixOperator::save_text(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write matrix file: " + path);
    out << rows_ << ' ' << cols_ << '\n';
    out.precision(17);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            if (c) out << ' ';
            out << entries_[r * cols_ + c];
        }
        out << '\n';
    }
}

DenseMatrixOperator DenseMatrixOperator::identity_matrix(GridSpec domain) {
    const std::size_t n = domain.size();
    std::vector<double> entries(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) entries[i * n + i] = 1.0;
    return DenseMatrixOperator(std::move(domain), n, std::move(entries));
}

std::vector<double> DenseMatrixOperator::apply(const GridField& u) const {
    check_domain(u);
    std::vector<double> out(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        const double* row = entries_.data() + r * cols_;
        double s = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) s += row[c] * u.values[c];
        out[r] = s;
    }
    return out;
}

GridField DenseMatrixOperator::adjoint(std::span<const double> v) const {
    check_range(v);
    auto out = GridField::zeros(domain_);
    for (std::size_t r = 0; r < rows_; ++r) {
        const double* row = entries_.data() + r * cols_;
        const double vr = v[r];
        for (std::size_t c = 0; c < cols_; ++c) out.values[c] += row[c] * vr;
    }
    return out;
}

IdentityOperator::IdentityOperator(GridSpec domain)
    : domain_(std::move(domain)) {
    domain_.validate();
}

std::vector<double> IdentityOperator::apply(const GridField& u) const {
    check_domain(u);
    return u.values;
}

GridField IdentityOperator::adjoint(std::span<const double> v) const {
    check_range(v);
    auto out = GridField::zeros(domain_);
    out.values.assign(v.begin(), v.end());
    return out;
}

namespace {

// One application of T^T T, returning <x, T^T T x> for unit x.
double normal_map(const LinearOperator& op, const std::vector<double>& x,
                  std::vector<double>& out) {
    GridField xf{op.domain().shape, op.domain().spacing, x};
    if (xf.spacing.empty())
        xf.spacing.assign(xf.shape.size(), 1.0);
    const auto tx = op.apply(xf);
    out = op.adjoint(tx).values;
    return vec::dot(tx, tx);
}

} // namespace

OperatorNormEstimate estimate_operator_norm(const LinearOperator& op,
                                            int max_iters, double tol) {
    if (max_iters < 1)
        throw parameter_error("operator norm estimation needs max_iters >= 1");
    if (!(tol > 0.0))
        throw parameter_error("operator norm estimation needs tol > 0");

    const std::size_t n = op.domain().size();
    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    std::vector<double> next;

    OperatorNormEstimate est;
    double rayleigh_prev = -1.0;
    bool reseeded = false;
    for (int it = 0; it < max_iters; ++it) {
        const double rayleigh = normal_map(op, x, next);
        est.iterations_used = it + 1;
        const double norm_next = vec::norm2(next);
        if (norm_next == 0.0) {
            if (!reseeded) {
                // the all-ones seed sits in ker(T^T T); restart from a
                // deterministic pseudo-random direction
                reseeded = true;
                Sampler sampler(0x706f776572ULL);
                x = sampler.normal_vector(n);
                const double nx = vec::norm2(x);
                for (auto& xi : x) xi /= nx;
                rayleigh_prev = -1.0;
                continue;
            }
            est.value = 0.0;
            est.converged = true;
            return est;
        }
        est.value = std::sqrt(rayleigh);
        if (rayleigh_prev >= 0.0 &&
            std::abs(rayleigh - rayleigh_prev) <= tol * std::abs(rayleigh)) {
            est.converged = true;
            return est;
        }
        rayleigh_prev = rayleigh;
        for (std::size_t i = 0; i < n; ++i) x[i] = next[i] / norm_next;
    }
    return est;
}

} // namespace pdtv
