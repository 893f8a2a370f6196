#include "pdtv/grid.hpp"

#include <cmath>
#include <string>

#include "pdtv/errors.hpp"

namespace pdtv {

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t a = shape.size(); a-- > 1;)
        strides[a - 1] = strides[a] * shape[a];
    return strides;
}

GridSpec GridSpec::unit(Shape shape) {
    return {std::move(shape), {}};
}

std::size_t GridSpec::size() const { return shape_product(shape); }

void GridSpec::validate() const {
    if (shape.empty())
        throw shape_error("grid spec has no axes");
    for (auto s : shape)
        if (s == 0) throw shape_error("grid spec has a zero-sized axis");
    if (!spacing.empty() && spacing.size() != shape.size())
        throw shape_error("grid spec spacing count does not match axis count");
    for (auto h : spacing)
        if (!(h > 0.0) || !std::isfinite(h))
            throw shape_error("grid spec spacing must be positive and finite");
}

namespace {

std::vector<double> effective_spacing(const GridSpec& spec) {
    if (!spec.spacing.empty()) return spec.spacing;
    return std::vector<double>(spec.shape.size(), 1.0);
}

} // namespace

GridField GridField::zeros(const GridSpec& spec) {
    spec.validate();
    return {spec.shape, effective_spacing(spec),
            std::vector<double>(spec.size(), 0.0)};
}

GridField GridField::constant(const GridSpec& spec, double value) {
    spec.validate();
    return {spec.shape, effective_spacing(spec),
            std::vector<double>(spec.size(), value)};
}

std::size_t GridField::size() const { return shape_product(shape); }

void GridField::validate() const {
    GridSpec{shape, spacing}.validate();
    if (values.size() != size())
        throw shape_error("grid field holds " + std::to_string(values.size()) +
                          " values for a grid of " + std::to_string(size()));
    if (!vec::all_finite(values))
        throw shape_error("grid field contains non-finite values");
}

StackedGradientField StackedGradientField::zeros(const Shape& shape) {
    StackedGradientField w;
    w.shape = shape;
    w.components.assign(shape.size(),
                        std::vector<double>(shape_product(shape), 0.0));
    return w;
}

std::size_t StackedGradientField::size() const { return shape_product(shape); }

void StackedGradientField::validate() const {
    if (shape.empty())
        throw shape_error("gradient field has no axes");
    if (components.size() != shape.size())
        throw shape_error("gradient field has " +
                          std::to_string(components.size()) +
                          " components for " + std::to_string(shape.size()) +
                          " axes");
    for (const auto& c : components) {
        if (c.size() != size())
            throw shape_error("gradient field component length mismatch");
        if (!vec::all_finite(c))
            throw shape_error("gradient field contains non-finite values");
    }
}

namespace vec {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

void axpy(double s, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

std::vector<double> sub(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

double dot(const StackedGradientField& a, const StackedGradientField& b) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.components.size(); ++c)
        s += dot(std::span<const double>(a.components[c]),
                 std::span<const double>(b.components[c]));
    return s;
}

double norm2(const StackedGradientField& a) {
    double s = 0.0;
    for (const auto& c : a.components) s += dot(c, c);
    return std::sqrt(s);
}

} // namespace vec

} // namespace pdtv
