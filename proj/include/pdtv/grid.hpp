#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pdtv {

using Shape = std::vector<std::size_t>;

/// Shape plus physical spacing of a regular grid; carried as metadata,
/// never implied by storage.
struct GridSpec {
    Shape shape;
    std::vector<double> spacing; // one entry per axis, length units

    static GridSpec unit(Shape shape); // spacing 1.0 on every axis

    std::size_t num_axes() const { return shape.size(); }
    std::size_t size() const;
    void validate() const;
    bool operator==(const GridSpec&) const = default;
};

/// Scalar field on a regular 1-/2-/3-D grid, flat row-major storage
/// (last axis fastest).
struct GridField {
    Shape shape;
    std::vector<double> spacing;
    std::vector<double> values;

    static GridField zeros(const GridSpec& spec);
    static GridField constant(const GridSpec& spec, double value);

    GridSpec spec() const { return {shape, spacing}; }
    std::size_t num_axes() const { return shape.size(); }
    std::size_t size() const;
    void validate() const; // throws shape_error on any invariant violation
};

/// One forward-difference component per axis, each stored like the
/// source field.
struct StackedGradientField {
    Shape shape;
    std::vector<std::vector<double>> components;

    static StackedGradientField zeros(const Shape& shape);

    std::size_t num_axes() const { return shape.size(); }
    std::size_t size() const;
    void validate() const;
};

std::size_t shape_product(const Shape& shape);

/// Row-major strides (stride of the last axis is 1).
std::vector<std::size_t> row_major_strides(const Shape& shape);

namespace vec {

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// y += s * x
void axpy(double s, std::span<const double> x, std::span<double> y);

std::vector<double> sub(std::span<const double> a, std::span<const double> b);

double dot(const StackedGradientField& a, const StackedGradientField& b);
double norm2(const StackedGradientField& a);

} // namespace vec

} // namespace pdtv
