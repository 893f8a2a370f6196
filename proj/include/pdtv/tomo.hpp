#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pdtv/grid.hpp"
#include "pdtv/operators.hpp"

namespace pdtv {

/// Parallel-beam sampling pattern: angles in [0, pi), detectors centered
/// on the rotation axis. Bin index = angle * num_detectors + detector.
struct SinogramGeometry {
    std::size_t num_angles = 0;
    std::size_t num_detectors = 0;
    std::vector<double> angles; // radians, strictly increasing in [0, pi)
    double detector_spacing = 1.0;

    static SinogramGeometry uniform(std::size_t num_angles,
                                    std::size_t num_detectors,
                                    double detector_spacing = 1.0);

    std::size_t bin_count() const { return num_angles * num_detectors; }
    void validate() const;
};

/// Straight-line integrals of a 2-D image over the sinogram pattern,
/// Joseph's method: unit steps along the dominant axis with linear
/// interpolation across it. The image is centered at the origin;
/// samples outside the grid contribute zero. Forward and adjoint use
/// the same weights, so the pair is algebraically exact.
class RadonTransform2D final : public LinearOperator {
public:
    RadonTransform2D(GridSpec domain, SinogramGeometry geometry);

    const GridSpec& domain() const override { return domain_; }
    std::size_t range_size() const override { return geometry_.bin_count(); }
    std::string_view backend() const override { return "radon2d"; }

    std::vector<double> apply(const GridField& u) const override;
    GridField adjoint(std::span<const double> v) const override;

    const SinogramGeometry& geometry() const { return geometry_; }

private:
    template <class Visit>
    void trace_bin(std::size_t angle, std::size_t det, Visit&& visit) const;

    GridSpec domain_;
    SinogramGeometry geometry_;
};

/// Transmitter/receiver endpoints plus the measured pairs.
struct RayGeometry3D {
    std::vector<std::array<double, 3>> transmitters; // above the grid
    std::vector<std::array<double, 3>> receivers;    // on the grid floor
    std::vector<std::pair<std::size_t, std::size_t>> rays;

    void validate() const;
    /// Additionally checks that every segment meets the grid box.
    void validate_against(const GridSpec& grid) const;
};

/// Line integrals along transmitter-receiver segments through a 3-D
/// volume, Siddon's parametric traversal: per voxel the exact chord
/// length. The volume box has its corner at the origin, extents
/// shape * spacing; the floor is z = 0.
class RayTransform3D final : public LinearOperator {
public:
    RayTransform3D(GridSpec domain, RayGeometry3D geometry);

    const GridSpec& domain() const override { return domain_; }
    std::size_t range_size() const override { return geometry_.rays.size(); }
    std::string_view backend() const override { return "ray3d"; }

    std::vector<double> apply(const GridField& u) const override;
    GridField adjoint(std::span<const double> v) const override;

    const RayGeometry3D& geometry() const { return geometry_; }

    /// Voxels traversed by one ray with positive chord length.
    std::vector<std::size_t> traversed_voxels(std::size_t ray) const;

    /// Sum of chord lengths of one ray (equals the clipped segment).
    double traversal_length(std::size_t ray) const;

private:
    template <class Visit>
    void trace_ray(std::size_t ray, Visit&& visit) const;

    GridSpec domain_;
    RayGeometry3D geometry_;
};

/// Satellite/ground-station scene: stations uniform on the grid floor,
/// satellites on a hemisphere above the footprint center, each station
/// paired with rays_per_station distinct satellites. Deterministic in
/// the seed.
RayGeometry3D make_gps_scene(const GridSpec& grid, std::size_t num_satellites,
                             std::size_t num_stations,
                             std::size_t rays_per_station,
                             std::uint64_t seed);

/// Measured data with its known noise magnitude.
struct MeasurementSet {
    std::vector<double> values;
    double delta = 0.0;          // ||v_true - v_delta||, 0 when clean
    std::string geometry_tag;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adds a seeded Gaussian perturbation rescaled so that the noise norm
/// equals noise_fraction * ||v_clean|| exactly.
MeasurementSet add_noise(std::span<const double> v_clean,
                         double noise_fraction, std::uint64_t seed,
                         std::string geometry_tag = {});

void to_json(nlohmann::json& j, const SinogramGeometry& g);
void from_json(const nlohmann::json& j, SinogramGeometry& g);
void to_json(nlohmann::json& j, const RayGeometry3D& g);
void from_json(const nlohmann::json& j, RayGeometry3D& g);

/// Writes <path_base>.csv with header "index,value" and a JSON sidecar
/// <path_base>.json holding delta, seed and geometry_tag.
void save_measurements(const std::string& path_base, const MeasurementSet& ms);
MeasurementSet load_measurements(const std::string& path_base);

} // namespace pdtv
