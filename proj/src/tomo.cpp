#include "pdtv/tomo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "pdtv/errors.hpp"
#include "pdtv/rng.hpp"

namespace pdtv {

SinogramGeometry SinogramGeometry::uniform(std::size_t num_angles,
                                           std::size_t num_detectors,
                                           double detector_spacing) {
    SinogramGeometry g;
    g.num_angles = num_angles;
    g.num_detectors = num_detectors;
    g.detector_spacing = detector_spacing;
    g.angles.resize(num_angles);
    for (std::size_t a = 0; a < num_angles; ++a)
        g.angles[a] = std::numbers::pi * static_cast<double>(a) /
                      static_cast<double>(num_angles);
    g.validate();
    return g;
}

void SinogramGeometry::validate() const {
    if (num_angles < 1 || num_detectors < 1)
        throw parameter_error("sinogram geometry needs angles and detectors");
    if (angles.size() != num_angles)
        throw parameter_error("sinogram geometry angle count mismatch");
    if (!(detector_spacing > 0.0))
        throw parameter_error("detector spacing must be positive");
    for (std::size_t a = 0; a < num_angles; ++a) {
        if (angles[a] < 0.0 || angles[a] >= std::numbers::pi)
            throw parameter_error("sinogram angles must lie in [0, pi)");
        if (a > 0 && !(angles[a] > angles[a - 1]))
            throw parameter_error("sinogram angles must be strictly increasing");
    }
}

RadonTransform2D::RadonTransform2D(GridSpec domain, SinogramGeometry geometry)
    : domain_(std::move(domain)), geometry_(std::move(geometry)) {
    domain_.validate();
    geometry_.validate();
    if (domain_.num_axes() != 2)
        throw shape_error("radon2d needs a 2-D pre-image grid");
    if (domain_.spacing.empty())
        domain_.spacing.assign(2, 1.0);
}

// Visits (pixel index, weight) pairs of one sinogram bin. The ray for
// angle theta and detector offset t is p(s) = t*(cos,sin) + s*(-sin,cos);
// stepping runs over pixel centers of the axis the ray is most aligned
// with, weights interpolate linearly across it and carry the step length.
template <class Visit>
void RadonTransform2D::trace_bin(std::size_t angle, std::size_t det,
                                 Visit&& visit) const {
    const std::size_t n0 = domain_.shape[0];
    const std::size_t n1 = domain_.shape[1];
    const double h0 = domain_.spacing[0];
    const double h1 = domain_.spacing[1];
    const double theta = geometry_.angles[angle];
    const double wx = std::cos(theta), wy = std::sin(theta);
    const double dx = -wy, dy = wx;
    const double t =
        (static_cast<double>(det) -
         (static_cast<double>(geometry_.num_detectors) - 1.0) / 2.0) *
        geometry_.detector_spacing;

    const double c0 = (static_cast<double>(n0) - 1.0) / 2.0;
    const double c1 = (static_cast<double>(n1) - 1.0) / 2.0;

    if (std::abs(dx) >= std::abs(dy)) {
        // step over axis-0 pixel centers, interpolate along axis 1
        const double step_len = h0 / std::abs(dx);
        for (std::size_t i = 0; i < n0; ++i) {
            const double x = (static_cast<double>(i) - c0) * h0;
            const double s = (x - t * wx) / dx;
            const double y = t * wy + s * dy;
            const double g = y / h1 + c1;
            const double fl = std::floor(g);
            const double frac = g - fl;
            const auto j = static_cast<std::ptrdiff_t>(fl);
            if (j >= 0 && j < static_cast<std::ptrdiff_t>(n1))
                visit(i * n1 + static_cast<std::size_t>(j),
                      (1.0 - frac) * step_len);
            if (j + 1 >= 0 && j + 1 < static_cast<std::ptrdiff_t>(n1) &&
                frac != 0.0)
                visit(i * n1 + static_cast<std::size_t>(j + 1),
                      frac * step_len);
        }
    } else {
        const double step_len = h1 / std::abs(dy);
        for (std::size_t j = 0; j < n1; ++j) {
            const double y = (static_cast<double>(j) - c1) * h1;
            const double s = (y - t * wy) / dy;
            const double x = t * wx + s * dx;
            const double g = x / h0 + c0;
            const double fl = std::floor(g);
            const double frac = g - fl;
            const auto i = static_cast<std::ptrdiff_t>(fl);
            if (i >= 0 && i < static_cast<std::ptrdiff_t>(n0))
                visit(static_cast<std::size_t>(i) * n1 + j,
                      (1.0 - frac) * step_len);
            if (i + 1 >= 0 && i + 1 < static_cast<std::ptrdiff_t>(n0) &&
                frac != 0.0)
                visit(static_cast<std::size_t>(i + 1) * n1 + j,
                      frac * step_len);
        }
    }
}

std::vector<double> RadonTransform2D::apply(const GridField& u) const {
    check_domain(u);
    std::vector<double> sino(range_size(), 0.0);
    for (std::size_t a = 0; a < geometry_.num_angles; ++a)
        for (std::size_t d = 0; d < geometry_.num_detectors; ++d) {
            double acc = 0.0;
            trace_bin(a, d, [&](std::size_t pix, double w) {
                acc += w * u.values[pix];
            });
            sino[a * geometry_.num_detectors + d] = acc;
        }
    return sino;
}

GridField RadonTransform2D::adjoint(std::span<const double> v) const {
    check_range(v);
    auto out = GridField::zeros(domain_);
    for (std::size_t a = 0; a < geometry_.num_angles; ++a)
        for (std::size_t d = 0; d < geometry_.num_detectors; ++d) {
            const double bin = v[a * geometry_.num_detectors + d];
            if (bin == 0.0) continue;
            trace_bin(a, d, [&](std::size_t pix, double w) {
                out.values[pix] += w * bin;
            });
        }
    return out;
}

void RayGeometry3D::validate() const {
    if (rays.empty())
        throw parameter_error("ray geometry holds no rays");
    for (const auto& [ti, ri] : rays) {
        if (ti >= transmitters.size())
            throw parameter_error("ray references a missing transmitter");
        if (ri >= receivers.size())
            throw parameter_error("ray references a missing receiver");
    }
}

namespace {

struct Segment {
    std::array<double, 3> origin;
    std::array<double, 3> dir; // receiver - transmitter
    double length;
};

// Clips the t in [0,1] parameter range of a segment against the grid
// box; returns false when the segment misses.
bool clip_to_box(const Segment& seg, const std::array<double, 3>& extent,
                 double& t_enter, double& t_exit) {
    t_enter = 0.0;
    t_exit = 1.0;
    for (int a = 0; a < 3; ++a) {
        if (seg.dir[a] == 0.0) {
            if (seg.origin[a] < 0.0 || seg.origin[a] > extent[a]) return false;
            continue;
        }
        double lo = (0.0 - seg.origin[a]) / seg.dir[a];
        double hi = (extent[a] - seg.origin[a]) / seg.dir[a];
        if (lo > hi) std::swap(lo, hi);
        t_enter = std::max(t_enter, lo);
        t_exit = std::min(t_exit, hi);
        if (t_enter >= t_exit) return false;
    }
    return t_enter < t_exit;
}

} // namespace

void RayGeometry3D::validate_against(const GridSpec& grid) const {
    validate();
    grid.validate();
    if (grid.num_axes() != 3)
        throw shape_error("ray geometry validation needs a 3-D grid");
    const auto spacing =
        grid.spacing.empty() ? std::vector<double>(3, 1.0) : grid.spacing;
    const std::array<double, 3> extent = {
        static_cast<double>(grid.shape[0]) * spacing[0],
        static_cast<double>(grid.shape[1]) * spacing[1],
        static_cast<double>(grid.shape[2]) * spacing[2]};
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const auto& a = transmitters[rays[r].first];
        const auto& b = receivers[rays[r].second];
        Segment seg{a,
                    {b[0] - a[0], b[1] - a[1], b[2] - a[2]},
                    0.0};
        double t0, t1;
        if (!clip_to_box(seg, extent, t0, t1))
            throw parameter_error("ray " + std::to_string(r) +
                                  " does not intersect the grid box");
    }
}

RayTransform3D::RayTransform3D(GridSpec domain, RayGeometry3D geometry)
    : domain_(std::move(domain)), geometry_(std::move(geometry)) {
    domain_.validate();
    geometry_.validate();
    if (domain_.num_axes() != 3)
        throw shape_error("ray3d needs a 3-D pre-image grid");
    if (domain_.spacing.empty())
        domain_.spacing.assign(3, 1.0);
}

// Visits (voxel index, chord length) pairs of one ray in increasing
// parameter order; the crossing list makes the ordering deterministic.
template <class Visit>
void RayTransform3D::trace_ray(std::size_t ray, Visit&& visit) const {
    const auto& [ti, ri] = geometry_.rays[ray];
    const auto& a = geometry_.transmitters[ti];
    const auto& b = geometry_.receivers[ri];
    Segment seg{a, {b[0] - a[0], b[1] - a[1], b[2] - a[2]}, 0.0};
    seg.length = std::sqrt(seg.dir[0] * seg.dir[0] + seg.dir[1] * seg.dir[1] +
                           seg.dir[2] * seg.dir[2]);
    if (seg.length == 0.0) return;

    const std::array<double, 3> h = {domain_.spacing[0], domain_.spacing[1],
                                     domain_.spacing[2]};
    const std::array<double, 3> extent = {
        static_cast<double>(domain_.shape[0]) * h[0],
        static_cast<double>(domain_.shape[1]) * h[1],
        static_cast<double>(domain_.shape[2]) * h[2]};

    double t_enter, t_exit;
    if (!clip_to_box(seg, extent, t_enter, t_exit)) return;

    std::vector<double> crossings;
    crossings.reserve(domain_.shape[0] + domain_.shape[1] + domain_.shape[2] +
                      2);
    crossings.push_back(t_enter);
    crossings.push_back(t_exit);
    for (int axis = 0; axis < 3; ++axis) {
        if (seg.dir[axis] == 0.0) continue;
        const auto planes = static_cast<std::ptrdiff_t>(domain_.shape[axis]);
        for (std::ptrdiff_t k = 1; k < planes; ++k) {
            const double t =
                (static_cast<double>(k) * h[axis] - seg.origin[axis]) /
                seg.dir[axis];
            if (t > t_enter && t < t_exit) crossings.push_back(t);
        }
    }
    std::sort(crossings.begin(), crossings.end());

    const auto strides = row_major_strides(domain_.shape);
    for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
        const double t0 = crossings[k];
        const double t1 = crossings[k + 1];
        if (t1 - t0 <= 1e-14) continue;
        const double tm = 0.5 * (t0 + t1);
        std::size_t idx = 0;
        bool inside = true;
        for (int axis = 0; axis < 3; ++axis) {
            const double pos = seg.origin[axis] + tm * seg.dir[axis];
            auto cell = static_cast<std::ptrdiff_t>(std::floor(pos / h[axis]));
            if (cell < 0 ||
                cell >= static_cast<std::ptrdiff_t>(domain_.shape[axis])) {
                inside = false;
                break;
            }
            idx += static_cast<std::size_t>(cell) * strides[axis];
        }
        if (inside) visit(idx, (t1 - t0) * seg.length);
    }
}

std::vector<double> RayTransform3D::apply(const GridField& u) const {
    check_domain(u);
    std::vector<double> out(range_size(), 0.0);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double acc = 0.0;
        trace_ray(r, [&](std::size_t vox, double len) {
            acc += len * u.values[vox];
        });
        out[r] = acc;
    }
    return out;
}

GridField RayTransform3D::adjoint(std::span<const double> v) const {
    check_range(v);
    auto out = GridField::zeros(domain_);
    for (std::size_t r = 0; r < v.size(); ++r) {
        const double val = v[r];
        if (val == 0.0) continue;
        trace_ray(r, [&](std::size_t vox, double len) {
            out.values[vox] += len * val;
        });
    }
    return out;
}

std::vector<std::size_t> RayTransform3D::traversed_voxels(
    std::size_t ray) const {
    if (ray >= geometry_.rays.size())
        throw parameter_error("traversed_voxels: ray index out of range");
    std::vector<std::size_t> out;
    trace_ray(ray, [&](std::size_t vox, double len) {
        if (len > 0.0) out.push_back(vox);
    });
    return out;
}

double RayTransform3D::traversal_length(std::size_t ray) const {
    if (ray >= geometry_.rays.size())
        throw parameter_error("traversal_length: ray index out of range");
    double total = 0.0;
    trace_ray(ray, [&](std::size_t, double len) { total += len; });
    return total;
}

RayGeometry3D make_gps_scene(const GridSpec& grid, std::size_t num_satellites,
                             std::size_t num_stations,
                             std::size_t rays_per_station,
                             std::uint64_t seed) {
    grid.validate();
    if (grid.num_axes() != 3)
        throw shape_error("gps scene needs a 3-D grid");
    if (num_satellites < 1 || num_stations < 1 || rays_per_station < 1)
        throw parameter_error("gps scene counts must be at least 1");
    if (rays_per_station > num_satellites)
        throw parameter_error("rays_per_station exceeds the satellite count");

    const auto spacing =
        grid.spacing.empty() ? std::vector<double>(3, 1.0) : grid.spacing;
    const std::array<double, 3> extent = {
        static_cast<double>(grid.shape[0]) * spacing[0],
        static_cast<double>(grid.shape[1]) * spacing[1],
        static_cast<double>(grid.shape[2]) * spacing[2]};
    const double radius =
        3.0 * std::sqrt(extent[0] * extent[0] + extent[1] * extent[1] +
                        extent[2] * extent[2]);

    Sampler sampler(seed);
    RayGeometry3D scene;
    scene.receivers.reserve(num_stations);
    for (std::size_t s = 0; s < num_stations; ++s)
        scene.receivers.push_back({sampler.uniform(0.05, 0.95) * extent[0],
                                   sampler.uniform(0.05, 0.95) * extent[1],
                                   0.0});
    scene.transmitters.reserve(num_satellites);
    for (std::size_t s = 0; s < num_satellites; ++s) {
        const double azimuth = sampler.uniform(0.0, 2.0 * std::numbers::pi);
        const double elevation =
            sampler.uniform(35.0, 85.0) * std::numbers::pi / 180.0;
        scene.transmitters.push_back(
            {extent[0] / 2.0 + radius * std::cos(elevation) * std::cos(azimuth),
             extent[1] / 2.0 + radius * std::cos(elevation) * std::sin(azimuth),
             radius * std::sin(elevation)});
    }
    scene.rays.reserve(num_stations * rays_per_station);
    for (std::size_t s = 0; s < num_stations; ++s)
        for (auto sat : sampler.pick_distinct(rays_per_station, num_satellites))
            scene.rays.emplace_back(sat, s);
    return scene;
}

void MeasurementSet::validate() const {
    if (!(delta >= 0.0))
        throw parameter_error("measurement delta must be nonnegative");
    if (!vec::all_finite(values))
        throw parameter_error("measurement values contain non-finite entries");
}

MeasurementSet add_noise(std::span<const double> v_clean,
                         double noise_fraction, std::uint64_t seed,
                         std::string geometry_tag) {
    if (!(noise_fraction >= 0.0))
        throw parameter_error("noise_fraction must be nonnegative");
    MeasurementSet ms;
    ms.values.assign(v_clean.begin(), v_clean.end());
    ms.seed = seed;
    ms.geometry_tag = std::move(geometry_tag);
    if (noise_fraction == 0.0) return ms;

    const double clean_norm = vec::norm2(v_clean);
    if (clean_norm == 0.0) return ms;

    Sampler sampler(seed);
    auto xi = sampler.normal_vector(v_clean.size());
    const double xi_norm = vec::norm2(xi);
    const double target = noise_fraction * clean_norm;
    const double scale = target / xi_norm;
    for (std::size_t i = 0; i < ms.values.size(); ++i)
        ms.values[i] += scale * xi[i];
    ms.delta = target;
    return ms;
}

void to_json(nlohmann::json& j, const SinogramGeometry& g) {
    j = nlohmann::json{{"type", "sinogram2d"},
                       {"num_angles", g.num_angles},
                       {"num_detectors", g.num_detectors},
                       {"detector_spacing", g.detector_spacing},
                       {"angles", g.angles}};
}

void from_json(const nlohmann::json& j, SinogramGeometry& g) {
    j.at("num_angles").get_to(g.num_angles);
    j.at("num_detectors").get_to(g.num_detectors);
    j.at("detector_spacing").get_to(g.detector_spacing);
    j.at("angles").get_to(g.angles);
    g.validate();
}

void to_json(nlohmann::json& j, const RayGeometry3D& g) {
    j = nlohmann::json{{"type", "rays3d"},
                       {"transmitters", g.transmitters},
                       {"receivers", g.receivers},
                       {"rays", g.rays}};
}

void from_json(const nlohmann::json& j, RayGeometry3D& g) {
    j.at("transmitters").get_to(g.transmitters);
    j.at("receivers").get_to(g.receivers);
    g.rays.clear();
    for (const auto& pair : j.at("rays"))
        g.rays.emplace_back(pair.at(0).get<std::size_t>(),
                            pair.at(1).get<std::size_t>());
    g.validate();
}

void save_measurements(const std::string& path_base,
                       const MeasurementSet& ms) {
    std::ofstream csv(path_base + ".csv");
    if (!csv) throw io_error("cannot write " + path_base + ".csv");
    csv << "index,value\n";
    csv.precision(17);
    for (std::size_t i = 0; i < ms.values.size(); ++i)
        csv << i << ',' << ms.values[i] << '\n';

    nlohmann::json sidecar{{"delta", ms.delta},
                           {"seed", ms.seed},
                           {"geometry_tag", ms.geometry_tag}};
    std::ofstream js(path_base + ".json");
    if (!js) throw io_error("cannot write " + path_base + ".json");
    js << sidecar.dump(2) << '\n';
}

MeasurementSet load_measurements(const std::string& path_base) {
    std::ifstream csv(path_base + ".csv");
    if (!csv) throw io_error("cannot open " + path_base + ".csv");
    MeasurementSet ms;
    std::string line;
    if (!std::getline(csv, line) || line != "index,value")
        throw io_error("unexpected header in " + path_base + ".csv");
    while (std::getline(csv, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw io_error("malformed row in " + path_base + ".csv");
        ms.values.push_back(std::stod(line.substr(comma + 1)));
    }

    std::ifstream js(path_base + ".json");
    if (!js) throw io_error("cannot open " + path_base + ".json");
    nlohmann::json sidecar;
    js >> sidecar;
    sidecar.at("delta").get_to(ms.delta);
    sidecar.at("seed").get_to(ms.seed);
    sidecar.at("geometry_tag").get_to(ms.geometry_tag);
    ms.validate();
    return ms;
}

} // namespace pdtv
