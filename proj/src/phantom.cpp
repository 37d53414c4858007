#include "unetsurv/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unetsurv::phantom {

namespace {

// Channel construction constants. CT-like values live in HU-ish units well
// inside the [-500, 200] clip range; PET-like values in SUV-ish units.
constexpr float kCtBackground = -80.f;
constexpr float kCtTumorContrast = 120.f;
constexpr float kCtVesselContrast = 60.f;
constexpr float kPetBackground = 0.5f;
constexpr float kPetTumorContrast = 8.f;

struct Ellipsoid {
    double cx, cy, cz;
    double rx, ry, rz;
    bool contains(double x, double y, double z) const {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry, dz = (z - cz) / rz;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

// Low-frequency value noise in [-1, 1]: a coarse random lattice sampled with
// trilinear interpolation.
class SmoothField {
public:
    SmoothField(const std::array<std::uint32_t, 3>& dims, int cell, Rng& rng) : cell_(cell) {
        for (int a = 0; a < 3; ++a) grid_dims_[a] = dims[a] / cell + 2;
        grid_.resize(static_cast<std::size_t>(grid_dims_[0]) * grid_dims_[1] * grid_dims_[2]);
        for (double& g : grid_) g = rng.uniform(-1.0, 1.0);
    }

    double at(double x, double y, double z) const {
        const double gx = x / cell_, gy = y / cell_, gz = z / cell_;
        const std::uint32_t x0 = static_cast<std::uint32_t>(gx);
        const std::uint32_t y0 = static_cast<std::uint32_t>(gy);
        const std::uint32_t z0 = static_cast<std::uint32_t>(gz);
        const double fx = gx - x0, fy = gy - y0, fz = gz - z0;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                    acc += w * grid_[idx(x0 + dx, y0 + dy, z0 + dz)];
                }
        return acc;
    }

private:
    std::size_t idx(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return (static_cast<std::size_t>(z) * grid_dims_[1] + y) * grid_dims_[0] + x;
    }
    int cell_;
    std::array<std::uint32_t, 3> grid_dims_;
    std::vector<double> grid_;
};

struct Cylinder {
    double px, py, pz;  // point on axis
    double dx, dy, dz;  // unit direction
    double radius;
    double dist(double x, double y, double z) const {
        const double vx = x - px, vy = y - py, vz = z - pz;
        const double t = vx * dx + vy * dy + vz * dz;
        const double ox = vx - t * dx, oy = vy - t * dy, oz = vz - t * dz;
        return std::sqrt(ox * ox + oy * oy + oz * oz);
    }
};

void box_blur3(vol::Volume& v) {
    // 3-wide box filter per axis with replicated borders.
    vol::Volume tmp = v;
    const long nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    const auto clampi = [](long i, long n) { return std::min(std::max(i, 0L), n - 1); };
    for (int axis = 0; axis < 3; ++axis) {
        for (long z = 0; z < nz; ++z)
            for (long y = 0; y < ny; ++y)
                for (long x = 0; x < nx; ++x) {
                    double acc = 0.0;
                    for (int d = -1; d <= 1; ++d) {
                        long sx = x, sy = y, sz = z;
                        if (axis == 0) sx = clampi(x + d, nx);
                        if (axis == 1) sy = clampi(y + d, ny);
                        if (axis == 2) sz = clampi(z + d, nz);
                        acc += tmp.at(static_cast<std::uint32_t>(sx), static_cast<std::uint32_t>(sy),
                                      static_cast<std::uint32_t>(sz));
                    }
                    v.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                         static_cast<std::uint32_t>(z)) = static_cast<float>(acc / 3.0);
                }
        tmp = v;
    }
}

vol::Volume blank(const std::array<std::uint32_t, 3>& dims, vol::Modality m, float fill) {
    vol::Volume v;
    v.dims = dims;
    v.spacing = {1.f, 1.f, 1.f};
    v.modality = m;
    v.voxels.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], fill);
    return v;
}

double ellipsoid_volume(double rx, double ry, double rz) {
    return 4.0 / 3.0 * 3.14159265358979323846 * rx * ry * rz;
}

}  // namespace

void validate(const PhantomSpec& spec) {
    const std::uint32_t min_dim = std::min({spec.dims[0], spec.dims[1], spec.dims[2]});
    if (min_dim == 0) throw std::invalid_argument("phantom: dims must be positive");
    if (!(spec.radius_min > 0.f) || spec.radius_min > spec.radius_max ||
        !(spec.radius_max < static_cast<float>(min_dim) / 2.f))
        throw std::invalid_argument("phantom: need 0 < radius_min <= radius_max < min(dims)/2");
    if (spec.heterogeneity < 0.f || spec.heterogeneity > 1.f)
        throw std::invalid_argument("phantom: heterogeneity must be in [0,1]");
    if (spec.vessel_count < 0) throw std::invalid_argument("phantom: vessel_count must be >= 0");
    if (spec.noise_sigma < 0.f) throw std::invalid_argument("phantom: noise_sigma must be >= 0");
}

PhantomCase generate_case(const PhantomSpec& spec, int case_id) {
    validate(spec);
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(case_id)));

    PhantomCase c;
    c.case_id = case_id;

    Ellipsoid tumor;
    tumor.rx = rng.uniform(spec.radius_min, spec.radius_max);
    tumor.ry = rng.uniform(spec.radius_min, spec.radius_max);
    tumor.rz = rng.uniform(spec.radius_min, spec.radius_max);
    if (spec.radius_min == spec.radius_max)
        tumor.rx = tumor.ry = tumor.rz = spec.radius_min;
    double center[3];
    for (int a = 0; a < 3; ++a) {
        const double half = spec.dims[a] / 2.0;
        const double slack = std::max(0.0, half - spec.radius_max - 1.0);
        center[a] = half + std::floor(rng.uniform(-slack / 2.0, slack / 2.0));
    }
    tumor.cx = center[0];
    tumor.cy = center[1];
    tumor.cz = center[2];

    c.heterogeneity = spec.heterogeneity * rng.uniform();
    SmoothField texture(spec.dims, 4, rng);

    std::vector<Cylinder> vessels;
    for (int i = 0; i < spec.vessel_count; ++i) {
        Cylinder cyl;
        // Axis point biased to the central half so vessels pass near the tumor.
        cyl.px = rng.uniform(spec.dims[0] * 0.25, spec.dims[0] * 0.75);
        cyl.py = rng.uniform(spec.dims[1] * 0.25, spec.dims[1] * 0.75);
        cyl.pz = rng.uniform(spec.dims[2] * 0.25, spec.dims[2] * 0.75);
        double dx = rng.normal(), dy = rng.normal(), dz = rng.normal();
        const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (norm < 1e-9) {
            dx = 1;
            dy = dz = 0;
        } else {
            dx /= norm;
            dy /= norm;
            dz /= norm;
        }
        cyl.dx = dx;
        cyl.dy = dy;
        cyl.dz = dz;
        cyl.radius = rng.uniform(0.8, 1.6);
        vessels.push_back(cyl);
    }

    c.mask = blank(spec.dims, vol::Modality::mask, 0.f);
    c.ct = blank(spec.dims, vol::Modality::ct, kCtBackground);
    c.pet = blank(spec.dims, vol::Modality::pet, 0.f);

    std::size_t tumor_voxels = 0;
    for (std::uint32_t z = 0; z < spec.dims[2]; ++z)
        for (std::uint32_t y = 0; y < spec.dims[1]; ++y)
            for (std::uint32_t x = 0; x < spec.dims[0]; ++x) {
                const bool inside = tumor.contains(x, y, z);
                if (inside) {
                    c.mask.at(x, y, z) = 1.f;
                    ++tumor_voxels;
                    double value = kCtBackground + kCtTumorContrast;
                    value += c.heterogeneity * 0.5 * kCtTumorContrast * texture.at(x, y, z);
                    c.ct.at(x, y, z) = static_cast<float>(value);
                } else {
                    for (const Cylinder& cyl : vessels)
                        if (cyl.dist(x, y, z) < cyl.radius) {
                            c.ct.at(x, y, z) = kCtBackground + kCtVesselContrast;
                            break;
                        }
                }
            }
    c.tumor_volume = static_cast<double>(tumor_voxels);

    // PET-like uptake: smoothed mask, scaled, on a low constant background.
    vol::Volume uptake = c.mask;
    uptake.modality = vol::Modality::pet;
    box_blur3(uptake);
    box_blur3(uptake);
    for (std::size_t i = 0; i < uptake.voxels.size(); ++i)
        c.pet.voxels[i] = kPetBackground + kPetTumorContrast * uptake.voxels[i];

    if (spec.noise_sigma > 0.f) {
        const double ct_sigma = spec.noise_sigma * kCtTumorContrast;
        const double pet_sigma = spec.noise_sigma * kPetTumorContrast;
        for (std::size_t i = 0; i < c.ct.voxels.size(); ++i)
            c.ct.voxels[i] += static_cast<float>(rng.normal(0.0, ct_sigma));
        for (std::size_t i = 0; i < c.pet.voxels.size(); ++i)
            c.pet.voxels[i] += static_cast<float>(rng.normal(0.0, pet_sigma));
    }
    const vol::ClipRange pet_range = vol::default_clip_range(vol::Modality::pet);
    for (float& w : c.pet.voxels) w = std::min(std::max(w, pet_range.lo), pet_range.hi);

    return c;
}

int assign_survival(const PhantomSpec& spec, double tumor_volume, double heterogeneity,
                    const SurvivalCoeffs& coeffs, Rng& rng) {
    if (!std::isfinite(coeffs.a0) || !std::isfinite(coeffs.a1) || !std::isfinite(coeffs.a2))
        throw std::invalid_argument("assign_survival: coefficients must be finite");

    const double v_lo = ellipsoid_volume(spec.radius_min, spec.radius_min, spec.radius_min);
    const double v_hi = ellipsoid_volume(spec.radius_max, spec.radius_max, spec.radius_max);
    double vnorm = 0.0;
    if (v_hi > v_lo)
        vnorm = std::clamp(2.0 * (tumor_volume - v_lo) / (v_hi - v_lo) - 1.0, -1.0, 1.0);
    double hnorm = 0.0;
    if (spec.heterogeneity > 0.f)
        hnorm = std::clamp(2.0 * heterogeneity / spec.heterogeneity - 1.0, -1.0, 1.0);

    const double score = coeffs.a0 + coeffs.a1 * vnorm + coeffs.a2 * hnorm;
    const double p_dead = 1.0 / (1.0 + std::exp(-score));
    return rng.bernoulli(p_dead) ? 0 : 1;
}

std::vector<PhantomCase> generate_cohort(const PhantomSpec& spec, int n,
                                         const SurvivalCoeffs& coeffs) {
    if (n <= 0) throw std::invalid_argument("generate_cohort: n must be positive");
    std::vector<PhantomCase> cohort;
    cohort.reserve(static_cast<std::size_t>(n));
    for (int id = 0; id < n; ++id) {
        PhantomCase c = generate_case(spec, id);
        Rng label_rng(derive_seed(spec.seed ^ 0xa5a5a5a5deadbeefULL, static_cast<std::uint64_t>(id)));
        c.survival_label = assign_survival(spec, c.tumor_volume, c.heterogeneity, coeffs, label_rng);
        cohort.push_back(std::move(c));
    }
    return cohort;
}

}  // namespace unetsurv::phantom
