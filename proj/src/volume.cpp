#include "unetsurv/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace unetsurv::vol {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

float get_f32(const unsigned char* b) {
    std::uint32_t bits = get_u32(b);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

float pad_value(Modality m) {
    return m == Modality::mask ? 0.f : default_clip_range(m).lo;
}

}  // namespace

std::string to_string(Modality m) {
    switch (m) {
        case Modality::ct: return "ct";
        case Modality::pet: return "pet";
        case Modality::mask: return "mask";
    }
    return "ct";
}

Modality modality_from_string(const std::string& s) {
    if (s == "ct") return Modality::ct;
    if (s == "pet") return Modality::pet;
    if (s == "mask") return Modality::mask;
    throw std::invalid_argument("unknown modality: " + s);
}

ClipRange default_clip_range(Modality m) {
    switch (m) {
        case Modality::ct: return {-500.f, 200.f};
        case Modality::pet: return {0.01f, 20.f};
        case Modality::mask: return {0.f, 1.f};
    }
    return {0.f, 1.f};
}

void validate(const Volume& v) {
    if (v.dims[0] == 0 || v.dims[1] == 0 || v.dims[2] == 0)
        throw std::invalid_argument("volume: zero-sized dims");
    if (v.voxels.size() != v.size())
        throw std::invalid_argument("volume: voxel count does not match dims");
    for (float s : v.spacing)
        if (!(s > 0.f)) throw std::invalid_argument("volume: spacing must be positive");
    if (v.modality == Modality::mask) {
        for (float w : v.voxels)
            if (w != 0.f && w != 1.f)
                throw std::invalid_argument("volume: mask voxels must be 0 or 1");
    }
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("VOL1: cannot open " + path.string());

    unsigned char header[32];
    in.read(reinterpret_cast<char*>(header), 32);
    if (in.gcount() != 32) throw std::runtime_error("VOL1: truncated header in " + path.string());
    if (std::memcmp(header, kMagic, 4) != 0)
        throw std::runtime_error("VOL1: bad magic in " + path.string());

    Volume v;
    v.dims = {get_u32(header + 4), get_u32(header + 8), get_u32(header + 12)};
    v.spacing = {get_f32(header + 16), get_f32(header + 20), get_f32(header + 24)};
    if (header[28] > 2) throw std::runtime_error("VOL1: bad modality tag in " + path.string());
    v.modality = static_cast<Modality>(header[28]);
    if (v.dims[0] == 0 || v.dims[1] == 0 || v.dims[2] == 0)
        throw std::runtime_error("VOL1: zero-sized dims in " + path.string());

    const std::size_t n = v.size();
    std::vector<unsigned char> payload(n * 4);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(n * 4));
    if (static_cast<std::size_t>(in.gcount()) != n * 4)
        throw std::runtime_error("VOL1: truncated payload in " + path.string());
    in.peek();
    if (!in.eof()) throw std::runtime_error("VOL1: trailing bytes in " + path.string());

    v.voxels.resize(n);
    for (std::size_t i = 0; i < n; ++i) v.voxels[i] = get_f32(payload.data() + i * 4);
    return v;
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
    // NaN payloads are legal; only structural invariants are enforced here.
    if (v.dims[0] == 0 || v.dims[1] == 0 || v.dims[2] == 0)
        throw std::invalid_argument("volume: zero-sized dims");
    if (v.voxels.size() != v.size())
        throw std::invalid_argument("volume: voxel count does not match dims");
    for (float s : v.spacing)
        if (!(s > 0.f)) throw std::invalid_argument("volume: spacing must be positive");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("VOL1: cannot write " + path.string());
    out.write(kMagic, 4);
    for (int a = 0; a < 3; ++a) put_u32(out, v.dims[a]);
    for (int a = 0; a < 3; ++a) put_f32(out, v.spacing[a]);
    const char tag[4] = {static_cast<char>(v.modality), 0, 0, 0};
    out.write(tag, 4);
    for (float w : v.voxels) put_f32(out, w);
    if (!out) throw std::runtime_error("VOL1: write failed for " + path.string());
}

Volume resample_isotropic(const Volume& v, float target_spacing) {
    if (!(target_spacing > 0.f))
        throw std::invalid_argument("resample_isotropic: target spacing must be positive");
    validate(v);

    Volume out;
    out.modality = v.modality;
    out.spacing = {target_spacing, target_spacing, target_spacing};
    for (int a = 0; a < 3; ++a) {
        const double extent = static_cast<double>(v.dims[a]) * v.spacing[a] / target_spacing;
        out.dims[a] = static_cast<std::uint32_t>(std::max(1.0, std::round(extent)));
    }
    out.voxels.resize(out.size());

    const auto sample = [&](double px, double py, double pz) {
        // Clamped trilinear interpolation at voxel-center coordinates.
        const double cx = std::clamp(px, 0.0, static_cast<double>(v.dims[0] - 1));
        const double cy = std::clamp(py, 0.0, static_cast<double>(v.dims[1] - 1));
        const double cz = std::clamp(pz, 0.0, static_cast<double>(v.dims[2] - 1));
        const std::uint32_t x0 = static_cast<std::uint32_t>(cx);
        const std::uint32_t y0 = static_cast<std::uint32_t>(cy);
        const std::uint32_t z0 = static_cast<std::uint32_t>(cz);
        const std::uint32_t x1 = std::min(x0 + 1, v.dims[0] - 1);
        const std::uint32_t y1 = std::min(y0 + 1, v.dims[1] - 1);
        const std::uint32_t z1 = std::min(z0 + 1, v.dims[2] - 1);
        const double fx = cx - x0, fy = cy - y0, fz = cz - z0;
        const double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
        const double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
        const double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
        const double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);
        const double c00 = c000 * (1 - fx) + c100 * fx;
        const double c10 = c010 * (1 - fx) + c110 * fx;
        const double c01 = c001 * (1 - fx) + c101 * fx;
        const double c11 = c011 * (1 - fx) + c111 * fx;
        const double c0 = c00 * (1 - fy) + c10 * fy;
        const double c1 = c01 * (1 - fy) + c11 * fy;
        return c0 * (1 - fz) + c1 * fz;
    };

    for (std::uint32_t z = 0; z < out.dims[2]; ++z)
        for (std::uint32_t y = 0; y < out.dims[1]; ++y)
            for (std::uint32_t x = 0; x < out.dims[0]; ++x) {
                const double px = x * static_cast<double>(target_spacing) / v.spacing[0];
                const double py = y * static_cast<double>(target_spacing) / v.spacing[1];
                const double pz = z * static_cast<double>(target_spacing) / v.spacing[2];
                double w = sample(px, py, pz);
                if (v.modality == Modality::mask) w = w >= 0.5 ? 1.0 : 0.0;
                out.voxels[out.index(x, y, z)] = static_cast<float>(w);
            }
    return out;
}

Volume crop_roi(const Volume& v, const Volume& mask,
                const std::array<std::uint32_t, 3>& roi_dims) {
    validate(v);
    validate(mask);
    if (v.dims != mask.dims) throw std::invalid_argument("crop_roi: image/mask dims differ");
    for (int a = 0; a < 3; ++a)
        if (roi_dims[a] == 0 || roi_dims[a] % 2 != 0)
            throw std::invalid_argument("crop_roi: roi dims must be even and positive");

    double sum[3] = {0, 0, 0};
    std::size_t count = 0;
    for (std::uint32_t z = 0; z < mask.dims[2]; ++z)
        for (std::uint32_t y = 0; y < mask.dims[1]; ++y)
            for (std::uint32_t x = 0; x < mask.dims[0]; ++x)
                if (mask.at(x, y, z) != 0.f) {
                    sum[0] += x;
                    sum[1] += y;
                    sum[2] += z;
                    ++count;
                }
    if (count == 0) throw std::invalid_argument("crop_roi: mask is empty");

    long center[3], start[3];
    for (int a = 0; a < 3; ++a) {
        center[a] = static_cast<long>(std::llround(sum[a] / static_cast<double>(count)));
        start[a] = center[a] - static_cast<long>(roi_dims[a]) / 2;
    }

    Volume out;
    out.dims = roi_dims;
    out.spacing = v.spacing;
    out.modality = v.modality;
    out.voxels.assign(out.size(), pad_value(v.modality));
    for (std::uint32_t z = 0; z < roi_dims[2]; ++z)
        for (std::uint32_t y = 0; y < roi_dims[1]; ++y)
            for (std::uint32_t x = 0; x < roi_dims[0]; ++x) {
                const long sx = start[0] + x, sy = start[1] + y, sz = start[2] + z;
                if (sx >= 0 && sy >= 0 && sz >= 0 && sx < static_cast<long>(v.dims[0]) &&
                    sy < static_cast<long>(v.dims[1]) && sz < static_cast<long>(v.dims[2]))
                    out.at(x, y, z) = v.at(static_cast<std::uint32_t>(sx),
                                           static_cast<std::uint32_t>(sy),
                                           static_cast<std::uint32_t>(sz));
            }
    return out;
}

Volume clip_intensity(const Volume& v, const ClipRange& r) {
    if (!(r.lo < r.hi)) throw std::invalid_argument("clip_intensity: lo must be < hi");
    Volume out = v;
    for (float& w : out.voxels) w = std::min(std::max(w, r.lo), r.hi);
    return out;
}

namespace {

struct RigidTransform {
    int rot_quarter = 0;   // quarter-turns about z
    bool flip_x = false, flip_y = false, flip_z = false;
    int tx = 0, ty = 0, tz = 0;
};

Volume apply_rigid(const Volume& v, const RigidTransform& t) {
    if ((t.rot_quarter % 2) != 0 && v.dims[0] != v.dims[1])
        throw std::invalid_argument("augment: 90-degree rotation needs nx == ny");
    Volume out;
    out.dims = v.dims;
    out.spacing = v.spacing;
    out.modality = v.modality;
    out.voxels.assign(v.size(), pad_value(v.modality));
    const long nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    const int rq = ((t.rot_quarter % 4) + 4) % 4;

    for (long z = 0; z < nz; ++z)
        for (long y = 0; y < ny; ++y)
            for (long x = 0; x < nx; ++x) {
                // Walk the transform backwards from output to source voxel.
                long sx = x - t.tx, sy = y - t.ty, sz = z - t.tz;
                if (sx < 0 || sy < 0 || sz < 0 || sx >= nx || sy >= ny || sz >= nz) continue;
                if (t.flip_x) sx = nx - 1 - sx;
                if (t.flip_y) sy = ny - 1 - sy;
                if (t.flip_z) sz = nz - 1 - sz;
                long rx = sx, ry = sy;
                if (rq == 2) {
                    rx = nx - 1 - sx;
                    ry = ny - 1 - sy;
                } else {
                    for (int q = 0; q < rq; ++q) {
                        const long px = rx;
                        rx = ry;
                        ry = nx - 1 - px;
                    }
                }
                out.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                       static_cast<std::uint32_t>(z)) =
                    v.at(static_cast<std::uint32_t>(rx), static_cast<std::uint32_t>(ry),
                         static_cast<std::uint32_t>(sz));
            }
    return out;
}

}  // namespace

std::vector<std::pair<Volume, Volume>> augment(const Volume& v, const Volume& mask,
                                               const AugmentationSpec& spec, int n) {
    if (n < 0) throw std::invalid_argument("augment: n must be non-negative");
    if (spec.max_translation < 0)
        throw std::invalid_argument("augment: max_translation must be non-negative");
    validate(v);
    validate(mask);
    if (v.dims != mask.dims) throw std::invalid_argument("augment: image/mask dims differ");

    std::vector<std::pair<Volume, Volume>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
        RigidTransform t;
        if (!spec.rotations.empty())
            t.rot_quarter = spec.rotations[rng.uniform_index(spec.rotations.size())];
        for (char axis : spec.flips) {
            const bool flip = rng.bernoulli(0.5);
            if (axis == 'x') t.flip_x = flip;
            else if (axis == 'y') t.flip_y = flip;
            else if (axis == 'z') t.flip_z = flip;
            else throw std::invalid_argument("augment: flip axis must be x, y or z");
        }
        if (spec.max_translation > 0) {
            t.tx = static_cast<int>(rng.uniform_int(-spec.max_translation, spec.max_translation));
            t.ty = static_cast<int>(rng.uniform_int(-spec.max_translation, spec.max_translation));
            t.tz = static_cast<int>(rng.uniform_int(-spec.max_translation, spec.max_translation));
        }
        out.emplace_back(apply_rigid(v, t), apply_rigid(mask, t));
    }
    return out;
}

Volume threshold_mask(const Volume& v, float threshold) {
    Volume out = v;
    out.modality = Modality::mask;
    for (float& w : out.voxels) w = w >= threshold ? 1.f : 0.f;
    return out;
}

}  // namespace unetsurv::vol
