#ifndef UNETSURV_VOLUME_HPP
#define UNETSURV_VOLUME_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "unetsurv/rng.hpp"

namespace unetsurv::vol {

enum class Modality : std::uint8_t { ct = 0, pet = 1, mask = 2 };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

// Dense 3D scalar field, x-fastest row-major, with voxel spacing in mm.
struct Volume {
    std::array<std::uint32_t, 3> dims{0, 0, 0};   // nx, ny, nz
    std::array<float, 3> spacing{1.f, 1.f, 1.f};  // sx, sy, sz
    Modality modality = Modality::ct;
    std::vector<float> voxels;

    std::size_t size() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return static_cast<std::size_t>(z) * dims[1] * dims[0] +
               static_cast<std::size_t>(y) * dims[0] + x;
    }
    float at(std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
        return voxels[index(x, y, z)];
    }
    float& at(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
        return voxels[index(x, y, z)];
    }
};

struct ClipRange {
    float lo = 0.f;
    float hi = 1.f;
};

// Paper-derived defaults: CT [-500, 200], PET [0.01, 20]. Masks clip to {0,1}.
ClipRange default_clip_range(Modality m);

// Throws std::invalid_argument when an invariant is violated
// (dims/voxel-count mismatch, non-positive spacing, non-binary mask).
void validate(const Volume& v);

// VOL1 binary format:
//   bytes 0-3   magic "VOL1"
//   bytes 4-15  nx, ny, nz as little-endian uint32
//   bytes 16-27 sx, sy, sz as little-endian float32
//   byte  28    modality tag (0 ct, 1 pet, 2 mask), bytes 29-31 zero
//   payload     nx*ny*nz little-endian float32, x-fastest row-major
Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

// Trilinear resample onto an isotropic grid with the given spacing. Output
// dims are the nearest integers to dim*spacing/target (min 1). Mask volumes
// are re-binarized by thresholding the interpolant at 0.5.
Volume resample_isotropic(const Volume& v, float target_spacing);

// Crop a fixed-size ROI centered on the voxel nearest to the mask's center
// of mass (unweighted). Out-of-bounds voxels take the modality's clip-range
// lower bound (0 for masks). roi dims must be even.
Volume crop_roi(const Volume& v, const Volume& mask,
                const std::array<std::uint32_t, 3>& roi_dims);

Volume clip_intensity(const Volume& v, const ClipRange& r);

struct AugmentationSpec {
    int max_translation = 0;            // voxels, per axis
    std::vector<int> rotations;         // quarter-turns about z, drawn uniformly
    std::vector<char> flips;            // axes eligible for flipping ('x','y','z')
    std::uint64_t seed = 0;
};

// n (image, mask) pairs under identical random rigid transforms: a rotation
// drawn from spec.rotations, independent coin-flip per axis in spec.flips,
// integer translation in [-max_translation, max_translation] per axis.
// Applied in that order. Voxels shifted in from outside take the modality
// pad value; masks stay binary throughout (pure index remapping).
std::vector<std::pair<Volume, Volume>> augment(const Volume& v, const Volume& mask,
                                               const AugmentationSpec& spec, int n);

// Binarize a probability or scalar field into a mask volume.
Volume threshold_mask(const Volume& v, float threshold);

}  // namespace unetsurv::vol

#endif
