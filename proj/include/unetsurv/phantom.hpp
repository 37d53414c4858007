#ifndef UNETSURV_PHANTOM_HPP
#define UNETSURV_PHANTOM_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "unetsurv/volume.hpp"

namespace unetsurv::phantom {

// Synthetic paired CT-like/PET-like volumes with an ellipsoidal tumor,
// optional vessel-like cylinders, intratumoral texture and noise. Stands in
// for a clinical cohort at desk scale.
struct PhantomSpec {
    std::array<std::uint32_t, 3> dims{32, 32, 16};
    float radius_min = 3.f;   // voxels
    float radius_max = 6.f;
    float heterogeneity = 0.8f;  // max per-case texture amplitude, in [0,1]
    int vessel_count = 2;
    float noise_sigma = 0.05f;   // fraction of each channel's tumor contrast
    std::uint64_t seed = 0;
};

struct SurvivalCoeffs {
    double a0 = 0.0;  // intercept
    double a1 = 4.0;  // weight on normalized tumor volume
    double a2 = 2.0;  // weight on normalized heterogeneity
};

struct PhantomCase {
    int case_id = 0;
    vol::Volume ct;
    vol::Volume pet;
    vol::Volume mask;
    int survival_label = 1;    // 1 alive, 0 dead
    double tumor_volume = 0;   // mask voxel count
    double heterogeneity = 0;  // texture amplitude actually used
};

void validate(const PhantomSpec& spec);

// Deterministic per (spec.seed, case_id). Labels are not assigned here.
PhantomCase generate_case(const PhantomSpec& spec, int case_id);

// Bernoulli draw with P(dead) = logistic(a0 + a1*vnorm + a2*hnorm), where
// vnorm/hnorm rescale tumor volume and heterogeneity into [-1, 1] using the
// spec's radius range and max heterogeneity. Returns 1 alive, 0 dead.
int assign_survival(const PhantomSpec& spec, double tumor_volume, double heterogeneity,
                    const SurvivalCoeffs& coeffs, Rng& rng);

std::vector<PhantomCase> generate_cohort(const PhantomSpec& spec, int n,
                                         const SurvivalCoeffs& coeffs);

}  // namespace unetsurv::phantom

#endif
