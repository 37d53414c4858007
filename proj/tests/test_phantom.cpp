#include <doctest.h>

#include <cmath>
#include <set>

#include "unetsurv/phantom.hpp"

using namespace unetsurv;

namespace {

phantom::PhantomSpec base_spec() {
    phantom::PhantomSpec spec;
    spec.dims = {32, 32, 16};
    spec.radius_min = 3.f;
    spec.radius_max = 6.f;
    spec.heterogeneity = 0.8f;
    spec.vessel_count = 2;
    spec.noise_sigma = 0.05f;
    spec.seed = 1234;
    return spec;
}

std::size_t mask_count(const vol::Volume& mask) {
    std::size_t n = 0;
    for (float w : mask.voxels) n += w == 1.f;
    return n;
}

}  // namespace

TEST_CASE("fixed-radius sphere mask matches the analytic volume within 10%") {
    phantom::PhantomSpec spec = base_spec();
    spec.dims = {24, 24, 24};
    spec.radius_min = spec.radius_max = 5.f;
    spec.heterogeneity = 0.f;
    const phantom::PhantomCase c = phantom::generate_case(spec, 0);
    const double analytic = 4.0 / 3.0 * 3.14159265358979 * 125.0;  // ~523.6
    const double count = static_cast<double>(mask_count(c.mask));
    CHECK(std::abs(count - analytic) / analytic < 0.10);
    CHECK(c.tumor_volume == count);
}

TEST_CASE("same (seed, case_id) twice produces bit-identical volumes") {
    const phantom::PhantomSpec spec = base_spec();
    const phantom::PhantomCase a = phantom::generate_case(spec, 3);
    const phantom::PhantomCase b = phantom::generate_case(spec, 3);
    CHECK(a.ct.voxels == b.ct.voxels);
    CHECK(a.pet.voxels == b.pet.voxels);
    CHECK(a.mask.voxels == b.mask.voxels);
    CHECK(a.heterogeneity == b.heterogeneity);
}

TEST_CASE("degenerate spec yields a two-valued CT channel") {
    phantom::PhantomSpec spec = base_spec();
    spec.noise_sigma = 0.f;
    spec.heterogeneity = 0.f;
    spec.vessel_count = 0;
    const phantom::PhantomCase c = phantom::generate_case(spec, 1);
    std::set<float> values(c.ct.voxels.begin(), c.ct.voxels.end());
    CHECK(values.size() == 2);
}

TEST_CASE("pet uptake is higher inside the mask than outside") {
    phantom::PhantomSpec spec = base_spec();
    spec.noise_sigma = 0.05f;  // <= 0.1 * contrast premise
    for (int id = 0; id < 5; ++id) {
        const phantom::PhantomCase c = phantom::generate_case(spec, id);
        double inside = 0, outside = 0;
        std::size_t n_in = 0, n_out = 0;
        for (std::size_t i = 0; i < c.mask.voxels.size(); ++i) {
            if (c.mask.voxels[i] == 1.f) {
                inside += c.pet.voxels[i];
                ++n_in;
            } else {
                outside += c.pet.voxels[i];
                ++n_out;
            }
        }
        CHECK(inside / static_cast<double>(n_in) > outside / static_cast<double>(n_out));
    }
}

TEST_CASE("mask voxel count grows monotonically with radius") {
    phantom::PhantomSpec spec = base_spec();
    spec.dims = {32, 32, 32};
    spec.noise_sigma = 0.f;
    std::size_t previous = 0;
    for (float r = 3.f; r <= 7.f; r += 1.f) {
        spec.radius_min = spec.radius_max = r;
        const std::size_t count = mask_count(phantom::generate_case(spec, 0).mask);
        CHECK(count > previous);
        previous = count;
    }
}

TEST_CASE("assign_survival follows the logistic construction") {
    const phantom::PhantomSpec spec = base_spec();

    SUBCASE("zero coefficients mean a fair coin") {
        phantom::SurvivalCoeffs coeffs{0, 0, 0};
        Rng rng(5);
        int dead = 0;
        const int n = 20000;
        for (int i = 0; i < n; ++i)
            dead += phantom::assign_survival(spec, 300, 0.4, coeffs, rng) == 0;
        CHECK(std::abs(dead / static_cast<double>(n) - 0.5) < 0.01);
    }

    SUBCASE("huge intercept forces death") {
        phantom::SurvivalCoeffs coeffs{50, 0, 0};
        Rng rng(6);
        for (int i = 0; i < 200; ++i)
            CHECK(phantom::assign_survival(spec, 300, 0.4, coeffs, rng) == 0);
    }

    SUBCASE("non-finite coefficients are rejected") {
        phantom::SurvivalCoeffs coeffs{std::nan(""), 0, 0};
        Rng rng(7);
        CHECK_THROWS_AS(phantom::assign_survival(spec, 300, 0.4, coeffs, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("volume coefficient induces a negative label-volume correlation") {
    phantom::PhantomSpec spec = base_spec();
    spec.seed = 2024;
    phantom::SurvivalCoeffs coeffs{0, 4, 0};
    const auto cohort = phantom::generate_cohort(spec, 200, coeffs);

    double mean_l = 0, mean_v = 0;
    for (const auto& c : cohort) {
        mean_l += c.survival_label;
        mean_v += c.tumor_volume;
    }
    mean_l /= 200;
    mean_v /= 200;
    double cov = 0, var_l = 0, var_v = 0;
    for (const auto& c : cohort) {
        cov += (c.survival_label - mean_l) * (c.tumor_volume - mean_v);
        var_l += (c.survival_label - mean_l) * (c.survival_label - mean_l);
        var_v += (c.tumor_volume - mean_v) * (c.tumor_volume - mean_v);
    }
    const double r = cov / std::sqrt(var_l * var_v);
    CHECK(r < 0);
    CHECK(std::abs(r) > 0.3);
}

TEST_CASE("cohort generation composes generate_case and is reproducible") {
    const phantom::PhantomSpec spec = base_spec();
    const phantom::SurvivalCoeffs coeffs;

    SUBCASE("n=1 matches generate_case(spec, 0)") {
        const auto cohort = phantom::generate_cohort(spec, 1, coeffs);
        const phantom::PhantomCase direct = phantom::generate_case(spec, 0);
        CHECK(cohort[0].ct.voxels == direct.ct.voxels);
        CHECK(cohort[0].mask.voxels == direct.mask.voxels);
    }

    SUBCASE("n=96 mirrors the cohort size with both labels present") {
        const auto cohort = phantom::generate_cohort(spec, 96, coeffs);
        CHECK(cohort.size() == 96);
        int dead = 0, alive = 0;
        for (const auto& c : cohort) (c.survival_label == 0 ? dead : alive)++;
        CHECK(dead > 0);
        CHECK(alive > 0);
    }

    SUBCASE("labels are identical across reruns") {
        const auto a = phantom::generate_cohort(spec, 50, coeffs);
        const auto b = phantom::generate_cohort(spec, 50, coeffs);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a[i].survival_label == b[i].survival_label);
    }
}

TEST_CASE("both labels appear for n >= 20 with default coefficients") {
    phantom::PhantomSpec spec = base_spec();
    const phantom::SurvivalCoeffs coeffs;  // defaults
    for (std::uint64_t seed : {1ULL, 77ULL, 991ULL}) {
        spec.seed = seed;
        const auto cohort = phantom::generate_cohort(spec, 20, coeffs);
        int dead = 0, alive = 0;
        for (const auto& c : cohort) (c.survival_label == 0 ? dead : alive)++;
        CHECK(dead > 0);
        CHECK(alive > 0);
    }
}

TEST_CASE("spec validation rejects inconsistent parameters") {
    phantom::PhantomSpec spec = base_spec();
    spec.radius_max = 20.f;  // >= min(dims)/2
    CHECK_THROWS_AS(phantom::validate(spec), std::invalid_argument);
    spec = base_spec();
    spec.heterogeneity = 1.5f;
    CHECK_THROWS_AS(phantom::validate(spec), std::invalid_argument);
    spec = base_spec();
    spec.vessel_count = -1;
    CHECK_THROWS_AS(phantom::validate(spec), std::invalid_argument);
    CHECK_THROWS_AS(phantom::generate_cohort(base_spec(), 0, phantom::SurvivalCoeffs{}),
                    std::invalid_argument);
}
