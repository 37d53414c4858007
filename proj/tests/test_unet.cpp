#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "unetsurv/phantom.hpp"
#include "unetsurv/unet.hpp"

using namespace unetsurv;
namespace fs = std::filesystem;

namespace {

unet::UNetConfig small_config() {
    unet::UNetConfig c;
    c.input_dims = {16, 16, 8};
    c.base_width = 4;
    c.depth = 2;
    c.input_lo = -500.f;
    c.input_hi = 200.f;
    return c;
}

std::pair<vol::Volume, vol::Volume> small_case(std::uint64_t seed) {
    phantom::PhantomSpec spec;
    spec.dims = {16, 16, 8};
    spec.radius_min = 2.f;
    spec.radius_max = 3.5f;
    spec.seed = seed;
    const phantom::PhantomCase c = phantom::generate_case(spec, 0);
    return {vol::clip_intensity(c.ct, vol::default_clip_range(vol::Modality::ct)), c.mask};
}

fs::path temp_file(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "unetsurv_unet_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("bottleneck arithmetic matches the published geometry") {
    unet::UNetConfig paper;
    paper.input_dims = {96, 96, 48};
    paper.base_width = 32;
    paper.depth = 4;
    CHECK(paper.bottleneck_spatial() == std::array<int, 3>{6, 6, 3});
    CHECK(paper.width(paper.depth) == 512);
    CHECK(paper.bottleneck_feature_count() == 55296);

    unet::UNetConfig desk;
    desk.input_dims = {32, 32, 16};
    desk.base_width = 8;
    desk.depth = 4;
    CHECK(desk.bottleneck_spatial() == std::array<int, 3>{2, 2, 1});
    CHECK(desk.width(desk.depth) == 128);
    CHECK(desk.bottleneck_feature_count() == 512);
}

TEST_CASE("indivisible input dims are rejected") {
    unet::UNetConfig c;
    c.input_dims = {30, 32, 16};  // 30 not divisible by 16
    c.depth = 4;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("two builds with the same seed produce identical parameters") {
    const auto a = unet::build<float>(small_config(), 99);
    const auto b = unet::build<float>(small_config(), 99);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        CHECK(a.params[i].first == b.params[i].first);
        CHECK(a.params[i].second.data == b.params[i].second.data);
    }
    const auto c = unet::build<float>(small_config(), 100);
    CHECK(a.params[0].second.data != c.params[0].second.data);
}

TEST_CASE("forward_segment preserves dims and stays strictly inside (0,1)") {
    const auto model = unet::build<float>(small_config(), 5);
    const auto [img, mask] = small_case(21);
    const vol::Volume prob = unet::forward_segment(model, img);
    CHECK(prob.dims == img.dims);
    for (float p : prob.voxels) {
        CHECK(p > 0.f);
        CHECK(p < 1.f);
    }
}

TEST_CASE("forward_segment rejects dim mismatches") {
    const auto model = unet::build<float>(small_config(), 5);
    vol::Volume wrong;
    wrong.dims = {8, 8, 8};
    wrong.spacing = {1, 1, 1};
    wrong.voxels.assign(512, 0.f);
    CHECK_THROWS_AS(unet::forward_segment(model, wrong), std::invalid_argument);
}

TEST_CASE("encode_bottleneck is deterministic and input-sensitive") {
    const auto model = unet::build<float>(small_config(), 5);
    const auto [img, mask] = small_case(22);
    const auto f1 = unet::encode_bottleneck(model, img);
    const auto f2 = unet::encode_bottleneck(model, img);
    CHECK(f1 == f2);
    CHECK(f1.size() == small_config().bottleneck_feature_count());

    vol::Volume zero = img;
    std::fill(zero.voxels.begin(), zero.voxels.end(), 0.f);
    CHECK(unet::encode_bottleneck(model, zero) != f1);
}

TEST_CASE("feature names follow the C/P zero-padded convention") {
    CHECK(unet::feature_name(vol::Modality::ct, 48) == "C00048");
    CHECK(unet::feature_name(vol::Modality::pet, 39051) == "P39051");
}

TEST_CASE("dice definition, symmetry and edge cases") {
    vol::Volume a, b;
    a.dims = b.dims = {4, 2, 1};
    a.spacing = b.spacing = {1, 1, 1};
    a.modality = b.modality = vol::Modality::mask;
    a.voxels = {1, 1, 1, 1, 1, 1, 1, 1};
    b.voxels = {1, 1, 1, 1, 0, 0, 0, 0};
    // |A|=8, |B|=4, overlap 4 -> 2*4/12
    CHECK(unet::dice(a, b) == doctest::Approx(2.0 * 4 / 12));
    CHECK(unet::dice(a, b) == unet::dice(b, a));

    vol::Volume empty = a;
    std::fill(empty.voxels.begin(), empty.voxels.end(), 0.f);
    CHECK(unet::dice(empty, empty) == 1.0);
    CHECK(unet::dice(a, a) == 1.0);
    CHECK(unet::dice(empty, b) == 0.0);

    vol::Volume bad = a;
    bad.voxels[0] = 0.5f;
    CHECK_THROWS_AS(unet::dice(bad, b), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const auto model = unet::build<float>(small_config(), 31);
    const fs::path path = temp_file("model.ckpt");
    unet::save_checkpoint(model, path);

    auto restored = unet::build<float>(small_config(), 0);
    unet::load_checkpoint(restored, path);
    for (std::size_t i = 0; i < model.params.size(); ++i)
        CHECK(restored.params[i].second.data == model.params[i].second.data);

    SUBCASE("bad magic is rejected") {
        const fs::path bad = temp_file("bad.ckpt");
        std::ofstream out(bad, std::ios::binary);
        out << "NOPE";
        out.close();
        auto m = unet::build<float>(small_config(), 0);
        CHECK_THROWS_WITH_AS(unet::load_checkpoint(m, bad), doctest::Contains("magic"),
                             std::runtime_error);
    }
    SUBCASE("config mismatch is rejected") {
        unet::UNetConfig other = small_config();
        other.base_width = 8;
        auto m = unet::build<float>(other, 0);
        CHECK_THROWS_AS(unet::load_checkpoint(m, path), std::runtime_error);
    }
}

TEST_CASE("zero-epoch training leaves the model unchanged") {
    auto model = unet::build<float>(small_config(), 8);
    const auto snapshot = model.params;
    const auto pair = small_case(23);
    unet::TrainConfig tc;
    tc.epochs = 0;
    const auto history = unet::train(model, {pair}, {pair}, tc);
    CHECK(history.epochs.empty());
    for (std::size_t i = 0; i < model.params.size(); ++i)
        CHECK(model.params[i].second.data == snapshot[i].second.data);
}

TEST_CASE("training rejects empty sets") {
    auto model = unet::build<float>(small_config(), 8);
    const auto pair = small_case(23);
    unet::TrainConfig tc;
    CHECK_THROWS_AS(unet::train(model, {}, {pair}, tc), std::invalid_argument);
    CHECK_THROWS_AS(unet::train(model, {pair}, {}, tc), std::invalid_argument);
}

TEST_CASE("a single pair is memorized to dice >= 0.9 within 20 epochs") {
    auto model = unet::build<float>(small_config(), 7);
    const auto pair = small_case(11);
    unet::TrainConfig tc;
    tc.epochs = 20;
    tc.aug_per_pair = 8;  // identity augmentation, 8 passes per epoch
    tc.seed = 3;
    const auto history = unet::train(model, {pair}, {pair}, tc);
    CHECK(history.best_val_dsc >= 0.9);

    // early-stop selection: the returned model scores the best epoch's DSC
    const vol::Volume prob = unet::forward_segment(model, pair.first);
    const double dsc = unet::dice(vol::threshold_mask(prob, 0.5f), pair.second);
    CHECK(dsc == doctest::Approx(history.best_val_dsc));
    double best = 0;
    for (const auto& e : history.epochs) best = std::max(best, e.val_dsc);
    CHECK(history.best_val_dsc == best);
}

TEST_CASE("training is deterministic under a fixed seed") {
    const auto pair = small_case(12);
    const auto run = [&]() {
        auto model = unet::build<float>(small_config(), 7);
        unet::TrainConfig tc;
        tc.epochs = 3;
        tc.aug_per_pair = 2;
        tc.augmentation.max_translation = 1;
        tc.augmentation.flips = {'x'};
        tc.seed = 3;
        unet::train(model, {pair}, {pair}, tc);
        return model;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t i = 0; i < a.params.size(); ++i)
        CHECK(a.params[i].second.data == b.params[i].second.data);
}
