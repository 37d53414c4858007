#ifndef UNETSURV_CONFIG_HPP
#define UNETSURV_CONFIG_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace unetsurv::pipeline {

// Whole-pipeline configuration, loaded from a TOML-style sectioned key/value
// file. Every random choice flows from `seed`; there are no wall-clock
// defaults anywhere.
struct PipelineConfig {
    std::filesystem::path out_dir = "run";
    std::uint64_t seed = 1;
    std::string modality = "both";  // ct | pet | both
    int jobs = 1;

    struct Phantom {
        int n_cases = 96;
        std::array<std::uint32_t, 3> dims{32, 32, 16};
        double radius_min = 3.0;
        double radius_max = 6.5;
        double heterogeneity = 0.8;
        int vessel_count = 2;
        double noise_sigma = 0.05;
        double label_a0 = 0.0;
        double label_a1 = 4.0;
        double label_a2 = 2.0;
    } phantom;

    struct Preprocess {
        double target_spacing = 1.0;
    } preprocess;

    struct Unet {
        int base_width = 8;
        int depth = 4;
        int convs_per_level = 1;
        int epochs = 12;
        int seg_train_cases = 24;
        int seg_val_cases = 8;
        int aug_per_pair = 1;
        double learning_rate = 1e-3;
        double weight_decay = 1e-4;
        int max_translation = 2;
        std::vector<int> rotations{0, 1, 2, 3};
        std::string flips = "xy";
    } unet;

    struct Cluster {
        int k_min = 2;
        int k_max = 40;
        int restarts = 10;
        std::string source = "both";  // feature matrix fed to clustering
    } cluster;

    struct Lasso {
        int grid_points = 50;
        double grid_decades = 3.0;
        int folds = 6;
        std::optional<double> fixed_lambda;
    } lasso;

    struct Cv {
        int folds = 6;
        std::string category = "2OS";
    } cv;

    struct Viz {
        int iterations = 20;
        double init_mean = 128.0;
        double init_std = 1.0;
        int neurons = 4;
        int cases = 4;
        std::string axis = "z";
        std::string modality = "ct";
    } viz;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

// Stable FNV-1a fingerprint of the canonical serialization; identical configs
// hash identically across runs.
std::string config_fingerprint(const PipelineConfig& cfg);
std::string canonical_config(const PipelineConfig& cfg);

}  // namespace unetsurv::pipeline

#endif
