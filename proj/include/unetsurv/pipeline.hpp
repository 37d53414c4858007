#ifndef UNETSURV_PIPELINE_HPP
#define UNETSURV_PIPELINE_HPP

#include <string>
#include <vector>

#include "unetsurv/config.hpp"
#include "unetsurv/unet.hpp"
#include "unetsurv/volume.hpp"

namespace unetsurv::pipeline {

struct StageRecord {
    std::string name;
    double seconds = 0;
    std::vector<std::string> artifacts;  // relative to out_dir
};

// Artifact layout under out_dir. Stages communicate only through these files.
struct Layout {
    explicit Layout(const PipelineConfig& cfg) : root(cfg.out_dir) {}
    std::filesystem::path root;

    std::filesystem::path cohort_dir() const { return root / "cohort"; }
    std::filesystem::path manifest_csv() const { return cohort_dir() / "manifest.csv"; }
    std::filesystem::path checkpoint(const std::string& m) const {
        return root / "models" / ("unet_" + m + ".ckpt");
    }
    std::filesystem::path history_csv(const std::string& m) const {
        return root / "models" / ("unet_" + m + "_history.csv");
    }
    std::filesystem::path features_csv(const std::string& source) const {
        return root / "features" / ("features_" + source + ".csv");
    }
    std::filesystem::path reduced_csv() const { return root / "select" / "reduced_features.csv"; }
    std::filesystem::path cluster_report() const { return root / "select" / "cluster_report.json"; }
    std::filesystem::path model_json(const std::string& source) const {
        return root / "fit" / ("model_" + source + ".json");
    }
    std::filesystem::path metrics_csv() const { return root / "eval" / "metrics.csv"; }
    std::filesystem::path summary_json() const { return root / "eval" / "summary.json"; }
    std::filesystem::path viz_dir() const { return root / "viz"; }
    std::filesystem::path run_manifest() const { return root / "run_manifest.json"; }
};

struct CohortEntry {
    std::string case_id;
    std::filesystem::path ct, pet, mask;  // absolute
    int label = 1;
    double tumor_volume = 0;
    double heterogeneity = 0;
};

std::vector<CohortEntry> read_cohort_manifest(const std::filesystem::path& manifest_csv);

// Resample to isotropic target spacing, clip to the modality range, crop to
// the network dims around the tumor center of mass.
vol::Volume preprocess_image(const PipelineConfig& cfg, const vol::Volume& image,
                             const vol::Volume& mask);
vol::Volume preprocess_mask(const PipelineConfig& cfg, const vol::Volume& mask);

unet::UNetConfig make_unet_config(const PipelineConfig& cfg, vol::Modality m);

StageRecord cmd_gen(const PipelineConfig& cfg);
StageRecord cmd_train_seg(const PipelineConfig& cfg, const std::string& modality);
StageRecord cmd_extract(const PipelineConfig& cfg);
StageRecord cmd_select(const PipelineConfig& cfg);
StageRecord cmd_fit(const PipelineConfig& cfg);
StageRecord cmd_eval(const PipelineConfig& cfg);
StageRecord cmd_visualize(const PipelineConfig& cfg);
std::vector<StageRecord> cmd_run_all(const PipelineConfig& cfg);

}  // namespace unetsurv::pipeline

#endif
