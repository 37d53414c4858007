#ifndef UNETSURV_FEATURE_MATRIX_HPP
#define UNETSURV_FEATURE_MATRIX_HPP

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace unetsurv::featsel {

// Cases x features table of bottleneck activations (row-major by case).
struct FeatureMatrix {
    std::size_t n_cases = 0;
    std::size_t n_features = 0;
    std::vector<double> values;
    std::vector<std::string> feature_ids;  // unique, length n_features
    std::vector<std::string> case_ids;     // length n_cases
    std::vector<std::string> modalities;   // per case ("ct", "pet", "both")

    double at(std::size_t c, std::size_t f) const { return values[c * n_features + f]; }
    double& at(std::size_t c, std::size_t f) { return values[c * n_features + f]; }

    std::vector<double> column(std::size_t f) const;
    FeatureMatrix select_rows(const std::vector<std::size_t>& rows) const;
    FeatureMatrix select_columns(const std::vector<std::size_t>& cols) const;

    void validate() const;
};

// CSV layout: header "case_id,modality,<feature ids...>", one row per case.
FeatureMatrix read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const FeatureMatrix& fm, const std::filesystem::path& path);

// Horizontal concatenation over identical case id sequences.
FeatureMatrix concat_features(const FeatureMatrix& a, const FeatureMatrix& b);

}  // namespace unetsurv::featsel

#endif
