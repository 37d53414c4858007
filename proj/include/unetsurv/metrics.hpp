#ifndef UNETSURV_METRICS_HPP
#define UNETSURV_METRICS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unetsurv/feature_matrix.hpp"
#include "unetsurv/logistic.hpp"

namespace unetsurv::metrics {

// Labels follow the paper coding throughout: 1 alive, 0 dead. Scores are
// P(death).

struct FoldPlan {
    int n_folds = 0;
    std::string category;
    std::vector<std::vector<std::size_t>> test_indices;
    std::vector<std::vector<std::size_t>> train_indices;
};

// Per-class shuffle then round-robin over test folds, so class proportions
// match across folds within one case. When a class has fewer members than
// folds, some test folds simply lack it.
FoldPlan make_folds(const std::vector<std::string>& case_ids, const std::vector<int>& labels,
                    int n_folds, std::uint64_t seed);

struct ConfusionMetrics {
    double accuracy = 0;
    std::optional<double> sensitivity;  // missing when no death cases
    std::optional<double> specificity;  // missing when no survival cases
};

// Predict death when score >= threshold. Sensitivity = correct death
// predictions over death cases; specificity likewise for survivors.
ConfusionMetrics confusion_metrics(const std::vector<double>& death_scores,
                                   const std::vector<int>& labels, double threshold = 0.5);

// Mann-Whitney AUC: fraction of (death, survival) pairs where the death case
// scores strictly higher, ties counted half. Requires both classes.
double auc(const std::vector<double>& death_scores, const std::vector<int>& labels);

struct PipelineConfig {
    int k_min = 2;
    int k_max = 40;
    int restarts = 10;
    int lasso_grid_points = 50;
    double lasso_grid_decades = 3.0;
    int lasso_folds = 6;
    std::optional<double> fixed_lambda;  // skip the inner CV when set
    std::uint64_t seed = 0;
};

struct FoldMetrics {
    double accuracy = 0;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    double auc = 0;
};

struct Aggregate {
    double mean = 0;
    double stddev = 0;  // sample stddev across folds
    double ci_lo = 0;   // mean +- 1.96 * stddev / sqrt(folds), clamped to [0,1]
    double ci_hi = 0;
};

struct MetricReport {
    std::string category;
    std::vector<FoldMetrics> folds;
    Aggregate accuracy, sensitivity, specificity, auc;
    std::vector<survival::SurvivalModel> fold_models;  // one per fold
};

// Per fold: constant-feature removal, k-medoids select_k, LASSO (CV'd
// lambda), logistic fit -- all on the training split only -- then scoring of
// the test split. Nothing from a test fold reaches its trained model.
MetricReport cross_validate(const featsel::FeatureMatrix& features,
                            const std::vector<int>& labels, const std::string& category,
                            const FoldPlan& plan, const PipelineConfig& cfg);

}  // namespace unetsurv::metrics

#endif
