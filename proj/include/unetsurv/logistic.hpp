#ifndef UNETSURV_LOGISTIC_HPP
#define UNETSURV_LOGISTIC_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "unetsurv/feature_matrix.hpp"
#include "unetsurv/lasso.hpp"

namespace unetsurv::survival {

struct LogisticModel {
    std::vector<double> beta;          // beta[0] intercept, then per column
    std::vector<double> loglik_trace;  // penalized, non-decreasing
    int iterations = 0;
};

// Newton/IRLS maximization of the binomial log-likelihood with a small ridge
// stabilizer on the non-intercept coefficients; damped steps keep the
// objective non-decreasing. Converges when the gradient infinity-norm drops
// below `tol`; throws after max_iter iterations (separable beyond the
// stabilizer). An empty design yields an intercept-only model.
LogisticModel logistic_fit(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                           double ridge = 1e-6, int max_iter = 10000, double tol = 1e-6);

double logistic_score(const std::vector<double>& beta, const double* row, std::size_t p);

// End-to-end survival predictor: LASSO-selected feature ids, their training
// standardization, and the logistic coefficients. Predictions follow the
// alive=1 coding; P(death) = 1 - predicted survival.
struct SurvivalModel {
    std::string category;  // 2OS / 5OS / 2DS / 5DS
    double lambda = 0;
    std::vector<std::string> feature_ids;
    Standardization standardization;  // per selected feature
    std::vector<double> beta;         // intercept + one per feature id
};

// Predicted survival probability for one row of a raw (unstandardized)
// feature matrix; throws if a model feature id is missing from fm.
double predict_survival(const SurvivalModel& model, const featsel::FeatureMatrix& fm,
                        std::size_t row);
double predict_death(const SurvivalModel& model, const featsel::FeatureMatrix& fm,
                     std::size_t row);

// JSON round-trip with deterministic field order:
// {category, lambda, feature_ids, standardization, beta}.
void save_model(const SurvivalModel& model, const std::filesystem::path& path);
SurvivalModel load_model(const std::filesystem::path& path);

}  // namespace unetsurv::survival

#endif
