#ifndef UNETSURV_LASSO_HPP
#define UNETSURV_LASSO_HPP

#include <cstdint>
#include <vector>

#include "unetsurv/feature_matrix.hpp"

namespace unetsurv::survival {

struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev;  // population (1/n) standard deviation
};

// Standardize each column to zero mean, unit population variance. Throws on
// constant columns.
Standardization standardize_columns(featsel::FeatureMatrix& X);
void apply_standardization(featsel::FeatureMatrix& X, const Standardization& s);

struct LassoResult {
    double lambda = 0;
    double intercept = 0;               // unpenalized
    std::vector<double> beta;           // per column, standardized space
    std::vector<std::size_t> selected_indices;  // beta != 0
};

// min (1/2n)||y - b0 - X beta||^2 + lambda*||beta||_1 by cyclic coordinate
// descent with soft-thresholding; X must be standardized, so the smallest
// all-zero penalty is lambda_max = max_j |x_j' (y - ybar)| / n.
LassoResult lasso_fit(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                      double lambda);

double lasso_lambda_max(const featsel::FeatureMatrix& X, const std::vector<double>& y);

// Log-spaced grid from lambda_max down over `decades` decades, descending.
std::vector<double> lambda_grid(double lambda_max, int points = 50, double decades = 3.0);

struct LassoCvResult {
    double lambda = 0;
    LassoResult fit;                // refit on the full data at lambda
    std::vector<double> grid;       // descending
    std::vector<double> cv_mse;     // mean over folds, parallel to grid
};

// K-fold CV over the grid with per-fold standardization and warm starts along
// the path; ties in CV error keep the largest (sparsest) lambda.
LassoCvResult lasso_cv(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                       const std::vector<double>& grid, int folds, std::uint64_t seed);

}  // namespace unetsurv::survival

#endif
