#include "unetsurv/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "unetsurv/rng.hpp"

namespace unetsurv::survival {

Standardization standardize_columns(featsel::FeatureMatrix& X) {
    Standardization s;
    s.mean.resize(X.n_features);
    s.stddev.resize(X.n_features);
    const double n = static_cast<double>(X.n_cases);
    for (std::size_t f = 0; f < X.n_features; ++f) {
        double mean = 0;
        for (std::size_t c = 0; c < X.n_cases; ++c) mean += X.at(c, f);
        mean /= n;
        double var = 0;
        for (std::size_t c = 0; c < X.n_cases; ++c) var += (X.at(c, f) - mean) * (X.at(c, f) - mean);
        var /= n;
        if (var <= 0)
            throw std::invalid_argument("standardize: constant column " + X.feature_ids[f]);
        s.mean[f] = mean;
        s.stddev[f] = std::sqrt(var);
    }
    apply_standardization(X, s);
    return s;
}

void apply_standardization(featsel::FeatureMatrix& X, const Standardization& s) {
    if (s.mean.size() != X.n_features || s.stddev.size() != X.n_features)
        throw std::invalid_argument("standardize: parameter length mismatch");
    for (std::size_t f = 0; f < X.n_features; ++f) {
        const double mean = s.mean[f], inv_sd = 1.0 / s.stddev[f];
        for (std::size_t c = 0; c < X.n_cases; ++c) X.at(c, f) = (X.at(c, f) - mean) * inv_sd;
    }
}

namespace {

// Inner-CV variant: a column that happens to be constant on a training fold
// (dead bottleneck features) is centered to all-zero instead of throwing, so
// it simply cannot be selected on that fold.
Standardization standardize_lenient(featsel::FeatureMatrix& X) {
    Standardization s;
    s.mean.resize(X.n_features);
    s.stddev.resize(X.n_features);
    const double n = static_cast<double>(X.n_cases);
    for (std::size_t f = 0; f < X.n_features; ++f) {
        double mean = 0;
        for (std::size_t c = 0; c < X.n_cases; ++c) mean += X.at(c, f);
        mean /= n;
        double var = 0;
        for (std::size_t c = 0; c < X.n_cases; ++c)
            var += (X.at(c, f) - mean) * (X.at(c, f) - mean);
        var /= n;
        s.mean[f] = mean;
        s.stddev[f] = var > 0 ? std::sqrt(var) : 1.0;
    }
    apply_standardization(X, s);
    return s;
}

double soft_threshold(double rho, double lambda) {
    if (rho > lambda) return rho - lambda;
    if (rho < -lambda) return rho + lambda;
    return 0.0;
}

// Coordinate descent with an optional warm start. Columns are assumed
// standardized so x_j'x_j/n == 1.
LassoResult fit_warm(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                     double lambda, std::vector<double> beta) {
    const std::size_t n = X.n_cases, p = X.n_features;
    const double inv_n = 1.0 / static_cast<double>(n);

    double ybar = 0;
    for (double v : y) ybar += v;
    ybar *= inv_n;

    std::vector<double> residual(n);
    for (std::size_t c = 0; c < n; ++c) {
        double pred = ybar;
        for (std::size_t f = 0; f < p; ++f) pred += beta[f] * X.at(c, f);
        residual[c] = y[c] - pred;
    }

    constexpr double kTol = 1e-7;
    constexpr int kMaxSweeps = 10000;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_delta = 0;
        for (std::size_t f = 0; f < p; ++f) {
            double rho = 0;
            for (std::size_t c = 0; c < n; ++c) rho += X.at(c, f) * residual[c];
            rho = rho * inv_n + beta[f];
            const double updated = soft_threshold(rho, lambda);
            const double delta = updated - beta[f];
            if (delta != 0.0) {
                for (std::size_t c = 0; c < n; ++c) residual[c] -= delta * X.at(c, f);
                beta[f] = updated;
            }
            max_delta = std::max(max_delta, std::abs(delta));
        }
        if (max_delta < kTol) break;
    }

    LassoResult r;
    r.lambda = lambda;
    r.intercept = ybar;
    r.beta = std::move(beta);
    for (std::size_t f = 0; f < p; ++f)
        if (r.beta[f] != 0.0) r.selected_indices.push_back(f);
    return r;
}

}  // namespace

LassoResult lasso_fit(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                      double lambda) {
    if (lambda < 0) throw std::invalid_argument("lasso: lambda must be >= 0");
    if (y.size() != X.n_cases) throw std::invalid_argument("lasso: y length mismatch");
    if (X.n_cases == 0 || X.n_features == 0)
        throw std::invalid_argument("lasso: empty design matrix");
    return fit_warm(X, y, lambda, std::vector<double>(X.n_features, 0.0));
}

double lasso_lambda_max(const featsel::FeatureMatrix& X, const std::vector<double>& y) {
    const double inv_n = 1.0 / static_cast<double>(X.n_cases);
    double ybar = 0;
    for (double v : y) ybar += v;
    ybar *= inv_n;
    double lmax = 0;
    for (std::size_t f = 0; f < X.n_features; ++f) {
        double dot = 0;
        for (std::size_t c = 0; c < X.n_cases; ++c) dot += X.at(c, f) * (y[c] - ybar);
        lmax = std::max(lmax, std::abs(dot) * inv_n);
    }
    return lmax;
}

std::vector<double> lambda_grid(double lambda_max, int points, double decades) {
    if (points < 1 || lambda_max <= 0) return {lambda_max};
    std::vector<double> grid(static_cast<std::size_t>(points));
    if (points == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    // grid[0] must equal lambda_max exactly so the all-zero solution is exact
    // there; pow(10, log10(x)) can round an ulp below x.
    grid[0] = lambda_max;
    for (int i = 1; i < points; ++i)
        grid[static_cast<std::size_t>(i)] =
            lambda_max * std::pow(10.0, -decades * static_cast<double>(i) / (points - 1));
    return grid;
}

LassoCvResult lasso_cv(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                       const std::vector<double>& grid, int folds, std::uint64_t seed) {
    if (grid.empty()) throw std::invalid_argument("lasso_cv: empty lambda grid");
    if (folds < 2) throw std::invalid_argument("lasso_cv: folds must be >= 2");
    if (y.size() != X.n_cases) throw std::invalid_argument("lasso_cv: y length mismatch");

    // Stratified fold assignment over the binary outcome.
    std::vector<std::size_t> zeros, ones;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] != 0.0 ? ones : zeros).push_back(i);
    if (zeros.empty() || ones.empty())
        throw std::invalid_argument("lasso_cv: both outcome classes required");
    Rng rng(seed);
    rng.shuffle(zeros);
    rng.shuffle(ones);
    std::vector<int> fold_of(y.size());
    int next = 0;
    for (std::size_t i : ones) fold_of[i] = next++ % folds;
    for (std::size_t i : zeros) fold_of[i] = next++ % folds;

    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    std::vector<double> mse(sorted.size(), 0.0);
    std::vector<std::vector<double>> fold_mse(sorted.size());
    for (int fold = 0; fold < folds; ++fold) {
        std::vector<std::size_t> train, val;
        for (std::size_t i = 0; i < y.size(); ++i)
            (fold_of[i] == fold ? val : train).push_back(i);
        if (val.empty() || train.empty()) continue;

        featsel::FeatureMatrix Xtr = X.select_rows(train);
        const Standardization st = standardize_lenient(Xtr);
        featsel::FeatureMatrix Xval = X.select_rows(val);
        apply_standardization(Xval, st);
        std::vector<double> ytr, yval;
        for (std::size_t i : train) ytr.push_back(y[i]);
        for (std::size_t i : val) yval.push_back(y[i]);

        std::vector<double> beta(X.n_features, 0.0);
        for (std::size_t g = 0; g < sorted.size(); ++g) {
            LassoResult r = fit_warm(Xtr, ytr, sorted[g], beta);
            beta = r.beta;  // warm start for the next (smaller) lambda
            double err = 0;
            for (std::size_t v = 0; v < val.size(); ++v) {
                double pred = r.intercept;
                for (std::size_t f = 0; f < X.n_features; ++f)
                    pred += r.beta[f] * Xval.at(v, f);
                err += (yval[v] - pred) * (yval[v] - pred);
            }
            mse[g] += err / static_cast<double>(val.size());
            fold_mse[g].push_back(err / static_cast<double>(val.size()));
        }
    }
    for (double& m : mse) m /= static_cast<double>(folds);

    std::size_t min_idx = 0;
    for (std::size_t g = 1; g < sorted.size(); ++g)
        if (mse[g] < mse[min_idx]) min_idx = g;

    // Ties toward the largest (sparsest) lambda, where "tie" means the
    // fold-paired error difference against the minimizer stays within one
    // standard error. A strict argmin on the near-flat noise plateau would
    // pick an arbitrary grid point.
    std::size_t best = min_idx;
    for (std::size_t g = 0; g <= min_idx; ++g) {
        const auto& a = fold_mse[g];
        const auto& b = fold_mse[min_idx];
        if (a.size() != b.size() || a.empty()) continue;
        const double kf = static_cast<double>(a.size());
        double mean_diff = 0;
        for (std::size_t f = 0; f < a.size(); ++f) mean_diff += a[f] - b[f];
        mean_diff /= kf;
        double var_diff = 0;
        for (std::size_t f = 0; f < a.size(); ++f)
            var_diff += (a[f] - b[f] - mean_diff) * (a[f] - b[f] - mean_diff);
        var_diff = a.size() > 1 ? var_diff / (kf - 1) : 0.0;
        const double se_diff = std::sqrt(var_diff / kf);
        if (mean_diff <= se_diff + 1e-15) {
            best = g;  // grid is descending, so the first hit is the largest
            break;
        }
    }

    LassoCvResult out;
    out.lambda = sorted[best];
    out.grid = std::move(sorted);
    out.cv_mse = std::move(mse);
    featsel::FeatureMatrix Xfull = X;
    standardize_columns(Xfull);
    out.fit = lasso_fit(Xfull, y, out.lambda);
    return out;
}

}  // namespace unetsurv::survival
