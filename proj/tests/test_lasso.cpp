#include <doctest.h>

#include <cmath>

#include "unetsurv/lasso.hpp"
#include "unetsurv/rng.hpp"

using namespace unetsurv;
using featsel::FeatureMatrix;
using survival::lasso_cv;
using survival::lasso_fit;
using survival::lasso_lambda_max;

namespace {

FeatureMatrix matrix_from_columns(const std::vector<std::vector<double>>& cols) {
    FeatureMatrix fm;
    fm.n_features = cols.size();
    fm.n_cases = cols[0].size();
    fm.values.resize(fm.n_cases * fm.n_features);
    for (std::size_t f = 0; f < fm.n_features; ++f) {
        fm.feature_ids.push_back("F" + std::to_string(f));
        for (std::size_t c = 0; c < fm.n_cases; ++c) fm.at(c, f) = cols[f][c];
    }
    for (std::size_t c = 0; c < fm.n_cases; ++c) fm.case_ids.push_back("case" + std::to_string(c));
    return fm;
}

FeatureMatrix standardized_random(std::size_t cases, std::size_t features, Rng& rng) {
    std::vector<std::vector<double>> cols(features);
    for (auto& col : cols) {
        col.resize(cases);
        for (double& v : col) v = rng.uniform(-2, 2);
    }
    FeatureMatrix fm = matrix_from_columns(cols);
    survival::standardize_columns(fm);
    return fm;
}

// x_j' x_j / n == 1 and x_i' x_j == 0 via Gram-Schmidt then population
// rescaling; columns also get zero mean by construction from centered inputs.
FeatureMatrix orthonormal_design(std::size_t cases, std::size_t features, Rng& rng) {
    std::vector<std::vector<double>> cols(features, std::vector<double>(cases));
    for (auto& col : cols) {
        double mean = 0;
        for (double& v : col) {
            v = rng.uniform(-1, 1);
            mean += v;
        }
        mean /= static_cast<double>(cases);
        for (double& v : col) v -= mean;
    }
    for (std::size_t j = 0; j < features; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            double dot = 0;
            for (std::size_t c = 0; c < cases; ++c) dot += cols[j][c] * cols[i][c];
            for (std::size_t c = 0; c < cases; ++c) cols[j][c] -= dot * cols[i][c] /
                (static_cast<double>(cases));
            // cols[i] has norm^2 == cases after rescaling below; during the
            // loop we rescale eagerly instead
        }
        double norm2 = 0;
        for (double v : cols[j]) norm2 += v * v;
        const double scale = std::sqrt(static_cast<double>(cases) / norm2);
        for (double& v : cols[j]) v *= scale;
    }
    return matrix_from_columns(cols);
}

void check_kkt(const FeatureMatrix& X, const std::vector<double>& y,
               const survival::LassoResult& r) {
    const std::size_t n = X.n_cases;
    std::vector<double> residual(n);
    for (std::size_t c = 0; c < n; ++c) {
        double pred = r.intercept;
        for (std::size_t f = 0; f < X.n_features; ++f) pred += r.beta[f] * X.at(c, f);
        residual[c] = y[c] - pred;
    }
    for (std::size_t f = 0; f < X.n_features; ++f) {
        double corr = 0;
        for (std::size_t c = 0; c < n; ++c) corr += X.at(c, f) * residual[c];
        corr /= static_cast<double>(n);
        if (r.beta[f] != 0.0) {
            CHECK(std::abs(corr - r.lambda * (r.beta[f] > 0 ? 1.0 : -1.0)) < 1e-5);
        } else {
            CHECK(std::abs(corr) <= r.lambda + 1e-5);
        }
    }
}

}  // namespace

TEST_CASE("lambda >= lambda_max kills every penalized coefficient") {
    Rng rng(3);
    const FeatureMatrix X = standardized_random(30, 8, rng);
    std::vector<double> y(30);
    for (double& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;

    const double lmax = lasso_lambda_max(X, y);
    for (double lambda : {lmax, 1.5 * lmax}) {
        const survival::LassoResult r = lasso_fit(X, y, lambda);
        CHECK(r.selected_indices.empty());
        for (double b : r.beta) CHECK(b == 0.0);
    }
    // strictly below lambda_max something enters
    const survival::LassoResult below = lasso_fit(X, y, 0.99 * lmax);
    CHECK(!below.selected_indices.empty());
}

TEST_CASE("lambda = 0 with one predictor reproduces the OLS slope") {
    Rng rng(5);
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x[i] = rng.uniform(-3, 3);
        y[i] = 2.0 * x[i] + rng.uniform(-0.1, 0.1);
    }
    FeatureMatrix X = matrix_from_columns({x});
    survival::standardize_columns(X);

    // closed-form OLS on the standardized column
    double mean_y = 0;
    for (double v : y) mean_y += v;
    mean_y /= 40;
    double num = 0;
    for (std::size_t i = 0; i < 40; ++i) num += X.at(i, 0) * (y[i] - mean_y);
    const double ols = num / 40.0;  // x'x/n == 1

    const survival::LassoResult r = lasso_fit(X, y, 0.0);
    CHECK(r.beta[0] == doctest::Approx(ols).epsilon(1e-8));
    CHECK(r.intercept == doctest::Approx(mean_y));
}

TEST_CASE("orthonormal design solutions equal soft-thresholded OLS") {
    Rng rng(7);
    const FeatureMatrix X = orthonormal_design(50, 6, rng);
    std::vector<double> y(50);
    for (std::size_t i = 0; i < 50; ++i) y[i] = rng.uniform(-1, 1);

    double mean_y = 0;
    for (double v : y) mean_y += v;
    mean_y /= 50;

    std::vector<double> ols(6);
    for (std::size_t f = 0; f < 6; ++f) {
        double dot = 0;
        for (std::size_t i = 0; i < 50; ++i) dot += X.at(i, f) * (y[i] - mean_y);
        ols[f] = dot / 50.0;
    }
    for (double lambda : {0.01, 0.05, 0.2}) {
        const survival::LassoResult r = lasso_fit(X, y, lambda);
        for (std::size_t f = 0; f < 6; ++f) {
            const double expected =
                ols[f] > lambda ? ols[f] - lambda : (ols[f] < -lambda ? ols[f] + lambda : 0.0);
            CHECK(r.beta[f] == doctest::Approx(expected).epsilon(1e-8));
        }
    }
}

TEST_CASE("KKT conditions hold on random problems") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 20 + rng.uniform_index(30);
        const std::size_t p = 3 + rng.uniform_index(10);
        const FeatureMatrix X = standardized_random(n, p, rng);
        std::vector<double> y(n);
        for (double& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const double lmax = lasso_lambda_max(X, y);
        const survival::LassoResult r = lasso_fit(X, y, lmax * rng.uniform(0.05, 0.8));
        check_kkt(X, y, r);
    }
}

TEST_CASE("negative lambda is rejected") {
    Rng rng(13);
    const FeatureMatrix X = standardized_random(10, 2, rng);
    CHECK_THROWS_AS(lasso_fit(X, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, -0.1), std::invalid_argument);
}

TEST_CASE("lasso_cv basics") {
    Rng rng(17);

    SUBCASE("a one-point grid returns that lambda") {
        std::vector<std::vector<double>> cols(3, std::vector<double>(24));
        std::vector<double> y(24);
        for (std::size_t i = 0; i < 24; ++i) {
            for (auto& col : cols) col[i] = rng.uniform(-1, 1);
            y[i] = i % 2;
        }
        const FeatureMatrix X = matrix_from_columns(cols);
        const auto cv = lasso_cv(X, y, {0.123}, 4, 5);
        CHECK(cv.lambda == 0.123);
    }

    SUBCASE("empty grid and bad folds are rejected") {
        const FeatureMatrix X = standardized_random(12, 3, rng);
        std::vector<double> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
        CHECK_THROWS_AS(lasso_cv(X, y, {}, 4, 5), std::invalid_argument);
        CHECK_THROWS_AS(lasso_cv(X, y, {0.1}, 1, 5), std::invalid_argument);
        std::vector<double> single(12, 1.0);
        CHECK_THROWS_AS(lasso_cv(X, single, {0.1}, 4, 5), std::invalid_argument);
    }
}

TEST_CASE("pure-noise outcomes keep the selection empty most of the time") {
    Rng rng(19);
    int empty_runs = 0;
    const int reps = 25;
    for (int rep = 0; rep < reps; ++rep) {
        const std::size_t n = 40;
        std::vector<std::vector<double>> cols(10, std::vector<double>(n));
        for (auto& col : cols)
            for (double& v : col) v = rng.uniform(-1, 1);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = i % 2;  // balanced, unrelated to X
        const FeatureMatrix X = matrix_from_columns(cols);
        const double lmax = lasso_lambda_max([&] {
            FeatureMatrix std_x = X;
            survival::standardize_columns(std_x);
            return std_x;
        }(), y);
        const auto grid = survival::lambda_grid(lmax, 30, 3.0);
        const auto cv = lasso_cv(X, y, grid, 5, static_cast<std::uint64_t>(rep));
        if (cv.fit.selected_indices.empty()) ++empty_runs;
    }
    CHECK(empty_runs >= reps * 80 / 100);
}

TEST_CASE("a planted linear signal is recovered at the cross-validated lambda") {
    Rng rng(23);
    const std::size_t n = 60, p = 30;
    std::vector<std::vector<double>> cols(p, std::vector<double>(n));
    for (auto& col : cols)
        for (double& v : col) v = rng.uniform(-1, 1);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double signal = 1.5 * cols[2][i] - 2.0 * cols[11][i] + 1.0 * cols[27][i];
        y[i] = signal + rng.uniform(-0.05, 0.05) > 0 ? 1.0 : 0.0;
    }
    const FeatureMatrix X = matrix_from_columns(cols);
    FeatureMatrix std_x = X;
    survival::standardize_columns(std_x);
    const auto grid = survival::lambda_grid(lasso_lambda_max(std_x, y), 50, 3.0);
    const auto cv = lasso_cv(X, y, grid, 6, 31);

    const auto& sel = cv.fit.selected_indices;
    CHECK(std::find(sel.begin(), sel.end(), 2) != sel.end());
    CHECK(std::find(sel.begin(), sel.end(), 11) != sel.end());
    CHECK(std::find(sel.begin(), sel.end(), 27) != sel.end());
}

TEST_CASE("lambda grid is descending and log-spaced over the decades") {
    const auto grid = survival::lambda_grid(10.0, 4, 3.0);
    REQUIRE(grid.size() == 4);
    CHECK(grid[0] == doctest::Approx(10.0));
    CHECK(grid[3] == doctest::Approx(0.01));
    for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] < grid[i - 1]);
}
