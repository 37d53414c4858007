#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "unetsurv/logistic.hpp"
#include "unetsurv/rng.hpp"

using namespace unetsurv;
using featsel::FeatureMatrix;

namespace {

FeatureMatrix matrix_from_columns(const std::vector<std::vector<double>>& cols,
                                  std::size_t cases) {
    FeatureMatrix fm;
    fm.n_features = cols.size();
    fm.n_cases = cases;
    fm.values.resize(fm.n_cases * fm.n_features);
    for (std::size_t f = 0; f < cols.size(); ++f) {
        fm.feature_ids.push_back("F" + std::to_string(f));
        for (std::size_t c = 0; c < cases; ++c) fm.at(c, f) = cols[f][c];
    }
    for (std::size_t c = 0; c < cases; ++c) fm.case_ids.push_back("case" + std::to_string(c));
    return fm;
}

}  // namespace

TEST_CASE("intercept-only fit on balanced outcomes predicts one half") {
    FeatureMatrix X;
    X.n_cases = 10;
    X.n_features = 0;
    X.case_ids.resize(10, "c");
    const std::vector<double> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const survival::LogisticModel m = survival::logistic_fit(X, y);
    CHECK(m.beta.size() == 1);
    CHECK(std::abs(m.beta[0]) < 1e-6);
}

TEST_CASE("well-spread separable data reaches training accuracy 1 at threshold 0.5") {
    Rng rng(3);
    const std::size_t n = 40;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.uniform(-2, 2);
        if (std::abs(x[i]) < 0.2) x[i] += x[i] < 0 ? -0.2 : 0.2;  // margin
        y[i] = x[i] > 0 ? 1.0 : 0.0;
    }
    const FeatureMatrix X = matrix_from_columns({x}, n);
    const survival::LogisticModel m = survival::logistic_fit(X, y);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-survival::logistic_score(m.beta, &x[i], 1)));
        CHECK((p >= 0.5 ? 1.0 : 0.0) == y[i]);
    }
}

TEST_CASE("the penalized log-likelihood is non-decreasing and the gradient vanishes") {
    Rng rng(5);
    const std::size_t n = 50, p = 4;
    std::vector<std::vector<double>> cols(p, std::vector<double>(n));
    for (auto& col : cols)
        for (double& v : col) v = rng.uniform(-1, 1);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = 0.8 * cols[0][i] - 1.1 * cols[2][i] + rng.uniform(-0.5, 0.5) > 0 ? 1.0 : 0.0;

    const FeatureMatrix X = matrix_from_columns(cols, n);
    const double ridge = 1e-6;
    const survival::LogisticModel m = survival::logistic_fit(X, y, ridge);

    for (std::size_t i = 1; i < m.loglik_trace.size(); ++i)
        CHECK(m.loglik_trace[i] >= m.loglik_trace[i - 1] - 1e-12);

    // gradient of the penalized log-likelihood at the returned coefficients
    std::vector<double> grad(p + 1, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        double z = m.beta[0];
        for (std::size_t f = 0; f < p; ++f) z += m.beta[f + 1] * X.at(c, f);
        const double mu = 1.0 / (1.0 + std::exp(-z));
        grad[0] += y[c] - mu;
        for (std::size_t f = 0; f < p; ++f) grad[f + 1] += (y[c] - mu) * X.at(c, f);
    }
    for (std::size_t f = 1; f <= p; ++f) grad[f] -= ridge * m.beta[f];
    for (double g : grad) CHECK(std::abs(g) < 1e-6);
}

TEST_CASE("non-binary outcomes are rejected") {
    const FeatureMatrix X = matrix_from_columns({{1, 2, 3}}, 3);
    CHECK_THROWS_AS(survival::logistic_fit(X, {0.0, 0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("predict follows the logistic closed forms") {
    survival::SurvivalModel m;
    m.category = "2OS";
    m.lambda = 0.1;

    SUBCASE("all-zero coefficients give 0.5") {
        m.feature_ids = {"F0"};
        m.standardization.mean = {0.0};
        m.standardization.stddev = {1.0};
        m.beta = {0.0, 0.0};
        const FeatureMatrix fm = matrix_from_columns({{1.0}}, 1);
        CHECK(survival::predict_survival(m, fm, 0) == doctest::Approx(0.5));
        CHECK(survival::predict_death(m, fm, 0) == doctest::Approx(0.5));
    }
    SUBCASE("hand-set coefficients cancel to score zero") {
        // 0.5 - 1*1 + 2*0.25 = 0 -> probability 0.5
        m.feature_ids = {"F0", "F1"};
        m.standardization.mean = {0.0, 0.0};
        m.standardization.stddev = {1.0, 1.0};
        m.beta = {0.5, -1.0, 2.0};
        const FeatureMatrix fm = matrix_from_columns({{1.0}, {0.25}}, 1);
        CHECK(survival::predict_survival(m, fm, 0) == doctest::Approx(0.5));
    }
    SUBCASE("sigmoid saturates for large scores") {
        m.feature_ids = {"F0"};
        m.standardization.mean = {0.0};
        m.standardization.stddev = {1.0};
        m.beta = {0.0, 1.0};
        const FeatureMatrix hi = matrix_from_columns({{50.0}}, 1);
        CHECK(survival::predict_survival(m, hi, 0) > 0.999999);
    }
    SUBCASE("missing features are reported") {
        m.feature_ids = {"MISSING"};
        m.standardization.mean = {0.0};
        m.standardization.stddev = {1.0};
        m.beta = {0.0, 1.0};
        const FeatureMatrix fm = matrix_from_columns({{1.0}}, 1);
        CHECK_THROWS_WITH_AS(survival::predict_survival(m, fm, 0),
                             doctest::Contains("missing feature"), std::invalid_argument);
    }
}

TEST_CASE("survival model json round-trips with deterministic field order") {
    survival::SurvivalModel m;
    m.category = "5DS";
    m.lambda = 0.042;
    m.feature_ids = {"C00012", "P00345"};
    m.standardization.mean = {1.5, -2.25};
    m.standardization.stddev = {0.5, 3.0};
    m.beta = {0.1, -0.7, 1.9};

    const auto dir = std::filesystem::temp_directory_path() / "unetsurv_logistic_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.json";
    survival::save_model(m, path);
    const survival::SurvivalModel back = survival::load_model(path);
    CHECK(back.category == m.category);
    CHECK(back.lambda == m.lambda);
    CHECK(back.feature_ids == m.feature_ids);
    CHECK(back.standardization.mean == m.standardization.mean);
    CHECK(back.standardization.stddev == m.standardization.stddev);
    CHECK(back.beta == m.beta);

    // field order is stable on disk
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("\"category\"") < text.find("\"lambda\""));
    CHECK(text.find("\"lambda\"") < text.find("\"feature_ids\""));
    CHECK(text.find("\"feature_ids\"") < text.find("\"standardization\""));
    CHECK(text.find("\"standardization\"") < text.find("\"beta\""));
}
