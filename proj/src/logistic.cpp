#include "unetsurv/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace unetsurv::survival {

namespace {

// Solve A x = b for symmetric positive definite A (in-place Cholesky).
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0) throw std::runtime_error("logistic: normal matrix not positive definite");
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return b;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double logistic_score(const std::vector<double>& beta, const double* row, std::size_t p) {
    double z = beta[0];
    for (std::size_t f = 0; f < p; ++f) z += beta[f + 1] * row[f];
    return z;
}

LogisticModel logistic_fit(const featsel::FeatureMatrix& X, const std::vector<double>& y,
                           double ridge, int max_iter, double tol) {
    if (y.size() != X.n_cases) throw std::invalid_argument("logistic: y length mismatch");
    for (double v : y)
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("logistic: y must be binary");

    const std::size_t n = X.n_cases, p = X.n_features, dim = p + 1;
    LogisticModel model;
    model.beta.assign(dim, 0.0);

    const auto penalized_loglik = [&](const std::vector<double>& beta) {
        double ll = 0;
        for (std::size_t c = 0; c < n; ++c) {
            const double z = logistic_score(beta, &X.values[c * p], p);
            // log-likelihood term: y*z - log(1 + e^z), numerically stable
            ll += y[c] * z - (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
        }
        for (std::size_t f = 1; f < dim; ++f) ll -= 0.5 * ridge * beta[f] * beta[f];
        return ll;
    };

    double ll = penalized_loglik(model.beta);
    model.loglik_trace.push_back(ll);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<double> grad(dim, 0.0);
        std::vector<double> hess(dim * dim, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            const double* row = &X.values[c * p];
            const double mu = sigmoid(logistic_score(model.beta, row, p));
            const double r = y[c] - mu;
            const double w = std::max(mu * (1.0 - mu), 1e-12);
            grad[0] += r;
            for (std::size_t f = 0; f < p; ++f) grad[f + 1] += r * row[f];
            hess[0] += w;
            for (std::size_t f = 0; f < p; ++f) {
                hess[(f + 1) * dim] += w * row[f];
                for (std::size_t g2 = 0; g2 <= f; ++g2)
                    hess[(f + 1) * dim + (g2 + 1)] += w * row[f] * row[g2];
            }
        }
        for (std::size_t f = 1; f < dim; ++f) {
            grad[f] -= ridge * model.beta[f];
            hess[f * dim + f] += ridge;
        }
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i + 1; j < dim; ++j) hess[i * dim + j] = hess[j * dim + i];

        double gmax = 0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        if (gmax < tol) {
            model.iterations = iter;
            return model;
        }

        const std::vector<double> step = solve_spd(hess, grad, dim);
        double scale = 1.0;
        std::vector<double> candidate(dim);
        for (int half = 0; half < 60; ++half) {
            for (std::size_t i = 0; i < dim; ++i)
                candidate[i] = model.beta[i] + scale * step[i];
            const double cand_ll = penalized_loglik(candidate);
            if (cand_ll >= ll) {
                model.beta = candidate;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
        model.loglik_trace.push_back(ll);
    }
    throw std::runtime_error("logistic: failed to converge (data separable beyond stabilizer)");
}

double predict_survival(const SurvivalModel& model, const featsel::FeatureMatrix& fm,
                        std::size_t row) {
    if (model.beta.size() != model.feature_ids.size() + 1)
        throw std::invalid_argument("survival model: coefficient count mismatch");
    double z = model.beta[0];
    for (std::size_t j = 0; j < model.feature_ids.size(); ++j) {
        const auto it =
            std::find(fm.feature_ids.begin(), fm.feature_ids.end(), model.feature_ids[j]);
        if (it == fm.feature_ids.end())
            throw std::invalid_argument("survival model: missing feature " + model.feature_ids[j]);
        const std::size_t col = static_cast<std::size_t>(it - fm.feature_ids.begin());
        const double raw = fm.at(row, col);
        const double std_value =
            (raw - model.standardization.mean[j]) / model.standardization.stddev[j];
        z += model.beta[j + 1] * std_value;
    }
    return sigmoid(z);
}

double predict_death(const SurvivalModel& model, const featsel::FeatureMatrix& fm,
                     std::size_t row) {
    return 1.0 - predict_survival(model, fm, row);
}

void save_model(const SurvivalModel& model, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["category"] = model.category;
    j["lambda"] = model.lambda;
    j["feature_ids"] = model.feature_ids;
    j["standardization"] = {{"mean", model.standardization.mean},
                            {"stddev", model.standardization.stddev}};
    j["beta"] = model.beta;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("survival model: cannot write " + path.string());
    out << j.dump(2) << '\n';
}

SurvivalModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("survival model: cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    SurvivalModel m;
    m.category = j.at("category").get<std::string>();
    m.lambda = j.at("lambda").get<double>();
    m.feature_ids = j.at("feature_ids").get<std::vector<std::string>>();
    m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.standardization.stddev = j.at("standardization").at("stddev").get<std::vector<double>>();
    m.beta = j.at("beta").get<std::vector<double>>();
    return m;
}

}  // namespace unetsurv::survival
