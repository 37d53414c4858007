#include "unetsurv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "unetsurv/kmedoids.hpp"
#include "unetsurv/rng.hpp"

namespace unetsurv::metrics {

FoldPlan make_folds(const std::vector<std::string>& case_ids, const std::vector<int>& labels,
                    int n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw std::invalid_argument("make_folds: n_folds must be >= 2");
    if (case_ids.size() != labels.size())
        throw std::invalid_argument("make_folds: ids/labels length mismatch");
    if (case_ids.size() < static_cast<std::size_t>(n_folds))
        throw std::invalid_argument("make_folds: fewer cases than folds");

    std::vector<std::size_t> dead, alive;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw std::invalid_argument("make_folds: labels must be 0 or 1");
        (labels[i] == 0 ? dead : alive).push_back(i);
    }
    Rng rng(seed);
    rng.shuffle(dead);
    rng.shuffle(alive);

    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.test_indices.assign(static_cast<std::size_t>(n_folds), {});
    plan.train_indices.assign(static_cast<std::size_t>(n_folds), {});
    int next = 0;
    for (std::size_t i : dead) plan.test_indices[static_cast<std::size_t>(next++ % n_folds)].push_back(i);
    for (std::size_t i : alive) plan.test_indices[static_cast<std::size_t>(next++ % n_folds)].push_back(i);

    for (int f = 0; f < n_folds; ++f) {
        auto& test = plan.test_indices[static_cast<std::size_t>(f)];
        std::sort(test.begin(), test.end());
        for (std::size_t i = 0; i < case_ids.size(); ++i)
            if (!std::binary_search(test.begin(), test.end(), i))
                plan.train_indices[static_cast<std::size_t>(f)].push_back(i);
    }
    return plan;
}

ConfusionMetrics confusion_metrics(const std::vector<double>& death_scores,
                                   const std::vector<int>& labels, double threshold) {
    if (death_scores.size() != labels.size())
        throw std::invalid_argument("confusion_metrics: length mismatch");
    if (death_scores.empty()) throw std::invalid_argument("confusion_metrics: empty input");

    std::size_t dead = 0, alive = 0, dead_correct = 0, alive_correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted_death = death_scores[i] >= threshold;
        if (labels[i] == 0) {
            ++dead;
            if (predicted_death) ++dead_correct;
        } else {
            ++alive;
            if (!predicted_death) ++alive_correct;
        }
    }
    ConfusionMetrics m;
    m.accuracy = static_cast<double>(dead_correct + alive_correct) /
                 static_cast<double>(labels.size());
    if (dead > 0) m.sensitivity = static_cast<double>(dead_correct) / static_cast<double>(dead);
    if (alive > 0) m.specificity = static_cast<double>(alive_correct) / static_cast<double>(alive);
    return m;
}

double auc(const std::vector<double>& death_scores, const std::vector<int>& labels) {
    if (death_scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
    std::size_t n_dead = 0, n_alive = 0;
    for (int l : labels) (l == 0 ? n_dead : n_alive)++;
    if (n_dead == 0 || n_alive == 0)
        throw std::invalid_argument("auc: both classes must be present");

    // Rank-based Mann-Whitney with midranks for ties.
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return death_scores[a] < death_scores[b];
    });
    double rank_sum_dead = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && death_scores[order[j]] == death_scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 0) rank_sum_dead += midrank;
        i = j;
    }
    const double u = rank_sum_dead - static_cast<double>(n_dead) * (n_dead + 1) / 2.0;
    return u / (static_cast<double>(n_dead) * static_cast<double>(n_alive));
}

namespace {

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    const double n = static_cast<double>(values.size());
    for (double v : values) a.mean += v;
    a.mean /= n;
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(ss / (n - 1));
    }
    const double half = 1.96 * a.stddev / std::sqrt(n);
    a.ci_lo = std::clamp(a.mean - half, 0.0, 1.0);
    a.ci_hi = std::clamp(a.mean + half, 0.0, 1.0);
    return a;
}

}  // namespace

MetricReport cross_validate(const featsel::FeatureMatrix& features,
                            const std::vector<int>& labels, const std::string& category,
                            const FoldPlan& plan, const PipelineConfig& cfg) {
    features.validate();
    if (labels.size() != features.n_cases)
        throw std::invalid_argument("cross_validate: labels/cases length mismatch");

    MetricReport report;
    report.category = category;
    std::vector<double> accs, senss, specs, aucs;

    for (int f = 0; f < plan.n_folds; ++f) {
        const auto& train = plan.train_indices[static_cast<std::size_t>(f)];
        const auto& test = plan.test_indices[static_cast<std::size_t>(f)];
        if (train.empty() || test.empty())
            throw std::runtime_error("cross_validate: empty fold " + std::to_string(f));

        try {
            const std::uint64_t fold_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(f));
            featsel::FeatureMatrix Xtr = features.select_rows(train);
            std::vector<double> ytr;
            for (std::size_t i : train) ytr.push_back(static_cast<double>(labels[i]));

            auto [Xvar, removed] = featsel::remove_constant_features(Xtr);
            auto [medoids, sel_report] =
                featsel::select_k(Xvar, cfg.k_min, cfg.k_max, cfg.restarts, fold_seed);

            featsel::FeatureMatrix Xstd = medoids;
            const survival::Standardization st = survival::standardize_columns(Xstd);

            survival::LassoResult lasso;
            double lambda = 0;
            if (cfg.fixed_lambda) {
                lambda = *cfg.fixed_lambda;
                lasso = survival::lasso_fit(Xstd, ytr, lambda);
            } else {
                const double lmax = survival::lasso_lambda_max(Xstd, ytr);
                const auto grid =
                    survival::lambda_grid(lmax, cfg.lasso_grid_points, cfg.lasso_grid_decades);
                auto cv = survival::lasso_cv(medoids, ytr, grid, cfg.lasso_folds, fold_seed);
                lambda = cv.lambda;
                lasso = std::move(cv.fit);
            }

            survival::SurvivalModel model;
            model.category = category;
            model.lambda = lambda;
            for (std::size_t j : lasso.selected_indices) {
                model.feature_ids.push_back(medoids.feature_ids[j]);
                model.standardization.mean.push_back(st.mean[j]);
                model.standardization.stddev.push_back(st.stddev[j]);
            }
            featsel::FeatureMatrix Xsel = Xstd.select_columns(lasso.selected_indices);
            const survival::LogisticModel logit = survival::logistic_fit(Xsel, ytr);
            model.beta = logit.beta;

            std::vector<double> scores;
            std::vector<int> ytest;
            for (std::size_t i : test) {
                scores.push_back(survival::predict_death(model, features, i));
                ytest.push_back(labels[i]);
            }

            FoldMetrics fm;
            const ConfusionMetrics cm = confusion_metrics(scores, ytest);
            fm.accuracy = cm.accuracy;
            fm.sensitivity = cm.sensitivity;
            fm.specificity = cm.specificity;
            fm.auc = auc(scores, ytest);
            report.folds.push_back(fm);
            report.fold_models.push_back(std::move(model));

            accs.push_back(fm.accuracy);
            if (fm.sensitivity) senss.push_back(*fm.sensitivity);
            if (fm.specificity) specs.push_back(*fm.specificity);
            aucs.push_back(fm.auc);
        } catch (const std::exception& e) {
            throw std::runtime_error("cross_validate: fold " + std::to_string(f) + ": " +
                                     e.what());
        }
    }

    report.accuracy = aggregate(accs);
    report.sensitivity = aggregate(senss);
    report.specificity = aggregate(specs);
    report.auc = aggregate(aucs);
    return report;
}

}  // namespace unetsurv::metrics
