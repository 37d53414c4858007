#include "unetsurv/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "unetsurv/kmedoids.hpp"
#include "unetsurv/metrics.hpp"
#include "unetsurv/parallel.hpp"
#include "unetsurv/phantom.hpp"
#include "unetsurv/rng.hpp"
#include "unetsurv/visualize.hpp"

namespace unetsurv::pipeline {

namespace {

constexpr const char* kVersion = "unetsurv 0.1.0";

// Fixed per-stage salts keep seed streams independent.
enum SeedStream : std::uint64_t {
    seed_phantom = 1,
    seed_train_ct = 2,
    seed_train_pet = 3,
    seed_aug_ct = 4,
    seed_aug_pet = 5,
    seed_select = 6,
    seed_fit = 7,
    seed_folds = 8,
    seed_cv = 9,
    seed_viz = 10,
};

class StageTimer {
public:
    explicit StageTimer(std::string name) : record_{std::move(name), 0, {}} {}
    void artifact(const std::filesystem::path& root, const std::filesystem::path& p) {
        record_.artifacts.push_back(std::filesystem::relative(p, root).string());
    }
    StageRecord finish() {
        record_.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::fprintf(stdout, "[%s] done in %.1f s (%zu artifacts)\n", record_.name.c_str(),
                     record_.seconds, record_.artifacts.size());
        return record_;
    }

private:
    StageRecord record_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

phantom::PhantomSpec phantom_spec(const PipelineConfig& cfg) {
    phantom::PhantomSpec spec;
    spec.dims = cfg.phantom.dims;
    spec.radius_min = static_cast<float>(cfg.phantom.radius_min);
    spec.radius_max = static_cast<float>(cfg.phantom.radius_max);
    spec.heterogeneity = static_cast<float>(cfg.phantom.heterogeneity);
    spec.vessel_count = cfg.phantom.vessel_count;
    spec.noise_sigma = static_cast<float>(cfg.phantom.noise_sigma);
    spec.seed = derive_seed(cfg.seed, seed_phantom);
    return spec;
}

std::string case_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "case_%03d", id);
    return buf;
}

std::vector<std::string> active_modalities(const PipelineConfig& cfg) {
    if (cfg.modality == "both") return {"ct", "pet"};
    return {cfg.modality};
}

struct LoadedCase {
    vol::Volume image;  // preprocessed
    vol::Volume mask;   // preprocessed
};

LoadedCase load_case(const PipelineConfig& cfg, const CohortEntry& e, vol::Modality m) {
    const vol::Volume raw = vol::read_volume(m == vol::Modality::ct ? e.ct : e.pet);
    const vol::Volume mask = vol::read_volume(e.mask);
    LoadedCase out;
    out.image = preprocess_image(cfg, raw, mask);
    out.mask = preprocess_mask(cfg, mask);
    return out;
}

featsel::FeatureMatrix load_features(const PipelineConfig& cfg, const std::string& source) {
    const Layout layout(cfg);
    return featsel::read_feature_csv(layout.features_csv(source));
}

std::vector<int> manifest_labels(const std::vector<CohortEntry>& cohort) {
    std::vector<int> labels;
    labels.reserve(cohort.size());
    for (const CohortEntry& e : cohort) labels.push_back(e.label);
    return labels;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("pipeline: cannot write " + path.string());
    out << text;
}

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Shared by cmd_fit and cmd_visualize model preparation: reduce a feature
// matrix and fit LASSO + logistic on it.
survival::SurvivalModel fit_survival_model(const PipelineConfig& cfg,
                                           const featsel::FeatureMatrix& raw_features,
                                           const std::vector<int>& labels,
                                           std::uint64_t seed, bool already_reduced) {
    featsel::FeatureMatrix reduced;
    if (already_reduced) {
        reduced = raw_features;
    } else {
        auto [variable, removed] = featsel::remove_constant_features(raw_features);
        auto [med, report] =
            featsel::select_k(variable, cfg.cluster.k_min, cfg.cluster.k_max,
                              cfg.cluster.restarts, seed);
        reduced = std::move(med);
    }
    std::vector<double> y(labels.begin(), labels.end());

    featsel::FeatureMatrix standardized = reduced;
    const survival::Standardization st = survival::standardize_columns(standardized);

    survival::LassoResult lasso;
    double lambda = 0;
    if (cfg.lasso.fixed_lambda) {
        lambda = *cfg.lasso.fixed_lambda;
        lasso = survival::lasso_fit(standardized, y, lambda);
    } else {
        const double lmax = survival::lasso_lambda_max(standardized, y);
        const auto grid =
            survival::lambda_grid(lmax, cfg.lasso.grid_points, cfg.lasso.grid_decades);
        auto cv = survival::lasso_cv(reduced, y, grid, cfg.lasso.folds, seed);
        lambda = cv.lambda;
        lasso = std::move(cv.fit);
    }
    if (lasso.selected_indices.empty())
        std::cerr << "warning: LASSO selected no features; falling back to an intercept-only "
                     "survival model\n";

    survival::SurvivalModel model;
    model.category = cfg.cv.category;
    model.lambda = lambda;
    for (std::size_t j : lasso.selected_indices) {
        model.feature_ids.push_back(reduced.feature_ids[j]);
        model.standardization.mean.push_back(st.mean[j]);
        model.standardization.stddev.push_back(st.stddev[j]);
    }
    const featsel::FeatureMatrix Xsel = standardized.select_columns(lasso.selected_indices);
    model.beta = survival::logistic_fit(Xsel, y).beta;
    return model;
}

}  // namespace

std::vector<CohortEntry> read_cohort_manifest(const std::filesystem::path& manifest_csv) {
    std::ifstream in(manifest_csv);
    if (!in) throw std::runtime_error("manifest: cannot open " + manifest_csv.string());
    const std::filesystem::path base = manifest_csv.parent_path().parent_path();
    std::string line;
    if (!std::getline(in, line) ||
        line != "case_id,ct_path,pet_path,mask_path,survival_label,tumor_volume,heterogeneity")
        throw std::runtime_error("manifest: bad header in " + manifest_csv.string());
    std::vector<CohortEntry> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        CohortEntry e;
        std::string tok;
        std::getline(ss, e.case_id, ',');
        std::getline(ss, tok, ',');
        e.ct = base / tok;
        std::getline(ss, tok, ',');
        e.pet = base / tok;
        std::getline(ss, tok, ',');
        e.mask = base / tok;
        std::getline(ss, tok, ',');
        e.label = std::stoi(tok);
        std::getline(ss, tok, ',');
        e.tumor_volume = std::stod(tok);
        std::getline(ss, tok, ',');
        e.heterogeneity = std::stod(tok);
        out.push_back(std::move(e));
    }
    return out;
}

vol::Volume preprocess_image(const PipelineConfig& cfg, const vol::Volume& image,
                             const vol::Volume& mask) {
    const vol::Volume iso =
        vol::resample_isotropic(image, static_cast<float>(cfg.preprocess.target_spacing));
    const vol::Volume iso_mask =
        vol::resample_isotropic(mask, static_cast<float>(cfg.preprocess.target_spacing));
    const vol::Volume clipped = vol::clip_intensity(iso, vol::default_clip_range(image.modality));
    return vol::crop_roi(clipped, iso_mask, cfg.phantom.dims);
}

vol::Volume preprocess_mask(const PipelineConfig& cfg, const vol::Volume& mask) {
    const vol::Volume iso =
        vol::resample_isotropic(mask, static_cast<float>(cfg.preprocess.target_spacing));
    return vol::crop_roi(iso, iso, cfg.phantom.dims);
}

unet::UNetConfig make_unet_config(const PipelineConfig& cfg, vol::Modality m) {
    unet::UNetConfig uc;
    uc.input_dims = {static_cast<int>(cfg.phantom.dims[0]), static_cast<int>(cfg.phantom.dims[1]),
                     static_cast<int>(cfg.phantom.dims[2])};
    uc.base_width = cfg.unet.base_width;
    uc.depth = cfg.unet.depth;
    uc.convs_per_level = cfg.unet.convs_per_level;
    const vol::ClipRange r = vol::default_clip_range(m);
    uc.input_lo = r.lo;
    uc.input_hi = r.hi;
    uc.validate();
    return uc;
}

StageRecord cmd_gen(const PipelineConfig& cfg) {
    StageTimer timer("gen");
    const Layout layout(cfg);
    std::filesystem::create_directories(layout.cohort_dir());

    const phantom::PhantomSpec spec = phantom_spec(cfg);
    phantom::SurvivalCoeffs coeffs{cfg.phantom.label_a0, cfg.phantom.label_a1,
                                   cfg.phantom.label_a2};
    const auto cohort = phantom::generate_cohort(spec, cfg.phantom.n_cases, coeffs);

    std::vector<std::array<std::string, 3>> rel_paths(cohort.size());
    parallel_for(cohort.size(), cfg.jobs, [&](std::size_t i) {
        const phantom::PhantomCase& c = cohort[i];
        const std::string base = case_name(c.case_id);
        const std::array<std::string, 3> rel = {"cohort/" + base + "_ct.vol",
                                                "cohort/" + base + "_pet.vol",
                                                "cohort/" + base + "_mask.vol"};
        vol::write_volume(c.ct, layout.root / rel[0]);
        vol::write_volume(c.pet, layout.root / rel[1]);
        vol::write_volume(c.mask, layout.root / rel[2]);
        rel_paths[i] = rel;
    });

    std::ostringstream manifest;
    manifest << "case_id,ct_path,pet_path,mask_path,survival_label,tumor_volume,heterogeneity\n";
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const phantom::PhantomCase& c = cohort[i];
        manifest << case_name(c.case_id) << ',' << rel_paths[i][0] << ',' << rel_paths[i][1]
                 << ',' << rel_paths[i][2] << ',' << c.survival_label << ','
                 << format_double(c.tumor_volume) << ',' << format_double(c.heterogeneity)
                 << '\n';
    }
    write_text(layout.manifest_csv(), manifest.str());

    for (const auto& rel : rel_paths)
        for (const std::string& p : rel) timer.artifact(layout.root, layout.root / p);
    timer.artifact(layout.root, layout.manifest_csv());
    return timer.finish();
}

StageRecord cmd_train_seg(const PipelineConfig& cfg, const std::string& modality) {
    StageTimer timer("train-seg:" + modality);
    const Layout layout(cfg);
    const vol::Modality m = vol::modality_from_string(modality);
    const auto cohort = read_cohort_manifest(layout.manifest_csv());

    const int want = cfg.unet.seg_train_cases + cfg.unet.seg_val_cases;
    if (static_cast<int>(cohort.size()) < want)
        throw std::invalid_argument("train-seg: cohort smaller than seg_train+seg_val cases");

    std::vector<std::pair<vol::Volume, vol::Volume>> train_pairs, val_pairs;
    for (int i = 0; i < want; ++i) {
        LoadedCase lc = load_case(cfg, cohort[static_cast<std::size_t>(i)], m);
        auto& dst = i < cfg.unet.seg_train_cases ? train_pairs : val_pairs;
        dst.emplace_back(std::move(lc.image), std::move(lc.mask));
    }

    unet::UNetModel<float> model = unet::build<float>(
        make_unet_config(cfg, m),
        derive_seed(cfg.seed, m == vol::Modality::ct ? seed_train_ct : seed_train_pet));

    unet::TrainConfig tc;
    tc.epochs = cfg.unet.epochs;
    tc.adam.lr = cfg.unet.learning_rate;
    tc.adam.weight_decay = cfg.unet.weight_decay;
    tc.aug_per_pair = cfg.unet.aug_per_pair;
    tc.augmentation.max_translation = cfg.unet.max_translation;
    tc.augmentation.rotations = cfg.unet.rotations;
    for (char f : cfg.unet.flips) tc.augmentation.flips.push_back(f);
    tc.seed = derive_seed(cfg.seed, m == vol::Modality::ct ? seed_aug_ct : seed_aug_pet);

    const unet::TrainHistory history = unet::train(model, train_pairs, val_pairs, tc);

    std::filesystem::create_directories(layout.checkpoint(modality).parent_path());
    unet::save_checkpoint(model, layout.checkpoint(modality));

    std::ostringstream hist;
    hist << "epoch,mean_loss,val_dsc\n";
    for (std::size_t e = 0; e < history.epochs.size(); ++e)
        hist << e << ',' << format_double(history.epochs[e].mean_loss) << ','
             << format_double(history.epochs[e].val_dsc) << '\n';
    write_text(layout.history_csv(modality), hist.str());

    std::fprintf(stdout, "[train-seg:%s] best epoch %d, validation DSC %.4f\n", modality.c_str(),
                 history.best_epoch, history.best_val_dsc);
    timer.artifact(layout.root, layout.checkpoint(modality));
    timer.artifact(layout.root, layout.history_csv(modality));
    return timer.finish();
}

StageRecord cmd_extract(const PipelineConfig& cfg) {
    StageTimer timer("extract");
    const Layout layout(cfg);
    const auto cohort = read_cohort_manifest(layout.manifest_csv());
    std::filesystem::create_directories(layout.features_csv("ct").parent_path());

    std::vector<featsel::FeatureMatrix> mats;
    for (const std::string& modality : active_modalities(cfg)) {
        const vol::Modality m = vol::modality_from_string(modality);
        unet::UNetModel<float> model = unet::build<float>(make_unet_config(cfg, m), 0);
        unet::load_checkpoint(model, layout.checkpoint(modality));

        featsel::FeatureMatrix fm;
        fm.n_cases = cohort.size();
        fm.n_features = model.config.bottleneck_feature_count();
        fm.values.assign(fm.n_cases * fm.n_features, 0.0);
        fm.feature_ids.resize(fm.n_features);
        for (std::size_t j = 0; j < fm.n_features; ++j)
            fm.feature_ids[j] = unet::feature_name(m, j);
        fm.case_ids.resize(fm.n_cases);
        fm.modalities.assign(fm.n_cases, modality);

        parallel_for(cohort.size(), cfg.jobs, [&](std::size_t i) {
            const LoadedCase lc = load_case(cfg, cohort[i], m);
            const std::vector<float> feats = unet::encode_bottleneck(model, lc.image);
            for (std::size_t j = 0; j < feats.size(); ++j)
                fm.at(i, j) = static_cast<double>(feats[j]);
            fm.case_ids[i] = cohort[i].case_id;
        });
        featsel::write_feature_csv(fm, layout.features_csv(modality));
        timer.artifact(layout.root, layout.features_csv(modality));
        mats.push_back(std::move(fm));
    }
    if (mats.size() == 2) {
        featsel::write_feature_csv(featsel::concat_features(mats[0], mats[1]),
                                   layout.features_csv("both"));
        timer.artifact(layout.root, layout.features_csv("both"));
    }
    return timer.finish();
}

StageRecord cmd_select(const PipelineConfig& cfg) {
    StageTimer timer("select");
    const Layout layout(cfg);
    const featsel::FeatureMatrix features = load_features(cfg, cfg.cluster.source);

    auto [variable, removed] = featsel::remove_constant_features(features);
    auto [reduced, report] = featsel::select_k(variable, cfg.cluster.k_min, cfg.cluster.k_max,
                                               cfg.cluster.restarts,
                                               derive_seed(cfg.seed, seed_select));

    std::filesystem::create_directories(layout.reduced_csv().parent_path());
    featsel::write_feature_csv(reduced, layout.reduced_csv());

    nlohmann::ordered_json j;
    j["k"] = report.k_star;
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    nlohmann::ordered_json within = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        curve.push_back({report.ks[i], report.silhouettes[i]});
        within.push_back({report.ks[i], report.mean_within[i]});
    }
    j["silhouette_curve"] = curve;
    j["mean_within_per_k"] = within;
    j["medoid_ids"] = report.medoid_ids;
    j["removed_constant_features"] = removed;
    write_text(layout.cluster_report(), j.dump(2) + "\n");

    timer.artifact(layout.root, layout.reduced_csv());
    timer.artifact(layout.root, layout.cluster_report());
    return timer.finish();
}

StageRecord cmd_fit(const PipelineConfig& cfg) {
    StageTimer timer("fit");
    const Layout layout(cfg);
    const auto cohort = read_cohort_manifest(layout.manifest_csv());
    const std::vector<int> labels = manifest_labels(cohort);

    // Main model from the select stage's reduced features.
    const featsel::FeatureMatrix reduced = featsel::read_feature_csv(layout.reduced_csv());
    if (reduced.n_cases != cohort.size())
        throw std::runtime_error("fit: reduced features and manifest disagree on case count");
    const survival::SurvivalModel model =
        fit_survival_model(cfg, reduced, labels, derive_seed(cfg.seed, seed_fit), true);
    std::filesystem::create_directories(layout.model_json(cfg.cluster.source).parent_path());
    survival::save_model(model, layout.model_json(cfg.cluster.source));
    timer.artifact(layout.root, layout.model_json(cfg.cluster.source));

    // Per-modality model for visualization (risk maps differentiate through a
    // single network, so its survival model must consume only that modality).
    if (cfg.viz.modality != cfg.cluster.source) {
        const featsel::FeatureMatrix viz_features = load_features(cfg, cfg.viz.modality);
        const survival::SurvivalModel viz_model = fit_survival_model(
            cfg, viz_features, labels, derive_seed(cfg.seed, seed_fit + 100), false);
        survival::save_model(viz_model, layout.model_json(cfg.viz.modality));
        timer.artifact(layout.root, layout.model_json(cfg.viz.modality));
    }
    return timer.finish();
}

StageRecord cmd_eval(const PipelineConfig& cfg) {
    StageTimer timer("eval");
    const Layout layout(cfg);
    const auto cohort = read_cohort_manifest(layout.manifest_csv());
    const std::vector<int> labels = manifest_labels(cohort);
    const featsel::FeatureMatrix features = load_features(cfg, cfg.cluster.source);
    if (features.n_cases != cohort.size())
        throw std::runtime_error("eval: features and manifest disagree on case count");

    std::vector<std::string> case_ids;
    for (const CohortEntry& e : cohort) case_ids.push_back(e.case_id);
    const metrics::FoldPlan plan =
        metrics::make_folds(case_ids, labels, cfg.cv.folds, derive_seed(cfg.seed, seed_folds));

    metrics::PipelineConfig mc;
    mc.k_min = cfg.cluster.k_min;
    mc.k_max = cfg.cluster.k_max;
    mc.restarts = cfg.cluster.restarts;
    mc.lasso_grid_points = cfg.lasso.grid_points;
    mc.lasso_grid_decades = cfg.lasso.grid_decades;
    mc.lasso_folds = cfg.lasso.folds;
    mc.fixed_lambda = cfg.lasso.fixed_lambda;
    mc.seed = derive_seed(cfg.seed, seed_cv);

    const metrics::MetricReport report =
        metrics::cross_validate(features, labels, cfg.cv.category, plan, mc);

    std::ostringstream csv;
    csv << "category,fold,accuracy,sensitivity,specificity,auc\n";
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        const metrics::FoldMetrics& fm = report.folds[f];
        csv << report.category << ',' << f << ',' << format_double(fm.accuracy) << ',';
        if (fm.sensitivity) csv << format_double(*fm.sensitivity);
        csv << ',';
        if (fm.specificity) csv << format_double(*fm.specificity);
        csv << ',' << format_double(fm.auc) << '\n';
    }
    std::filesystem::create_directories(layout.metrics_csv().parent_path());
    write_text(layout.metrics_csv(), csv.str());

    const auto agg_json = [](const metrics::Aggregate& a) {
        return nlohmann::ordered_json{
            {"mean", a.mean}, {"stddev", a.stddev}, {"ci95", {a.ci_lo, a.ci_hi}}};
    };
    nlohmann::ordered_json j;
    j["category"] = report.category;
    j["n_folds"] = report.folds.size();
    j["accuracy"] = agg_json(report.accuracy);
    j["sensitivity"] = agg_json(report.sensitivity);
    j["specificity"] = agg_json(report.specificity);
    j["auc"] = agg_json(report.auc);
    write_text(layout.summary_json(), j.dump(2) + "\n");

    std::fprintf(stdout, "[eval] %s mean AUC %.4f (ci %.4f-%.4f)\n", report.category.c_str(),
                 report.auc.mean, report.auc.ci_lo, report.auc.ci_hi);
    timer.artifact(layout.root, layout.metrics_csv());
    timer.artifact(layout.root, layout.summary_json());
    return timer.finish();
}

StageRecord cmd_visualize(const PipelineConfig& cfg) {
    StageTimer timer("visualize");
    const Layout layout(cfg);
    const vol::Modality m = vol::modality_from_string(cfg.viz.modality);
    const auto cohort = read_cohort_manifest(layout.manifest_csv());

    unet::UNetModel<float> model = unet::build<float>(make_unet_config(cfg, m), 0);
    unet::load_checkpoint(model, layout.checkpoint(cfg.viz.modality));
    const survival::SurvivalModel sm = survival::load_model(layout.model_json(cfg.viz.modality));
    if (sm.feature_ids.empty())
        std::cerr << "warning: survival model has no selected features; risk maps will be zero\n";

    std::filesystem::create_directories(layout.viz_dir());
    const char axis = cfg.viz.axis[0];

    // Activation maximization of the LASSO-selected neurons, strongest
    // coefficients first.
    std::vector<std::size_t> order(sm.feature_ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double wa = std::abs(sm.beta[a + 1]), wb = std::abs(sm.beta[b + 1]);
        if (wa != wb) return wa > wb;
        return sm.feature_ids[a] < sm.feature_ids[b];
    });
    if (static_cast<int>(order.size()) > cfg.viz.neurons)
        order.resize(static_cast<std::size_t>(cfg.viz.neurons));

    viz::ActMaxConfig ac;
    ac.iterations = cfg.viz.iterations;
    ac.init_mean = cfg.viz.init_mean;
    ac.init_std = cfg.viz.init_std;
    for (std::size_t idx : order) {
        const std::string& feature = sm.feature_ids[idx];
        std::size_t flat = 0;
        for (std::size_t j = 0; j < model.config.bottleneck_feature_count(); ++j)
            if (unet::feature_name(m, j) == feature) {
                flat = j;
                break;
            }
        ac.seed = derive_seed(cfg.seed, seed_viz + flat);
        const auto result = viz::activation_maximize(model, flat, ac, m);
        const auto paths =
            viz::export_slices(result.image, nullptr, axis, layout.viz_dir(), "actmax_" + feature);
        for (const auto& p : paths) timer.artifact(layout.root, p);
    }

    // Risk-map overlays for the first configured cases.
    const int n_cases = std::min<int>(cfg.viz.cases, static_cast<int>(cohort.size()));
    for (int i = 0; i < n_cases; ++i) {
        const LoadedCase lc = load_case(cfg, cohort[static_cast<std::size_t>(i)], m);
        viz::RiskMap rm = viz::risk_map(model, sm, lc.image);
        rm.case_id = cohort[static_cast<std::size_t>(i)].case_id;
        const auto paths = viz::export_slices(lc.image, &rm, axis, layout.viz_dir(),
                                              "risk_" + rm.case_id);
        for (const auto& p : paths) timer.artifact(layout.root, p);
    }
    return timer.finish();
}

std::vector<StageRecord> cmd_run_all(const PipelineConfig& cfg) {
    std::vector<StageRecord> stages;
    stages.push_back(cmd_gen(cfg));
    for (const std::string& modality : active_modalities(cfg))
        stages.push_back(cmd_train_seg(cfg, modality));
    stages.push_back(cmd_extract(cfg));
    stages.push_back(cmd_select(cfg));
    stages.push_back(cmd_fit(cfg));
    stages.push_back(cmd_eval(cfg));
    stages.push_back(cmd_visualize(cfg));

    const Layout layout(cfg);
    nlohmann::ordered_json j;
    j["config_hash"] = config_fingerprint(cfg);
    j["version"] = kVersion;
    nlohmann::ordered_json stage_list = nlohmann::ordered_json::array();
    for (const StageRecord& s : stages) {
        stage_list.push_back({{"name", s.name},
                              {"seconds", s.seconds},
                              {"artifacts", s.artifacts}});
    }
    j["stages"] = stage_list;
    write_text(layout.run_manifest(), j.dump(2) + "\n");
    return stages;
}

}  // namespace unetsurv::pipeline
