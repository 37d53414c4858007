#include "unetsurv/cli.hpp"

#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "unetsurv/pipeline.hpp"

namespace unetsurv::cli {

namespace {

struct CommonOptions {
    std::string config_path;
    std::string modality;  // empty = from config
    long long seed = -1;   // -1 = from config
    int jobs = 0;          // 0 = from config
};

pipeline::PipelineConfig effective_config(const CommonOptions& opt) {
    pipeline::PipelineConfig cfg = pipeline::load_config(opt.config_path);
    if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
    if (opt.jobs > 0) cfg.jobs = opt.jobs;
    if (!opt.modality.empty()) cfg.modality = opt.modality;
    return cfg;
}

void add_common(CLI::App* sub, CommonOptions& opt) {
    sub->add_option("--config", opt.config_path, "pipeline configuration file")
        ->required();
    sub->add_option("--seed", opt.seed, "override the master seed");
    sub->add_option("--jobs", opt.jobs, "worker threads for per-case stages");
    sub->add_option("--modality", opt.modality, "ct, pet or both")
        ->check(CLI::IsMember({"ct", "pet", "both"}));
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Phantom-scale U-Net survival pipeline"};
    app.require_subcommand(1);

    CommonOptions opt;
    CLI::App* gen = app.add_subcommand("gen", "generate the phantom cohort");
    CLI::App* train = app.add_subcommand("train-seg", "train segmentation U-Net(s)");
    CLI::App* extract = app.add_subcommand("extract", "extract bottleneck features");
    CLI::App* select = app.add_subcommand("select", "k-medoids feature reduction");
    CLI::App* fit = app.add_subcommand("fit", "LASSO + logistic survival fit");
    CLI::App* eval = app.add_subcommand("eval", "cross-validated metrics");
    CLI::App* visualize = app.add_subcommand("visualize", "activation maxima and risk maps");
    CLI::App* run_all = app.add_subcommand("run-all", "all stages in order");
    for (CLI::App* sub : {gen, train, extract, select, fit, eval, visualize, run_all})
        add_common(sub, opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const pipeline::PipelineConfig cfg = effective_config(opt);
        if (gen->parsed()) {
            pipeline::cmd_gen(cfg);
        } else if (train->parsed()) {
            if (cfg.modality == "both") {
                pipeline::cmd_train_seg(cfg, "ct");
                pipeline::cmd_train_seg(cfg, "pet");
            } else {
                pipeline::cmd_train_seg(cfg, cfg.modality);
            }
        } else if (extract->parsed()) {
            pipeline::cmd_extract(cfg);
        } else if (select->parsed()) {
            pipeline::cmd_select(cfg);
        } else if (fit->parsed()) {
            pipeline::cmd_fit(cfg);
        } else if (eval->parsed()) {
            pipeline::cmd_eval(cfg);
        } else if (visualize->parsed()) {
            pipeline::cmd_visualize(cfg);
        } else if (run_all->parsed()) {
            pipeline::cmd_run_all(cfg);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace unetsurv::cli
