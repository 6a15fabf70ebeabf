#include <cstdint>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "coseg/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::int64_t seed = -1;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "pipeline config JSON")->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--out", args.out, "override the output directory");
    cmd->add_flag("--force", args.force, "run despite manifest config-hash mismatches");
}

coseg::PipelineConfig resolve(const CommonArgs& args) {
    coseg::PipelineConfig cfg = coseg::load_config(args.config);
    if (!args.out.empty()) cfg.output_dir = args.out;
    if (args.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(args.seed);
        cfg.phantom.seed = cfg.seed;
        cfg.train.seed = cfg.seed ^ 0x747261696eULL;
    }
    std::filesystem::create_directories(cfg.output_dir);
    return cfg;
}

void print_report(const coseg::EvalReport& report, bool table) {
    if (table) {
        std::cout << coseg::format_report_table(report, "coseg");
    } else {
        std::cout << "dice " << report.dice.mean << " recall " << report.recall.mean
                  << " precision " << report.precision.mean << " vs " << report.vs.mean << " avd "
                  << report.avd.mean << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly supervised lesion co-segmentation pipeline"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* desc;
        std::function<void(const coseg::PipelineConfig&, const coseg::StageOptions&)> run;
    };
    const Sub subs[] = {
        {"phantom", "generate the synthetic lesion dataset", coseg::cmd_phantom},
        {"gen-masks", "GrabCut initial masks from RECIST annotations", coseg::cmd_gen_masks},
        {"cluster", "extract features and cluster lesions", coseg::cmd_cluster},
        {"split", "stratified train/val/test split", coseg::cmd_split},
        {"pair", "build within-cluster (or random) training pairs", coseg::cmd_pair},
        {"train", "train the co-segmentation network", coseg::cmd_train},
        {"infer", "predict probability maps and masks on the test split", coseg::cmd_infer},
        {"refine", "dense-CRF mean-field refinement of the predictions", coseg::cmd_refine},
    };

    std::vector<std::pair<CommonArgs, const Sub*>> bound;
    bound.reserve(std::size(subs) + 4);
    for (const auto& s : subs) {
        CLI::App* cmd = app.add_subcommand(s.name, s.desc);
        bound.emplace_back(CommonArgs{}, &s);
        add_common(cmd, bound.back().first);
        CommonArgs* args = &bound.back().first;
        const Sub* sub = &s;
        cmd->callback([args, sub] {
            const coseg::PipelineConfig cfg = resolve(*args);
            sub->run(cfg, coseg::StageOptions{args->force});
        });
    }

    CommonArgs eval_args;
    std::string eval_pred_dir = "refined";
    bool eval_table = false;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "score predictions against ground truth");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--pred-dir", eval_pred_dir,
                         "prediction directory under the output dir (refined/pred/masks_init)");
    eval_cmd->add_flag("--table", eval_table, "print a formatted metric table");
    eval_cmd->callback([&] {
        const coseg::PipelineConfig cfg = resolve(eval_args);
        const coseg::EvalReport report =
            coseg::cmd_evaluate(cfg, coseg::StageOptions{eval_args.force}, eval_pred_dir);
        print_report(report, eval_table);
    });

    CommonArgs ov_args;
    std::string ov_pred_dir = "refined";
    CLI::App* ov_cmd = app.add_subcommand("overlay", "render prediction/GT contour overlays");
    add_common(ov_cmd, ov_args);
    ov_cmd->add_option("--pred-dir", ov_pred_dir, "prediction directory under the output dir");
    ov_cmd->callback([&] {
        const coseg::PipelineConfig cfg = resolve(ov_args);
        coseg::cmd_overlay(cfg, coseg::StageOptions{ov_args.force}, ov_pred_dir);
    });

    CommonArgs run_args;
    bool run_table = false;
    CLI::App* run_cmd = app.add_subcommand("run", "run every stage end to end");
    add_common(run_cmd, run_args);
    run_cmd->add_flag("--table", run_table, "print a formatted metric table");
    run_cmd->callback([&] {
        const coseg::PipelineConfig cfg = resolve(run_args);
        const coseg::EvalReport report =
            coseg::run_full_pipeline(cfg, coseg::StageOptions{run_args.force});
        print_report(report, run_table);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
