#include <torch/torch.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "deocc/errors.hpp"
#include "deocc/experiments.hpp"

namespace fs = std::filesystem;
using namespace deocc;

namespace {

struct Common {
    std::string config_file;
    std::string output;
    std::vector<std::string> sets;  // key=value overrides, value parsed as JSON when possible
};

RunConfig resolve(const Common& c) {
    nlohmann::json j = nlohmann::json::object();
    if (!c.config_file.empty()) j = nlohmann::json::parse(read_text(c.config_file));
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        const auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
        try {
            j[key] = nlohmann::json::parse(val);
        } catch (const nlohmann::json::exception&) {
            j[key] = val;
        }
    }
    if (!c.output.empty()) {
        j["output_dir"] = c.output;
    } else if (!j.contains("output_dir")) {
        const char* root = std::getenv("DEOCC_OUTPUT_ROOT");
        j["output_dir"] = (fs::path(root ? root : "runs") / "default").string();
    }
    auto cfg = run_config_from_json(j);
    validate(cfg);
    return cfg;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "JSON run configuration");
    app->add_option("--output", c.output, "run directory (default $DEOCC_OUTPUT_ROOT/default)");
    app->add_option("--set", c.sets, "override a config field, key=value");
}

}  // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"stick-figure de-occlusion experiments"};
    app.require_subcommand(1);
    Common common;

    auto* gen = app.add_subcommand("gen-data", "generate train/val/test splits");
    add_common(gen, common);

    auto* train = app.add_subcommand("train", "train one stage");
    add_common(train, common);
    std::string stage;
    bool resume = false;
    int stop_after = -1;
    train->add_option("stage", stage, "codec | mask | rgb")->required();
    train->add_flag("--resume", resume, "continue from the existing mask checkpoint");
    train->add_option("--stop-after", stop_after, "mask: stop at this iteration");

    auto* infer = app.add_subcommand("infer", "run the two-stage pipeline on a split");
    add_common(infer, common);
    InferOptions io;
    bool mask_only = false;
    infer->add_option("--split", io.split, "train | val | test");
    infer->add_option("--limit", io.limit, "first N records only");
    infer->add_flag("--mask-only", mask_only, "skip the RGB stage");

    auto* eval = app.add_subcommand("eval", "score inference outputs");
    add_common(eval, common);
    std::string eval_split = "test";
    eval->add_option("--split", eval_split);

    auto* ablate = app.add_subcommand("ablate", "run an ablation study");
    add_common(ablate, common);
    std::string study;
    ablate->add_option("study", study)->required()->check(CLI::IsMember(study_names()));

    auto* verify = app.add_subcommand("verify-manifest", "replay records of an inference run and diff bytes");
    std::string verify_dir;
    int verify_n = 10;
    verify->add_option("dir", verify_dir, "inference output directory")->required();
    verify->add_option("--records", verify_n);

    auto* show = app.add_subcommand("show-config", "print the resolved configuration and its hash");
    add_common(show, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto s = cmd_gen_data(resolve(common));
            std::cout << "generated " << s.generated << " records, " << s.failed << " failures, mean ratio "
                      << s.ratio_mean << "\n";
        } else if (*train) {
            const auto cfg = resolve(common);
            const auto r = cmd_train(parse_stage(stage), cfg, resume, stop_after);
            std::cout << "checkpoint " << r.checkpoint << " (" << r.seconds << " s)";
            if (!r.curve.empty()) std::cout << ", loss " << r.curve.front() << " -> " << r.curve.back();
            std::cout << "\n";
        } else if (*infer) {
            io.rgb = !mask_only;
            const auto r = cmd_infer(resolve(common), io);
            std::cout << "wrote " << r.written << " records, " << r.failures.size() << " failures\n";
        } else if (*eval) {
            const auto rep = cmd_eval(resolve(common), eval_split);
            for (const auto& col : rep.columns) {
                const auto& s = rep.summary.at(col);
                std::cout << col << " = ";
                if (s.mean)
                    std::cout << *s.mean;
                else
                    std::cout << "n/a";
                std::cout << " (" << s.included << " records, " << s.skipped << " skipped)\n";
            }
        } else if (*ablate) {
            std::cout << cmd_ablate(study, resolve(common)).to_csv();
        } else if (*verify) {
            const auto v = verify_manifest(verify_dir, verify_n);
            std::cout << "replayed " << v.checked << " records, " << v.mismatches.size() << " mismatching files\n";
            for (const auto& m : v.mismatches) std::cout << "  " << m << "\n";
            return v.mismatches.empty() ? 0 : 1;
        } else if (*show) {
            const auto cfg = resolve(common);
            std::cout << to_json(cfg).dump(2) << "\nhash " << config_hash(cfg) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
