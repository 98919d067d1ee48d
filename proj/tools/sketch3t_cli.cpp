#include "sketch3t/config.hpp"
#include "sketch3t/error.hpp"
#include "sketch3t/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

using namespace sketch3t;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string ablation = "full";
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string out;

    void add_to(CLI::App* app, bool with_data = true) {
        app->add_option("--config", config, "JSON config file (flat dotted keys or nested sections)");
        app->add_option("--set", sets, "override, key=value (repeatable)");
        app->add_option("--ablation", ablation, "preset: full, type1, type2, type3, no_tpa");
        app->add_option("--seed", seed, "master seed");
        if (with_data) app->add_option("--data", data, "dataset file (overrides data.path)");
        app->add_option("--out", out, "output directory (overrides output.dir)");
    }

    ExperimentConfig build() const {
        ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
        apply_ablation(cfg, ablation);
        for (const auto& s : sets) apply_override(cfg, s);
        if (seed) cfg.seed = *seed;
        if (!data.empty()) cfg.data_path = data;
        if (!out.empty()) cfg.output_dir = out;
        return cfg;
    }
};

void print_summary(const ZsReport& rep) {
    std::printf("%-12s %10s %10s\n", "variant", "mAP@all", "P@K");
    for (const auto& v : rep.variants) std::printf("%-12s %10.4f %10.4f\n", v.name.c_str(), v.map, v.precision);
}

int inspect(const std::string& path) {
    const Dataset ds = load_dataset(path);
    std::map<int, int> per_cat, per_style;
    std::size_t total_len = 0;
    int max_len = 0;
    for (const auto& it : ds.items) {
        validate(it.sketch_vec, ds.t_max);
        ++per_cat[it.category_id];
        ++per_style[it.style_id];
        total_len += static_cast<std::size_t>(it.sketch_vec.length());
        max_len = std::max(max_len, it.sketch_vec.length());
    }
    const auto list = [](const std::vector<int>& v) {
        std::string s;
        for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
        return s;
    };
    std::printf("items: %zu  canvas: %d  line_width: %d  t_max: %d\n", ds.items.size(), ds.canvas, ds.line_width, ds.t_max);
    std::printf("meta_train: [%s]  meta_test: [%s]  unseen_test: [%s]\n", list(ds.split.meta_train).c_str(),
                list(ds.split.meta_test).c_str(), list(ds.split.unseen_test).c_str());
    std::printf("seen_styles: [%s]  heldout_styles: [%s]\n", list(ds.split.seen_styles).c_str(),
                list(ds.split.heldout_styles).c_str());
    for (const auto& [c, n] : per_cat) {
        const std::string name = c < static_cast<int>(ds.category_names.size()) ? ds.category_names[static_cast<std::size_t>(c)] : "?";
        std::printf("  category %d (%s): %d pairs\n", c, name.c_str(), n);
    }
    for (const auto& [s, n] : per_style) std::printf("  style %d: %d pairs\n", s, n);
    if (!ds.items.empty())
        std::printf("sequence length: mean %.2f, max %d; all stroke-5 invariants hold\n",
                    static_cast<double>(total_len) / static_cast<double>(ds.items.size()), max_len);
    return 0;
}

std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    std::size_t at = 0;
    while (at <= s.size()) {
        const auto comma = s.find(',', at);
        const std::string tok = s.substr(at, comma == std::string::npos ? std::string::npos : comma - at);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("--values: '" + tok + "' is not a number");
        }
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-trained sketch-based image retrieval with test-time training"};
    app.require_subcommand(1);

    auto* data = app.add_subcommand("data", "synthetic dataset tools");
    data->require_subcommand(1);
    auto* gen = data->add_subcommand("gen", "generate a synthetic dataset");
    Common gen_opts;
    std::string gen_out;
    gen->add_option("--config", gen_opts.config, "JSON config file (data.* keys are used)");
    gen->add_option("--set", gen_opts.sets, "override, key=value (repeatable)");
    gen->add_option("--seed", gen_opts.seed, "generator seed");
    gen->add_option("--out", gen_out, "output dataset file")->required();
    auto* insp = data->add_subcommand("inspect", "summarise and validate a dataset file");
    std::string inspect_path;
    insp->add_option("path", inspect_path, "dataset file")->required();

    auto* train_cmd = app.add_subcommand("train", "meta-train a model");
    Common train_opts;
    train_opts.add_to(train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "zero-shot evaluation with test-time training");
    Common eval_opts;
    eval_opts.add_to(eval_cmd);
    std::string checkpoint;
    bool no_tpa = false;
    std::optional<int> tau_s, tau_p, k;
    std::optional<double> lr_ttt;
    eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    eval_cmd->add_flag("--no-tpa", no_tpa, "skip test photo adaptation");
    eval_cmd->add_option("--tau-s", tau_s, "sketch adaptation steps");
    eval_cmd->add_option("--tau-p", tau_p, "gallery adaptation steps");
    eval_cmd->add_option("--lr-ttt", lr_ttt, "test-time learning rate");
    eval_cmd->add_option("--k", k, "precision cutoff");

    auto* sweep_cmd = app.add_subcommand("sweep", "evaluate across one axis");
    Common sweep_opts;
    sweep_opts.add_to(sweep_cmd);
    std::string axis, values, sweep_ckpt;
    sweep_cmd->add_option("--axis", axis, "ttt_steps, inner_steps, d_p or d_aP")->required();
    sweep_cmd->add_option("--values", values, "comma-separated values")->required();
    sweep_cmd->add_option("--checkpoint", sweep_ckpt, "checkpoint for the ttt_steps axis");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen) {
            const ExperimentConfig cfg = gen_opts.build();
            const Dataset ds = synth_generate(cfg.synth, gen_opts.seed.value_or(cfg.seed));
            save_dataset(ds, gen_out);
            std::printf("wrote %zu pairs to %s\n", ds.items.size(), gen_out.c_str());
            return 0;
        }
        if (*insp) return inspect(inspect_path);
        if (*train_cmd) {
            const TrainRun run = run_train(train_opts.build());
            const auto& log = run.result.log;
            if (!log.empty())
                std::printf("iterations: %zu  final L_trn %.5f  L_val %.5f  alpha %.3g\n", log.size(), log.back().l_trn,
                            log.back().l_val, log.back().alpha);
            std::printf("checkpoint: %s\n", run.checkpoint.string().c_str());
            return 0;
        }
        if (*eval_cmd) {
            ExperimentConfig cfg = eval_opts.build();
            if (no_tpa) cfg.ttt.use_tpa = false;
            if (tau_s) cfg.ttt.tau_s = *tau_s;
            if (tau_p) cfg.ttt.tau_p = *tau_p;
            if (lr_ttt) cfg.ttt.lr = *lr_ttt;
            if (k) cfg.eval.k = *k;
            const EvalRun run = run_eval(cfg, checkpoint);
            print_summary(run.report);
            std::printf("metrics: %s\ntrace: %s\n", run.metrics_csv.string().c_str(), run.trace.string().c_str());
            return 0;
        }
        if (*sweep_cmd) {
            const ExperimentConfig cfg = sweep_opts.build();
            std::optional<std::filesystem::path> ck;
            if (!sweep_ckpt.empty()) ck = sweep_ckpt;
            const SweepRun run = run_sweep(cfg, axis, parse_values(values), ck);
            std::printf("%-10s %10s %10s\n", axis.c_str(), "frozen", "ttt");
            for (const auto& r : run.rows) std::printf("%-10g %10.4f %10.4f\n", r.value, r.map_frozen, r.map_ttt);
            std::printf("csv: %s\nplot: %s\n", run.csv.string().c_str(), run.plot.string().c_str());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
