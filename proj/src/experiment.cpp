#include "sketch3t/experiment.hpp"

#include "sketch3t/error.hpp"
#include "sketch3t/image_codec.hpp"
#include "sketch3t/metrics.hpp"
#include "sketch3t/plot.hpp"
#include "sketch3t/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace sketch3t {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw ConfigError("output.dir: cannot write " + p.string());
    return out;
}

void fingerprint_header(std::ostream& out, const ExperimentConfig& cfg, const NetConfig& net) {
    out << "# fingerprint: " << hex64(config_fingerprint(cfg)) << '\n';
    out << "# model_fingerprint: " << hex64(model_fingerprint(net)) << '\n';
}

fs::path ensure_dir(const std::string& dir) {
    const fs::path p = resolve_output(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw ConfigError("output.dir: cannot create " + p.string() + ": " + ec.message());
    return p;
}

std::vector<int> styles_for(const Dataset& ds, QueryStyles q) {
    switch (q) {
    case QueryStyles::heldout:
        return ds.split.heldout_styles;
    case QueryStyles::seen:
        return ds.split.seen_styles;
    default:
        return {};
    }
}

} // namespace

fs::path resolve_output(const std::string& dir) {
    fs::path p(dir);
    if (p.is_relative())
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) p = fs::path(root) / p;
    return p;
}

Dataset load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.data_path.empty()) throw ConfigError("data.path: no dataset given");
    if (!fs::exists(cfg.data_path)) throw ConfigError("data.path: " + cfg.data_path + " does not exist");
    return load_dataset(cfg.data_path);
}

NetConfig net_for(const ExperimentConfig& cfg, const Dataset& ds) {
    NetConfig n = cfg.net;
    n.canvas = ds.canvas;
    n.t_max = ds.t_max;
    try {
        validate(n);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("net: ") + e.what());
    }
    return n;
}

EvalSets eval_sets(const Dataset& ds, const std::vector<int>& categories, const EvalConfig& cfg, std::uint64_t seed) {
    EvalSets s;
    s.gallery = ds.items_in(categories);
    s.queries = ds.items_in(categories, styles_for(ds, cfg.query_styles));
    if (s.queries.empty()) throw ConfigError("eval.query_styles: no test sketches in the requested styles");
    if (cfg.max_queries > 0 && s.queries.size() > static_cast<std::size_t>(cfg.max_queries)) {
        Rng rng(derive_seed(seed, "queries"));
        rng.shuffle(s.queries.begin(), s.queries.end());
        s.queries.resize(static_cast<std::size_t>(cfg.max_queries));
        std::sort(s.queries.begin(), s.queries.end());
    }
    return s;
}

double frozen_map(const Sketch3TNet& net, const ParamSet& params, const ItemTensors& data, const EvalSets& sets) {
    const GallerySnapshot snap = make_snapshot(net, params[Group::encoder], params[Group::primary], data, sets.gallery);
    ad::NoGrad ng;
    const Tensor q = net.project(params[Group::primary],
                                 net.encode(params[Group::encoder], Var::constant(data.sketches(sets.queries))).features)
                         .value();
    const int dp = q.shape[1];
    std::vector<double> aps;
    for (std::size_t i = 0; i < sets.queries.size(); ++i) {
        const Tensor row({1, dp}, std::vector<double>(q.data.begin() + static_cast<std::ptrdiff_t>(i * dp),
                                                       q.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dp)));
        const int cat = data.dataset().items[static_cast<std::size_t>(sets.queries[i])].category_id;
        aps.push_back(average_precision(retrieve(row, snap, cat).relevance));
    }
    return mean_over_queries(aps);
}

TrainRun run_train(const ExperimentConfig& cfg) { return run_train(cfg, load_experiment_data(cfg)); }

TrainRun run_train(const ExperimentConfig& cfg, const Dataset& ds) {
    validate(cfg);
    TrainRun run;
    run.net = net_for(cfg, ds);
    run.dir = ensure_dir(cfg.output_dir);
    const Sketch3TNet net(run.net);
    const ItemTensors data(ds);
    TrainConfig tc = cfg.train;
    tc.loss = cfg.loss;
    tc.seed = cfg.seed;
    tc.alpha_init = cfg.train.alpha_init;
    const std::uint64_t cfp = config_fingerprint(cfg);

    open_out(run.dir / "config.json") << to_json(cfg) << '\n';
    std::ofstream log = open_out(run.dir / "train_log.csv");
    fingerprint_header(log, cfg, run.net);
    log << "iteration,l_trn,l_val,map_meta_test,alpha,seconds\n";

    EvalSets meta_test;
    const bool periodic = tc.eval_every > 0 && !ds.split.meta_test.empty() && cfg.eval.train_eval_queries > 0;
    if (periodic) {
        EvalConfig ec = cfg.eval;
        ec.max_queries = cfg.eval.train_eval_queries;
        meta_test = eval_sets(ds, ds.split.meta_test, ec, cfg.seed);
    }
    TrainHooks hooks;
    if (periodic) hooks.evaluate = [&](const ParamSet& p) { return frozen_map(net, p, data, meta_test); };
    hooks.on_iteration = [&](const IterationLog& l) {
        log << l.iteration << ',' << num(l.l_trn) << ',' << num(l.l_val) << ',' << (l.map ? num(*l.map) : "") << ','
            << num(l.alpha) << ',' << num(l.seconds) << '\n';
        log.flush();
    };
    hooks.on_checkpoint = [&](int it, const ParamSet& p) {
        char name[32];
        std::snprintf(name, sizeof name, "ckpt_%06d.bin", it);
        save_checkpoint(run.dir / name, net, p, cfp);
    };
    run.result = train(net, net.init(cfg.seed, tc.alpha_init), data, tc, hooks);
    run.checkpoint = run.dir / "checkpoint.bin";
    save_checkpoint(run.checkpoint, net, run.result.params, cfp);
    return run;
}

EvalRun run_eval(const ExperimentConfig& cfg, const fs::path& checkpoint) {
    const Dataset ds = load_experiment_data(cfg);
    const Checkpoint ck = load_checkpoint(checkpoint, model_fingerprint(net_for(cfg, ds)));
    return run_eval(cfg, ck, ds, ensure_dir(cfg.output_dir));
}

EvalRun run_eval(const ExperimentConfig& cfg, const Checkpoint& ck, const Dataset& ds, const fs::path& out_dir) {
    validate(cfg);
    const NetConfig expected = net_for(cfg, ds);
    if (model_fingerprint(expected) != ck.model_fingerprint)
        throw CheckpointError("checkpoint fingerprint " + hex64(ck.model_fingerprint) + " does not match the configured model " +
                              hex64(model_fingerprint(expected)));
    const Sketch3TNet net(ck.net);
    const ItemTensors data(ds);
    const EvalSets sets = eval_sets(ds, ds.split.unseen_test, cfg.eval, cfg.seed);
    EvalRun run;
    run.report = evaluate_zs(net, ck.params, data, sets.queries, sets.gallery, cfg.ttt, cfg.eval.k);
    if (run.report.no_relevant > 0) std::cerr << "warning: " << run.report.no_relevant << " queries had no relevant item\n";

    fs::create_directories(out_dir);
    run.metrics_csv = out_dir / "eval_metrics.csv";
    run.trace = out_dir / "eval_trace.jsonl";
    std::ofstream csv = open_out(run.metrics_csv);
    fingerprint_header(csv, cfg, ck.net);
    csv << "# k: " << std::min<std::size_t>(static_cast<std::size_t>(cfg.eval.k), sets.gallery.size()) << '\n';
    csv << "variant,mAP@all,P@K\n";
    for (const auto& v : run.report.variants) csv << v.name << ',' << num(v.map) << ',' << num(v.precision) << '\n';

    std::ofstream tr = open_out(run.trace);
    const std::string fp = hex64(config_fingerprint(cfg));
    for (const auto& q : run.report.queries) {
        json ap = json::object();
        for (std::size_t v = 0; v < run.report.variants.size(); ++v) ap[run.report.variants[v].name] = q.ap[v];
        tr << json{{"query", q.item},         {"category", q.category},   {"loss_pre", q.loss_pre},
                   {"loss_post", q.loss_post}, {"loss_step1", q.loss_step1}, {"fallback", q.fallback},
                   {"ap", ap},                {"fingerprint", fp}}
                  .dump()
           << '\n';
    }
    return run;
}

const std::vector<std::string>& sweep_axes() {
    static const std::vector<std::string> a{"ttt_steps", "inner_steps", "d_p", "d_aP"};
    return a;
}

SweepRun run_sweep(const ExperimentConfig& cfg, const std::string& axis, std::vector<double> values,
                   const std::optional<fs::path>& checkpoint) {
    if (std::find(sweep_axes().begin(), sweep_axes().end(), axis) == sweep_axes().end())
        throw ConfigError("unknown sweep axis '" + axis + "'");
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    for (double v : values)
        if (v < 0 || v != std::floor(v)) throw ConfigError("sweep values for " + axis + " must be nonnegative integers");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    validate(cfg);
    const Dataset ds = load_experiment_data(cfg);
    const fs::path root = ensure_dir(cfg.output_dir);
    SweepRun run;
    run.axis = axis;

    std::optional<Checkpoint> shared;
    if (axis == "ttt_steps") {
        if (checkpoint) {
            shared = load_checkpoint(*checkpoint, model_fingerprint(net_for(cfg, ds)));
        } else {
            ExperimentConfig tc = cfg;
            tc.output_dir = (root / "sweep_train").string();
            shared = load_checkpoint(run_train(tc, ds).checkpoint);
        }
    }
    for (double v : values) {
        ExperimentConfig c = cfg;
        const int iv = static_cast<int>(v);
        c.output_dir = (root / ("sweep_" + axis + "_" + std::to_string(iv))).string();
        fs::path dir = ensure_dir(c.output_dir);
        EvalRun ev;
        if (axis == "ttt_steps") {
            c.ttt.tau_s = iv;
            c.ttt.tau_p = iv;
            ev = run_eval(c, *shared, ds, dir);
        } else {
            if (axis == "inner_steps") c.train.inner_steps = iv;
            if (axis == "d_p") c.net.primary_dim = iv;
            if (axis == "d_aP") c.net.photo_aux_dim = iv;
            const TrainRun tr = run_train(c, ds);
            ev = run_eval(c, load_checkpoint(tr.checkpoint), ds, dir);
        }
        const auto& ttt = ev.report.variant("ttt");
        run.rows.push_back({v, ev.report.variant("frozen").map, ttt.map, ttt.precision});
    }

    run.csv = root / ("sweep_" + axis + ".csv");
    std::ofstream csv = open_out(run.csv);
    NetConfig net = net_for(cfg, ds);
    fingerprint_header(csv, cfg, net);
    csv << axis << ",map_frozen,map_ttt,p_at_k_ttt\n";
    for (const auto& r : run.rows)
        csv << num(r.value) << ',' << num(r.map_frozen) << ',' << num(r.map_ttt) << ',' << num(r.precision_ttt) << '\n';

    std::vector<double> xs;
    PlotSeries frozen{{}, {0.6, 0.6, 0.6}}, ttt{{}, {0.1, 0.3, 0.8}};
    for (const auto& r : run.rows) {
        xs.push_back(r.value);
        frozen.y.push_back(r.map_frozen);
        ttt.y.push_back(r.map_ttt);
    }
    run.plot = root / ("sweep_" + axis + ".png");
    write_png(line_plot(xs, {frozen, ttt}), run.plot,
              {{"fingerprint", hex64(config_fingerprint(cfg))}, {"model_fingerprint", hex64(model_fingerprint(net))},
               {"axis", axis}, {"series", "map_frozen (grey), map_ttt (blue)"}});
    return run;
}

} // namespace sketch3t
