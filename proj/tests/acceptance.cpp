// Acceptance run: one PASS/FAIL line per criterion. The end-to-end criteria
// train and evaluate desk-scale models under the work directory given as the
// first argument (default ./acceptance_runs).

#include "fd_oracle.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "sketch3t/checkpoint.hpp"
#include "sketch3t/config.hpp"
#include "sketch3t/error.hpp"
#include "sketch3t/experiment.hpp"
#include "sketch3t/losses.hpp"
#include "sketch3t/metatrain.hpp"
#include "sketch3t/metrics.hpp"
#include "sketch3t/ttt.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>

using namespace sketch3t;
using namespace sketch3t::ad;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] %d. %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// 1. Streaming metrics against the by-definition oracle.
void metric_oracle() {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> rel(static_cast<std::size_t>(rng.uniform_int(1, 500)));
        const double p = rng.uniform(0.0, 0.6);
        for (int& r : rel) r = rng.uniform() < p ? 1 : 0;
        const int k = rng.uniform_int(1, 600);
        worst = std::max({worst, std::abs(average_precision(rel) - oracles::brute_ap(rel)),
                          std::abs(precision_at_k(rel, k) - oracles::brute_pk(rel, k))});
    }
    const double s = seconds_since(t0);
    report(1, "metric oracle", worst <= 1e-12 && s < 10.0,
           fmt("max |streaming - brute force| %.1e over 100 instances, |G| <= 500 (tol 1e-12); %.2f s (limit 10 s)", worst, s));
}

// 2. Loss gradients for every parameter group against central differences.
void gradient_fidelity() {
    const auto t0 = Clock::now();
    const Sketch3TNet net{fixtures::tiny_net()};
    const Dataset ds = synth_generate(fixtures::tiny_synth(net.config(), 2), 4);
    const ItemTensors data(ds);
    ParamSet params = net.init(3);
    Rng rng(3);
    for (auto& g : params.groups) fixtures::jitter(g, rng, 0.05);
    const std::vector<int> anchors{0, 1, 2}, negatives{7, 9, 11};
    const SketchBatch gt = data.vectors(anchors);
    Tensor eta({3, gt.steps});
    for (double& v : eta.data) v = rng.uniform(0.1, 0.9);
    const auto& enc = params[Group::encoder];
    const auto sketch_feat = [&] { return net.encode(enc, Var::constant(data.sketches(anchors))).features; };

    struct Case {
        const char* name;
        std::function<Var()> loss;
        std::vector<Group> groups;
    };
    const std::vector<Case> cases{
        {"triplet",
         [&] {
             const auto& p = params[Group::primary];
             return triplet_loss(net.project(p, sketch_feat()),
                                 net.project(p, net.encode(enc, Var::constant(data.photos(anchors))).features),
                                 net.project(p, net.encode(enc, Var::constant(data.photos(negatives))).features), 5.0);
         },
         {Group::encoder, Group::primary}},
        {"sketch (unweighted)",
         [&] { return sketch_recon_loss(net.decode_sketch(params[Group::sketch_decoder], sketch_feat(), gt), gt); },
         {Group::encoder, Group::sketch_decoder}},
        {"sketch (weighted)",
         [&] {
             return sketch_recon_loss(net.decode_sketch(params[Group::sketch_decoder], sketch_feat(), gt), gt, Var::constant(eta));
         },
         {Group::encoder, Group::sketch_decoder}},
        {"edgemap",
         [&] {
             const Var f = net.encode(enc, Var::constant(data.photos(anchors))).features;
             return photo_recon_loss(net.decode_photo(params[Group::photo_decoder], f), Var::constant(data.edgemaps(anchors)));
         },
         {Group::encoder, Group::photo_decoder}},
    };
    double worst = 0.0;
    std::string worst_at;
    for (const Case& c : cases)
        for (Group g : c.groups) {
            const ParamList& leaves = params[g];
            const auto an = grad(c.loss(), leaves);
            for (std::size_t k = 0; k < leaves.size(); ++k) {
                const double e = fd::rel_err(an[k].value(), fd::numeric_grad([&] { return c.loss().item(); }, leaves[k]));
                if (e > worst) {
                    worst = e;
                    worst_at = std::string(c.name) + "/" + kGroupNames[static_cast<std::size_t>(g)];
                }
            }
        }
    const double s = seconds_since(t0);
    report(2, "gradient fidelity", worst <= 1e-4 && s < 60.0 && params.parameter_count() <= 5000,
           fmt("max relative error %.1e (%s) on a %zu-parameter network (tol 1e-4); %.1f s (limit 60 s)", worst,
               worst_at.c_str(), params.parameter_count(), s));
}

// 3. Second-order meta-gradient.
void meta_gradient_fidelity() {
    const auto t0 = Clock::now();
    // Toy quadratic.
    const Var theta = Var::param(Tensor::scalar(1.0));
    const Var alpha = Var::param(Tensor::scalar(0.1));
    const std::array<Var, 1> inner{theta};
    const Var adapted = sgd_step(inner, scale(square(theta), 0.5), alpha, true)[0];
    const std::array<Var, 2> wrt{theta, alpha};
    const auto toy = grad(scale(square(adapted), 0.5), wrt);
    const double toy_err = std::max(std::abs(toy[0].item() - 0.81), std::abs(toy[1].item() + 0.9));

    // A 33-parameter bilevel model.
    Rng rng(2);
    const Var w1 = Var::param(random_tensor({3, 4}, rng));
    const Var w2 = Var::param(random_tensor({4, 2}, rng));
    const Var w3 = Var::param(random_tensor({4, 3}, rng));
    const Var a = Var::param(Tensor::scalar(0.3));
    std::array<Var, 6> x;
    for (auto& v : x) v = Var::constant(random_tensor({4, 3}, rng));
    const auto embed = [](const Var& in, const Var& p, const Var& q) { return matmul(tanh(matmul(in, p)), q); };
    const auto l_val = [&] {
        const Var tri = triplet_loss(embed(x[0], w1, w2), embed(x[1], w1, w2), embed(x[2], w1, w2), 4.0);
        const Var rec = mean(square(sub(matmul(tanh(matmul(x[0], w1)), w3), x[0])));
        const std::array<Var, 2> in{w1, w2};
        const auto ad = sgd_step(in, add(scale(tri, 0.7), scale(rec, 0.3)), a, true);
        return triplet_loss(embed(x[3], ad[0], ad[1]), embed(x[4], ad[0], ad[1]), embed(x[5], ad[0], ad[1]), 4.0);
    };
    const std::vector<Var> leaves{w1, w2, w3, a};
    const auto g = grad(l_val(), leaves);
    double worst = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k)
        worst = std::max(worst, fd::rel_err(g[k].value(), fd::numeric_grad([&] { return l_val().item(); }, leaves[k])));
    const double s = seconds_since(t0);
    report(3, "meta-gradient fidelity", worst <= 1e-3 && toy_err <= 1e-6 && s < 60.0,
           fmt("toy dL/dtheta %.9f (0.81), dL/dalpha %.9f (-0.9), |err| %.1e (tol 1e-6); 33-parameter model max "
               "relative error %.1e (tol 1e-3); %.2f s",
               toy[0].item(), toy[1].item(), toy_err, worst, s));
}

// 4. Identity reductions.
void identity_reductions() {
    const Sketch3TNet net{fixtures::small_net()};
    const Dataset ds = synth_generate(fixtures::tiny_synth(net.config(), 10), 21);
    const ItemTensors data(ds);
    ParamSet params = net.init(2);

    const std::vector<int> items{0, 1, 2, 3};
    const SketchBatch gt = data.vectors(items);
    const Var f = net.encode(params[Group::encoder], Var::constant(data.sketches(items))).features;
    const Var steps = sketch_step_losses(net.decode_sketch(params[Group::sketch_decoder], f, gt), gt);
    const bool eta_ok =
        sketch_recon_loss(steps, gt, Var::constant(Tensor({4, gt.steps}, 1.0))).item() == sketch_recon_loss(steps, gt).item();

    TTTConfig tc;
    tc.tau_s = tc.tau_p = 0;
    const auto queries = ds.items_in(ds.split.unseen_test, ds.split.heldout_styles);
    const auto gallery = ds.items_in(ds.split.unseen_test);
    const ZsReport rep = evaluate_zs(net, params, data, queries, gallery, tc, 200);
    const GallerySnapshot snap = make_snapshot(net, params[Group::encoder], params[Group::primary], data, gallery);
    std::vector<double> ap;
    for (int q : queries) {
        const std::array<int, 1> one{q};
        NoGrad ng;
        const Tensor z = net.project(params[Group::primary], net.encode(params[Group::encoder], Var::constant(data.sketches(one))).features).value();
        ap.push_back(average_precision(retrieve(z, snap, ds.items[static_cast<std::size_t>(q)].category_id).relevance));
    }
    bool tau_ok = rep.variant("frozen").ap == ap;
    for (const auto& v : rep.variants) tau_ok = tau_ok && v.ap == ap;

    params.alpha.node()->value.data[0] = 0.0;
    TrainConfig trc;
    trc.episode = {3, 2, 4};
    const MetaLearner m(net, trc);
    Rng rng(1);
    const Episode ep = sample_task(data, net, params, rng, trc.episode);
    const Adapted adapted = m.inner_update(params, make_batch(data, ep.trn, ep.trn_neg));
    const bool alpha_ok = bit_equal(adapted.encoder, params[Group::encoder]) && bit_equal(adapted.primary, params[Group::primary]);
    report(4, "identity reductions", eta_ok && tau_ok && alpha_ok,
           fmt("eta=1 equals unweighted loss exactly: %s; tau_s=tau_p=0 equals frozen evaluation bit-exactly over %zu "
               "queries: %s; alpha=0 inner step is the identity: %s",
               eta_ok ? "yes" : "no", queries.size(), tau_ok ? "yes" : "no", alpha_ok ? "yes" : "no"));
}

// 9. Data invariants.
void data_invariants(const Dataset& ds, const fs::path& path) {
    std::size_t bad = 0;
    const auto check = [&](const Dataset& d) {
        for (const auto& it : d.items) {
            try {
                validate(it.sketch_vec, d.t_max);
            } catch (const InvalidSketch&) {
                ++bad;
            }
        }
    };
    check(ds);
    const Dataset loaded = load_dataset(path);
    check(loaded);
    const bool round_trip = loaded == ds;

    const VectorSketch sk{{{0.25, 0.5, 1, 0, 0}, {0.75, 0.5, 0, 0, 1}}};
    const RasterImage img = rasterize(sk, 64, 64, 1);
    bool raster_ok = true;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            const double want = (r == 32 && c >= 16 && c <= 48) ? 0.0 : 1.0;
            for (int ch = 0; ch < 3; ++ch) raster_ok = raster_ok && img.at(r, c, ch) == want;
        }
    report(9, "data invariants", bad == 0 && round_trip && raster_ok,
           fmt("%zu generated + %zu loaded sketches, %zu stroke-5 violations; save/load identity: %s; rasterizer "
               "example exact: %s",
               ds.items.size(), loaded.items.size(), bad, round_trip ? "yes" : "no", raster_ok ? "yes" : "no"));
}

ExperimentConfig desk_config(const fs::path& work) {
    ExperimentConfig c;
    c.synth.canvas = 32;
    c.synth.t_max = 24;
    c.synth.per_category = 200;
    c.net.dec_channels = {32, 16, 8};
    c.train.iterations = 100;
    c.train.meta_batch = 4;
    c.train.beta = 1e-3;
    c.data_path = (work / "data.jsonl").string();
    return c;
}

struct SeedRun {
    TrainRun full;
    ZsReport full_report;
    ZsReport type1_report;
};

// 5. Reset semantics on the trained model.
void reset_semantics(const SeedRun& run, const Dataset& ds, const ExperimentConfig& cfg) {
    const ItemTensors data(ds);
    const Sketch3TNet net(run.full.net);
    const ParamSet& p = run.full.result.params;
    const ParamSet before = p.clone();
    const EvalSets sets = eval_sets(ds, ds.split.unseen_test, cfg.eval, cfg.seed);
    const std::vector<int> qs(sets.queries.begin(), sets.queries.begin() + 50);
    const auto adapt = [&](int q) {
        const std::array<int, 1> one{q};
        return adapt_query(net, p[Group::encoder], p[Group::sketch_decoder], p[Group::primary], data.sketches(one),
                           data.vectors(one), cfg.ttt.tau_s, cfg.ttt.lr)
            .feature;
    };
    std::vector<Tensor> forward;
    for (int q : qs) forward.push_back(adapt(q));
    std::vector<std::size_t> perm(qs.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(5);
    rng.shuffle(perm.begin(), perm.end());
    std::size_t same = 0;
    for (std::size_t i : perm) same += adapt(qs[i]) == forward[i];
    const bool untouched = bit_equal(p, before);
    report(5, "reset semantics", untouched && same == qs.size(),
           fmt("master parameters bit-identical after %zu adaptations: %s; %zu/%zu features identical under a random "
               "permutation of the queries",
               2 * qs.size(), untouched ? "yes" : "no", same, qs.size()));
}

// 6. First-step descent of the query reconstruction loss.
void ttt_descent(const ZsReport& rep, double lr) {
    std::size_t ok = 0;
    for (const auto& q : rep.queries) ok += !q.fallback && q.loss_step1 <= q.loss_pre;
    const double frac = static_cast<double>(ok) / static_cast<double>(rep.queries.size());
    report(6, "TTT descent", rep.queries.size() >= 200 && frac >= 0.95,
           fmt("first step at lr %.0e did not increase the loss for %zu/%zu unseen-style queries (%.1f%%, need >= 95%%)", lr,
               ok, rep.queries.size(), 100.0 * frac));
}

} // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_runs");
    fs::create_directories(work);
    const auto start = Clock::now();

    metric_oracle();
    gradient_fidelity();
    meta_gradient_fidelity();
    identity_reductions();

    const ExperimentConfig base = desk_config(work);
    const Dataset ds = synth_generate(base.synth, 1);
    save_dataset(ds, base.data_path);
    data_invariants(ds, base.data_path);

    // 7. Three seeds of the full model and of Type I.
    const auto t7 = Clock::now();
    std::vector<SeedRun> runs;
    double full_ttt = 0.0, full_frozen = 0.0, full_no_tpa = 0.0, type1 = 0.0;
    const std::array<std::uint64_t, 3> seeds{1, 2, 3};
    for (std::uint64_t seed : seeds) {
        ExperimentConfig full = base;
        full.seed = seed;
        full.output_dir = (work / ("full_s" + std::to_string(seed))).string();
        SeedRun r;
        r.full = run_train(full, ds);
        r.full_report = run_eval(full, load_checkpoint(r.full.checkpoint), ds, full.output_dir).report;

        ExperimentConfig t1 = full;
        apply_ablation(t1, "type1");
        t1.output_dir = (work / ("type1_s" + std::to_string(seed))).string();
        const TrainRun tr1 = run_train(t1, ds);
        r.type1_report = run_eval(t1, load_checkpoint(tr1.checkpoint), ds, t1.output_dir).report;

        const auto& fr = r.full_report;
        std::printf("  seed %llu: full frozen %.4f  tpa_only %.4f  ttt %.4f  ttt_no_tpa %.4f | type1 %.4f  (%.0f s)\n",
                    static_cast<unsigned long long>(seed), fr.variant("frozen").map, fr.variant("tpa_only").map,
                    fr.variant("ttt").map, fr.variant("ttt_no_tpa").map, r.type1_report.variant("ttt").map, seconds_since(t7));
        std::fflush(stdout);
        full_ttt += fr.variant("ttt").map / 3.0;
        full_frozen += fr.variant("frozen").map / 3.0;
        full_no_tpa += fr.variant("ttt_no_tpa").map / 3.0;
        type1 += r.type1_report.variant("ttt").map / 3.0;
        runs.push_back(std::move(r));
    }
    const double s7 = seconds_since(t7);
    report(7, "end-to-end directional reproduction",
           full_ttt > full_frozen && full_ttt > type1 && full_ttt - full_no_tpa >= 0.0 && s7 <= 1800.0,
           fmt("mean mAP@all over 3 seeds: (a) TTT %.4f vs frozen %.4f (need >); (b) full %.4f vs Type I %.4f (need >); "
               "(c) TPA gain %+.4f (need >= 0); %.0f s (budget 1800 s)",
               full_ttt, full_frozen, full_ttt, type1, full_ttt - full_no_tpa, s7));

    ExperimentConfig seed1 = base;
    seed1.seed = 1;
    reset_semantics(runs[0], ds, seed1);
    ttt_descent(runs[0].full_report, base.ttt.lr);

    // 8. TTT-steps sweep on the seed-1 checkpoint.
    seed1.output_dir = (work / "sweep_s1").string();
    const SweepRun sw = run_sweep(seed1, "ttt_steps", {0, 1, 2, 4, 8}, runs[0].full.checkpoint);
    double at0 = 0.0, at4 = 0.0;
    std::string curve;
    for (const auto& row : sw.rows) {
        if (row.value == 0.0) at0 = row.map_ttt;
        if (row.value == 4.0) at4 = row.map_ttt;
        curve += fmt("%s%g:%.4f", curve.empty() ? "" : " ", row.value, row.map_ttt);
    }
    report(8, "sweep shape", at4 >= at0, fmt("mAP@all by steps {%s}; 4 steps %.4f vs 0 steps %.4f (need >=)", curve.c_str(), at4, at0));

    std::printf("%d of 9 criteria failed; total %.0f s\n", failures, seconds_since(start));
    return failures == 0 ? 0 : 1;
}
