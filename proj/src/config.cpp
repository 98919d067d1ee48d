#include "sketch3t/config.hpp"

#include "sketch3t/error.hpp"
#include "sketch3t/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace sketch3t {

using nlohmann::json;

namespace {

struct Field {
    std::function<json(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const json&)> set;
};

template <class T, class Sel>
Field field(Sel sel) {
    return {[sel](const ExperimentConfig& c) { return json(sel(const_cast<ExperimentConfig&>(c))); },
            [sel](ExperimentConfig& c, const json& v) { sel(c) = v.get<T>(); }};
}

const char* group_key(Group g) { return kGroupNames[static_cast<std::size_t>(g)]; }

Group group_from(const std::string& s) {
    for (std::size_t i = 0; i < kGroupNames.size(); ++i)
        if (s == kGroupNames[i]) return static_cast<Group>(i);
    throw ConfigError("unknown parameter group '" + s + "'");
}

const char* styles_key(QueryStyles q) {
    switch (q) {
    case QueryStyles::heldout:
        return "heldout";
    case QueryStyles::seen:
        return "seen";
    default:
        return "all";
    }
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = [] {
        std::map<std::string, Field> m;
        m["data.path"] = field<std::string>([](ExperimentConfig& c) -> auto& { return c.data_path; });
        m["data.categories"] = field<std::vector<std::string>>([](ExperimentConfig& c) -> auto& { return c.synth.categories; });
        m["data.per_category"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.per_category; });
        m["data.canvas"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.canvas; });
        m["data.line_width"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.line_width; });
        m["data.t_max"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.t_max; });
        m["data.n_meta_train"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.n_meta_train; });
        m["data.n_meta_test"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.n_meta_test; });
        m["data.n_unseen"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.n_unseen; });
        m["data.n_heldout_styles"] = field<int>([](ExperimentConfig& c) -> auto& { return c.synth.n_heldout_styles; });
        m["data.max_rotation"] = field<double>([](ExperimentConfig& c) -> auto& { return c.synth.max_rotation; });

        m["net.enc_channels"] = field<std::vector<int>>([](ExperimentConfig& c) -> auto& { return c.net.enc_channels; });
        m["net.dec_channels"] = field<std::vector<int>>([](ExperimentConfig& c) -> auto& { return c.net.dec_channels; });
        m["net.groups"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.groups; });
        m["net.feature_dim"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.feature_dim; });
        m["net.primary_dim"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.primary_dim; });
        m["net.sketch_aux_dim"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.sketch_aux_dim; });
        m["net.hidden"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.hidden; });
        m["net.photo_aux_dim"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.photo_aux_dim; });
        m["net.eta_hidden"] = field<int>([](ExperimentConfig& c) -> auto& { return c.net.eta_hidden; });

        m["loss.margin"] = field<double>([](ExperimentConfig& c) -> auto& { return c.loss.margin; });
        m["loss.lambda_tri"] = field<double>([](ExperimentConfig& c) -> auto& { return c.loss.lambda_tri; });
        m["loss.lambda_rec"] = field<double>([](ExperimentConfig& c) -> auto& { return c.loss.lambda_rec; });

        m["train.inner_steps"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.inner_steps; });
        m["train.meta_batch"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.meta_batch; });
        m["train.beta"] = field<double>([](ExperimentConfig& c) -> auto& { return c.train.beta; });
        m["train.alpha_init"] = field<double>([](ExperimentConfig& c) -> auto& { return c.train.alpha_init; });
        m["train.first_order"] = field<bool>([](ExperimentConfig& c) -> auto& { return c.train.first_order; });
        m["train.use_eta"] = field<bool>([](ExperimentConfig& c) -> auto& { return c.train.use_eta; });
        m["train.use_meta"] = field<bool>([](ExperimentConfig& c) -> auto& { return c.train.use_meta; });
        m["train.learn_alpha"] = field<bool>([](ExperimentConfig& c) -> auto& { return c.train.learn_alpha; });
        m["train.iterations"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.iterations; });
        m["train.eval_every"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.eval_every; });
        m["train.checkpoint_every"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.checkpoint_every; });
        m["train.frozen"] = {[](const ExperimentConfig& c) {
                                 json a = json::array();
                                 for (Group g : c.train.frozen) a.push_back(group_key(g));
                                 return a;
                             },
                             [](ExperimentConfig& c, const json& v) {
                                 c.train.frozen.clear();
                                 for (const auto& s : v.get<std::vector<std::string>>()) c.train.frozen.push_back(group_from(s));
                             }};

        m["episode.n_trn"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.episode.n_trn; });
        m["episode.n_val"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.episode.n_val; });
        m["episode.pool_size"] = field<int>([](ExperimentConfig& c) -> auto& { return c.train.episode.pool_size; });

        m["ttt.lr"] = field<double>([](ExperimentConfig& c) -> auto& { return c.ttt.lr; });
        m["ttt.tau_p"] = field<int>([](ExperimentConfig& c) -> auto& { return c.ttt.tau_p; });
        m["ttt.tau_s"] = field<int>([](ExperimentConfig& c) -> auto& { return c.ttt.tau_s; });
        m["ttt.use_tpa"] = field<bool>([](ExperimentConfig& c) -> auto& { return c.ttt.use_tpa; });
        m["ttt.gallery_refresh"] = field<bool>([](ExperimentConfig& c) -> auto& { return c.ttt.gallery_refresh; });
        m["ttt.batch"] = field<int>([](ExperimentConfig& c) -> auto& { return c.ttt.batch; });

        m["eval.k"] = field<int>([](ExperimentConfig& c) -> auto& { return c.eval.k; });
        m["eval.max_queries"] = field<int>([](ExperimentConfig& c) -> auto& { return c.eval.max_queries; });
        m["eval.train_eval_queries"] = field<int>([](ExperimentConfig& c) -> auto& { return c.eval.train_eval_queries; });
        m["eval.query_styles"] = {[](const ExperimentConfig& c) { return json(styles_key(c.eval.query_styles)); },
                                  [](ExperimentConfig& c, const json& v) {
                                      const auto s = v.get<std::string>();
                                      if (s == "heldout")
                                          c.eval.query_styles = QueryStyles::heldout;
                                      else if (s == "seen")
                                          c.eval.query_styles = QueryStyles::seen;
                                      else if (s == "all")
                                          c.eval.query_styles = QueryStyles::all;
                                      else
                                          throw ConfigError("expected heldout, seen or all");
                                  }};

        m["output.dir"] = field<std::string>([](ExperimentConfig& c) -> auto& { return c.output_dir; });
        m["seed"] = field<std::uint64_t>([](ExperimentConfig& c) -> auto& { return c.seed; });
        return m;
    }();
    return f;
}

void set_json(ExperimentConfig& cfg, const std::string& key, const json& v) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
        it->second.set(cfg, v);
    } catch (const json::exception& e) {
        throw ConfigError(key + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

void flatten_into(const json& j, const std::string& prefix, ExperimentConfig& cfg) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object())
            flatten_into(*it, key, cfg);
        else
            set_json(cfg, key, *it);
    }
}

template <class F>
void checked(const char* section, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        throw ConfigError(what.rfind(section, 0) == 0 ? what : std::string(section) + ": " + what);
    }
}

} // namespace

FlatConfig flatten(const ExperimentConfig& cfg) {
    FlatConfig out;
    for (const auto& [k, f] : fields()) out[k] = f.get(cfg).dump();
    return out;
}

void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    json v;
    try {
        v = json::parse(value);
    } catch (const json::exception&) {
        v = value;
    }
    set_json(cfg, key, v);
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    set_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig cfg;
    flatten_into(j, "", cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_json(const ExperimentConfig& cfg) {
    json j = json::object();
    for (const auto& [k, f] : fields()) j[k] = f.get(cfg);
    return j.dump(2);
}

const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> n{"full", "type1", "type2", "type3", "no_tpa"};
    return n;
}

void apply_ablation(ExperimentConfig& cfg, const std::string& name) {
    if (name == "full") return;
    if (name == "type1") {
        cfg.loss.lambda_rec = 0.0;
        cfg.train.use_eta = false;
        cfg.ttt.tau_s = 0;
        cfg.ttt.tau_p = 0;
        cfg.ttt.use_tpa = false;
    } else if (name == "type2") {
        cfg.train.use_meta = false;
        cfg.train.use_eta = false;
    } else if (name == "type3") {
        cfg.train.use_eta = false;
    } else if (name == "no_tpa") {
        cfg.ttt.use_tpa = false;
    } else {
        throw ConfigError("unknown ablation '" + name + "'");
    }
}

void validate(const ExperimentConfig& cfg) {
    checked("net", [&] {
        NetConfig n = cfg.net;
        n.canvas = cfg.synth.canvas;
        n.t_max = cfg.synth.t_max;
        validate(n);
    });
    checked("loss", [&] { validate(cfg.loss); });
    checked("train", [&] {
        TrainConfig t = cfg.train;
        t.loss = cfg.loss;
        validate(t);
    });
    checked("ttt", [&] { validate(cfg.ttt); });
    if (cfg.eval.k < 1) throw ConfigError("eval.k must be at least 1");
    if (cfg.eval.max_queries < 0 || cfg.eval.train_eval_queries < 0)
        throw ConfigError("eval.max_queries and eval.train_eval_queries must be nonnegative");
    if (cfg.output_dir.empty()) throw ConfigError("output.dir must not be empty");
    if (cfg.synth.per_category < 1) throw ConfigError("data.per_category must be positive");
    if (cfg.synth.canvas < 16) throw ConfigError("data.canvas must be at least 16");
    if (cfg.synth.t_max < 2) throw ConfigError("data.t_max must be at least 2");
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t config_fingerprint(const ExperimentConfig& cfg) {
    std::uint64_t h = fnv1a64("config");
    for (const auto& [k, v] : flatten(cfg)) h = fnv1a64(k + "=" + v + "\n", h);
    return h;
}

std::string net_config_json(const NetConfig& n) {
    const json j{{"canvas", n.canvas},
                 {"enc_channels", n.enc_channels},
                 {"groups", n.groups},
                 {"feature_dim", n.feature_dim},
                 {"primary_dim", n.primary_dim},
                 {"sketch_aux_dim", n.sketch_aux_dim},
                 {"hidden", n.hidden},
                 {"photo_aux_dim", n.photo_aux_dim},
                 {"dec_channels", n.dec_channels},
                 {"eta_hidden", n.eta_hidden},
                 {"t_max", n.t_max}};
    return j.dump();
}

NetConfig parse_net_config(const std::string& text) {
    try {
        const json j = json::parse(text);
        NetConfig n;
        n.canvas = j.at("canvas").get<int>();
        n.enc_channels = j.at("enc_channels").get<std::vector<int>>();
        n.groups = j.at("groups").get<int>();
        n.feature_dim = j.at("feature_dim").get<int>();
        n.primary_dim = j.at("primary_dim").get<int>();
        n.sketch_aux_dim = j.at("sketch_aux_dim").get<int>();
        n.hidden = j.at("hidden").get<int>();
        n.photo_aux_dim = j.at("photo_aux_dim").get<int>();
        n.dec_channels = j.at("dec_channels").get<std::vector<int>>();
        n.eta_hidden = j.at("eta_hidden").get<int>();
        n.t_max = j.at("t_max").get<int>();
        return n;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad network description: ") + e.what());
    }
}

std::uint64_t model_fingerprint(const NetConfig& net) { return fnv1a64(net_config_json(net), fnv1a64("model")); }

} // namespace sketch3t
