#include "sketch3t/dataset.hpp"
#include "sketch3t/error.hpp"
#include "sketch3t/image_codec.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace sketch3t {

using nlohmann::json;

void validate(const CategorySplit& split) {
    std::set<int> seen;
    for (const auto* set : {&split.meta_train, &split.meta_test, &split.unseen_test})
        for (int c : *set)
            if (!seen.insert(c).second) throw ConfigError("category " + std::to_string(c) + " appears in two splits");
}

std::vector<int> Dataset::items_of(int category, const std::vector<int>& styles) const {
    return items_in({category}, styles);
}

std::vector<int> Dataset::items_in(const std::vector<int>& categories, const std::vector<int>& styles) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        if (std::find(categories.begin(), categories.end(), it.category_id) == categories.end()) continue;
        if (!styles.empty() && std::find(styles.begin(), styles.end(), it.style_id) == styles.end()) continue;
        out.push_back(static_cast<int>(i));
    }
    return out;
}

SketchPhotoPair make_pair(std::vector<Polyline> strokes, RasterImage photo, int category_id, int style_id, int canvas,
                          int line_width, int t_max) {
    SketchPhotoPair p;
    p.sketch_vec = to_stroke5(strokes, t_max);
    p.sketch_vec.category_id = category_id;
    p.sketch_vec.style_id = style_id;
    p.sketch_raster = rasterize(p.sketch_vec, canvas, canvas, line_width);
    p.strokes = std::move(strokes);
    p.photo = std::move(photo);
    p.photo.kind = ImageKind::photo;
    p.category_id = category_id;
    p.style_id = style_id;
    return p;
}

namespace {

json split_to_json(const CategorySplit& s) {
    return {{"meta_train", s.meta_train},   {"meta_test", s.meta_test},
            {"unseen_test", s.unseen_test}, {"seen_styles", s.seen_styles},
            {"heldout_styles", s.heldout_styles}};
}

json pair_to_json(const SketchPhotoPair& p) {
    json strokes = json::array();
    for (const Polyline& pl : p.strokes) {
        json xs = json::array(), ys = json::array();
        for (const Point2& q : pl) {
            xs.push_back(q.x);
            ys.push_back(q.y);
        }
        strokes.push_back({xs, ys});
    }
    json s5 = json::array();
    for (const StrokePoint& q : p.sketch_vec.points) s5.push_back({q.x, q.y, q.q1, q.q2, q.q3});
    return {{"category_id", p.category_id}, {"style_id", p.style_id}, {"strokes", strokes}, {"stroke5", s5},
            {"photo_png", base64_encode(encode_png(p.photo))}};
}

} // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    const json header{{"type", "header"},
                      {"version", 1},
                      {"canvas", ds.canvas},
                      {"line_width", ds.line_width},
                      {"t_max", ds.t_max},
                      {"categories", ds.category_names},
                      {"split", split_to_json(ds.split)},
                      {"num_items", ds.items.size()}};
    out << header.dump() << '\n';
    for (const auto& p : ds.items) out << pair_to_json(p).dump() << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset " + path.string());
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        try {
            if (!have_header) {
                if (rec.value("type", "") != "header") throw ParseError("first record must be the header", lineno);
                if (rec.at("version").get<int>() != 1) throw ParseError("unsupported dataset version", lineno);
                ds.canvas = rec.at("canvas").get<int>();
                ds.line_width = rec.at("line_width").get<int>();
                ds.t_max = rec.at("t_max").get<int>();
                ds.category_names = rec.at("categories").get<std::vector<std::string>>();
                const json& s = rec.at("split");
                ds.split.meta_train = s.at("meta_train").get<std::vector<int>>();
                ds.split.meta_test = s.at("meta_test").get<std::vector<int>>();
                ds.split.unseen_test = s.at("unseen_test").get<std::vector<int>>();
                ds.split.seen_styles = s.at("seen_styles").get<std::vector<int>>();
                ds.split.heldout_styles = s.at("heldout_styles").get<std::vector<int>>();
                expected = rec.at("num_items").get<std::size_t>();
                try {
                    validate(ds.split);
                } catch (const ConfigError& e) {
                    throw ParseError(e.what(), lineno);
                }
                if (ds.canvas < 16 || ds.t_max < 1 || ds.line_width < 1) throw ParseError("invalid canvas settings", lineno);
                have_header = true;
                continue;
            }
            SketchPhotoPair p;
            p.category_id = rec.at("category_id").get<int>();
            p.style_id = rec.at("style_id").get<int>();
            for (const json& st : rec.at("strokes")) {
                const auto xs = st.at(0).get<std::vector<double>>();
                const auto ys = st.at(1).get<std::vector<double>>();
                if (xs.size() != ys.size()) throw ParseError("stroke x/y lengths differ", lineno);
                Polyline pl;
                for (std::size_t i = 0; i < xs.size(); ++i) pl.push_back({xs[i], ys[i]});
                p.strokes.push_back(std::move(pl));
            }
            if (rec.contains("stroke5")) {
                for (const json& q : rec.at("stroke5")) {
                    if (q.size() != 5) throw ParseError("stroke-5 point must have five fields", lineno);
                    StrokePoint sp{q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<int>(), q.at(3).get<int>(),
                                   q.at(4).get<int>()};
                    p.sketch_vec.points.push_back(sp);
                }
            } else {
                p.sketch_vec = to_stroke5(p.strokes, ds.t_max);
            }
            p.sketch_vec.category_id = p.category_id;
            p.sketch_vec.style_id = p.style_id;
            try {
                validate(p.sketch_vec, ds.t_max);
            } catch (const InvalidSketch& e) {
                throw ParseError(e.what(), lineno);
            }
            p.photo = decode_png(base64_decode(rec.at("photo_png").get<std::string>()));
            p.photo.kind = ImageKind::photo;
            if (p.photo.height != ds.canvas || p.photo.width != ds.canvas)
                throw ParseError("photo size does not match the canvas", lineno);
            p.sketch_raster = rasterize(p.sketch_vec, ds.canvas, ds.canvas, ds.line_width);
            ds.items.push_back(std::move(p));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (have_header && ds.items.size() != expected)
        throw ParseError("header announces " + std::to_string(expected) + " items, found " + std::to_string(ds.items.size()),
                         lineno);
    return ds;
}

} // namespace sketch3t
