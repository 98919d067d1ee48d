#pragma once

#include "sketch3t/sketch.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sketch3t {

struct SketchPhotoPair {
    /// Source-coordinate polylines the vector sketch was derived from.
    std::vector<Polyline> strokes;
    VectorSketch sketch_vec;
    RasterImage sketch_raster;
    RasterImage photo;
    int category_id = 0;
    int style_id = 0;

    bool operator==(const SketchPhotoPair&) const = default;
};

struct CategorySplit {
    std::vector<int> meta_train;
    std::vector<int> meta_test;
    std::vector<int> unseen_test;
    std::vector<int> seen_styles;
    std::vector<int> heldout_styles;

    bool operator==(const CategorySplit&) const = default;
};

/// Throws ConfigError if the three category sets overlap.
void validate(const CategorySplit& split);

struct Dataset {
    int canvas = 64;
    int line_width = 1;
    int t_max = 32;
    std::vector<std::string> category_names;
    CategorySplit split;
    std::vector<SketchPhotoPair> items;

    bool operator==(const Dataset&) const = default;

    /// Indices of items in `category`, optionally restricted to `styles`.
    std::vector<int> items_of(int category, const std::vector<int>& styles = {}) const;
    /// Indices of items whose category is in `categories` (and style in `styles` if nonempty).
    std::vector<int> items_in(const std::vector<int>& categories, const std::vector<int>& styles = {}) const;
};

/// Builds a pair from source polylines: stroke-5 encoding and rasterisation
/// under the dataset's canvas settings.
SketchPhotoPair make_pair(std::vector<Polyline> strokes, RasterImage photo, int category_id, int style_id, int canvas,
                          int line_width, int t_max);

/// Newline-delimited JSON: a header record with the canvas settings and the
/// split, then one record per pair.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// ---- synthetic generator ----

/// Sketching style: how an outline is perturbed into strokes.
struct SketchStyle {
    double jitter = 0.0;        // gaussian vertex noise, fraction of shape size
    int rounding = 0;           // Chaikin corner-cutting passes
    int strokes_per_outline = 1;
    double shuffle = 0.0;       // probability of shuffling and reversing strokes
    double drop = 0.0;          // per-stroke drop probability (one always survives)
    double stretch = 0.0;       // max anisotropic scale deviation
    double wobble = 0.0;        // low-frequency sinusoidal displacement amplitude

    bool operator==(const SketchStyle&) const = default;
};

struct SynthConfig {
    std::vector<std::string> categories{"circle", "square", "triangle", "star", "cross",
                                        "arrow", "spiral", "zigzag", "house", "flower"};
    int per_category = 200;
    int canvas = 64;
    int line_width = 1;
    int t_max = 32;
    int n_meta_train = 4;
    int n_meta_test = 2;
    int n_unseen = 4;
    std::vector<SketchStyle> styles = default_styles();
    int n_heldout_styles = 2;   // the last n styles are held out
    double max_rotation = 0.35; // radians

    static std::vector<SketchStyle> default_styles();

    bool operator==(const SynthConfig&) const = default;
};

/// Known shape names.
const std::vector<std::string>& shape_names();

/// Filled outline polygon(s) of a named shape in source coordinates, before
/// any style perturbation. Throws ConfigError for unknown names.
std::vector<Polyline> shape_outline(const std::string& name, double rotation, double aspect);

/// Deterministic given (cfg, seed). Categories are shuffled into the split;
/// every category receives pairs in every style.
Dataset synth_generate(const SynthConfig& cfg, std::uint64_t seed);

} // namespace sketch3t
