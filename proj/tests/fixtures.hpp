#pragma once

// Small networks and datasets shared by the model-level tests.

#include "sketch3t/dataset.hpp"
#include "sketch3t/episodes.hpp"
#include "sketch3t/nets.hpp"
#include "sketch3t/rng.hpp"

#include <filesystem>

namespace fixtures {

using namespace sketch3t;

/// About 1.1k parameters over every group.
inline NetConfig tiny_net() {
    NetConfig c;
    c.canvas = 16;
    c.enc_channels = {2, 4};
    c.groups = 2;
    c.feature_dim = 4;
    c.primary_dim = 3;
    c.sketch_aux_dim = 3;
    c.hidden = 3;
    c.photo_aux_dim = 3;
    c.dec_channels = {4, 2};
    c.eta_hidden = 3;
    c.t_max = 6;
    return c;
}

/// A larger stack that still trains in well under a second per step.
inline NetConfig small_net() {
    NetConfig c;
    c.canvas = 16;
    c.enc_channels = {4, 8};
    c.groups = 2;
    c.feature_dim = 12;
    c.primary_dim = 8;
    c.sketch_aux_dim = 8;
    c.hidden = 8;
    c.photo_aux_dim = 8;
    c.dec_channels = {8, 4};
    c.eta_hidden = 4;
    c.t_max = 10;
    return c;
}

inline SynthConfig tiny_synth(const NetConfig& net, int per_category = 6) {
    SynthConfig s;
    s.per_category = per_category;
    s.canvas = net.canvas;
    s.t_max = net.t_max;
    return s;
}

/// Adds uniform noise so no parameter sits at a structural zero.
inline void jitter(ParamList& params, Rng& rng, double amount) {
    for (const Var& v : params)
        for (double& x : v.node()->value.data) x += rng.uniform(-amount, amount);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "sketch3t_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace fixtures
