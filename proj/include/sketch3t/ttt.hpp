#pragma once

#include "sketch3t/episodes.hpp"
#include "sketch3t/nets.hpp"

#include <span>
#include <string>
#include <vector>

namespace sketch3t {

struct TTTConfig {
    double lr = 1e-4;
    int tau_p = 4;
    int tau_s = 4;
    bool use_tpa = true;
    bool gallery_refresh = false; // re-encode the gallery under each query's adapted encoder
    int batch = 32;               // photos per gallery mini-batch

    bool operator==(const TTTConfig&) const = default;
};

void validate(const TTTConfig& cfg);

struct GallerySnapshot {
    ParamList encoder;           // encoder the features were computed under
    Tensor features;             // [G, d_p]
    std::vector<int> labels;     // category per row
    std::vector<int> items;      // dataset item per row
    std::vector<double> recon;   // mean edgemap loss before each step, then after the last
};

/// Encodes and projects every gallery photo under `encoder`.
GallerySnapshot make_snapshot(const Sketch3TNet& net, const ParamList& encoder, const ParamList& primary,
                              const ItemTensors& data, std::span<const int> gallery, int batch = 32);

/// tau_p full-gallery gradient steps at rate lr on the mean edgemap
/// reconstruction loss, updating a copy of the encoder; the features are then
/// computed once. With use_tpa off the trained encoder is used unchanged.
GallerySnapshot adapt_gallery(const Sketch3TNet& net, const ParamSet& params, const ItemTensors& data,
                              std::span<const int> gallery, const TTTConfig& cfg);

struct QueryAdaptation {
    Tensor feature;              // [1, d_p]
    ParamList encoder;           // the adapted private copy
    std::vector<double> losses;  // reconstruction loss before each step, then after the last
    bool fallback = false;       // a non-finite loss forced the unadapted feature
};

/// tau_s plain gradient steps on the query's own unweighted reconstruction
/// loss, applied to a private copy of `encoder`; the decoder stays fixed.
QueryAdaptation adapt_query(const Sketch3TNet& net, const ParamList& encoder, const ParamList& sketch_dec,
                            const ParamList& primary, const Tensor& raster, const SketchBatch& vector, int tau_s,
                            double lr);

struct Ranking {
    std::vector<int> order;     // gallery rows, best first
    std::vector<int> relevance; // 1 where the row's category matches the query
};

/// Ascending squared distance, ties by ascending row.
Ranking retrieve(const Tensor& feature, const Tensor& gallery, std::span<const int> labels, int query_category);
Ranking retrieve(const Tensor& feature, const GallerySnapshot& snap, int query_category);

struct VariantResult {
    std::string name;
    double map = 0.0;
    double precision = 0.0;
    std::vector<double> ap;
    std::vector<double> pk;
};

struct QueryTrace {
    int item = 0;
    int category = 0;
    double loss_pre = 0.0;
    double loss_post = 0.0;
    double loss_step1 = 0.0;
    bool fallback = false;
    std::vector<double> ap; // per variant, report order
};

struct ZsReport {
    int k = 200;
    std::vector<VariantResult> variants; // frozen, tpa_only, ttt, ttt_no_tpa
    std::vector<QueryTrace> queries;
    std::vector<double> gallery_recon;
    std::size_t no_relevant = 0;

    const VariantResult& variant(const std::string& name) const;
};

/// Gallery snapshots are built once; every query is adapted from the same
/// snapshot encoder, so results do not depend on query order.
ZsReport evaluate_zs(const Sketch3TNet& net, const ParamSet& params, const ItemTensors& data, std::span<const int> queries,
                     std::span<const int> gallery, const TTTConfig& cfg, int k);

} // namespace sketch3t
