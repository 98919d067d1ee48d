#pragma once

#include "sketch3t/autodiff.hpp"
#include "sketch3t/sketch.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sketch3t {

using ad::Tensor;
using ad::Var;

struct NetConfig {
    int canvas = 64;
    std::vector<int> enc_channels{8, 16, 32, 32};
    int groups = 4;
    int feature_dim = 128;    // d
    int primary_dim = 64;     // d_p
    int sketch_aux_dim = 128; // d_aS
    int hidden = 128;         // GRU state
    int photo_aux_dim = 128;  // d_aP
    std::vector<int> dec_channels{32, 32, 16, 8};
    int eta_hidden = 32;
    int t_max = 32;

    bool operator==(const NetConfig&) const = default;
};

/// Throws ConfigError on non-positive dimensions or incompatible canvas sizes.
void validate(const NetConfig& cfg);

using ParamList = std::vector<Var>;

enum class Group : int { encoder = 0, primary, sketch_decoder, photo_decoder, eta, count };

inline constexpr std::array<const char*, 5> kGroupNames{"encoder", "primary", "sketch_decoder", "photo_decoder", "eta"};

/// All trainable state: the four network groups, the stroke-weight network
/// and the inner learning rate.
struct ParamSet {
    std::array<ParamList, 5> groups;
    Var alpha;

    ParamList& operator[](Group g) { return groups[static_cast<int>(g)]; }
    const ParamList& operator[](Group g) const { return groups[static_cast<int>(g)]; }

    /// Deep copy into fresh gradient-tracking leaves.
    ParamSet clone() const;
    /// Every leaf, group by group, then alpha.
    std::vector<Var> leaves() const;
    std::size_t parameter_count() const;
};

/// Bitwise equality of every tensor, including alpha.
bool bit_equal(const ParamSet& a, const ParamSet& b);
bool bit_equal(const ParamList& a, const ParamList& b);

/// Fresh leaves holding copies of `params`.
ParamList clone_leaves(const ParamList& params);

enum class DecodeMode { teacher_forced, autoregressive };

/// Padded stroke-5 targets for a batch of sketches.
struct SketchBatch {
    int batch = 0;
    int steps = 0;                 // longest sequence in the batch
    std::vector<int> lengths;
    std::vector<Tensor> targets;   // per step [B,5], zero past each length
    Tensor mask;                   // [B,steps], 1 where a step exists

    static SketchBatch from(std::span<const VectorSketch* const> sketches);
};

/// NCHW batch from H x W x 3 images; every image must be canvas x canvas.
Tensor images_to_tensor(std::span<const RasterImage* const> images, int canvas);
/// NCHW [1,3,H,W] back to an image (first sample).
RasterImage tensor_to_image(const Tensor& t, int index, ImageKind kind);

class Sketch3TNet {
public:
    explicit Sketch3TNet(NetConfig cfg);

    const NetConfig& config() const { return cfg_; }

    ParamSet init(std::uint64_t seed, double alpha_init = 5e-4) const;

    /// Names of the tensors of one group, in storage order.
    std::vector<std::string> tensor_names(Group g) const;

    struct Encoded {
        Var pooled;   // [N, C_last], input to the final linear layer
        Var features; // [N, d]
    };

    Encoded encode(std::span<const Var> enc, const Var& images) const;
    Var project(std::span<const Var> primary, const Var& features) const;
    /// One [B,5] output per step; the previous-point input at step 0 is zero.
    std::vector<Var> decode_sketch(std::span<const Var> dec, const Var& features, const SketchBatch& targets,
                                   DecodeMode mode = DecodeMode::teacher_forced) const;
    /// Edgemap prediction [N,3,H,W] with values in (0,1).
    Var decode_photo(std::span<const Var> dec, const Var& features) const;
    /// J [R, gradient_feature_dim()] -> weights [R,1] in (0,1).
    Var stroke_weights(std::span<const Var> eta, const Var& gradient_features) const;

    /// Index of the final encoder linear layer (weight; bias follows) - the
    /// block the gradient features are taken against.
    std::size_t phi_weight_index() const;
    std::int64_t phi_size() const;
    std::int64_t gradient_feature_dim() const { return 2 * phi_size(); }

private:
    NetConfig cfg_;
};

} // namespace sketch3t
