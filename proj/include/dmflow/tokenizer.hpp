#pragma once

#include <memory>
#include <string>

#include "dmflow/graph.hpp"
#include "dmflow/nn.hpp"
#include "dmflow/silhouette.hpp"

namespace dmflow {

struct TokenizerConfig {
    int64_t patch_t = 4;   // temporal patch size
    int64_t patch_s = 32;  // spatial patch size
    int64_t d_vid = 128;   // token feature width (must be even)
};

struct VideoFeatureTokens {
    Tensor tokens;  // L x d_vid
    std::string provider;
};

// Anything that turns a silhouette video into conditioning tokens. External
// feature taps (pre-trained video backbones emitting e.g. 1088 x 3072 token
// grids) can implement this without touching the generator.
class VideoFeatureProvider {
public:
    virtual ~VideoFeatureProvider() = default;
    virtual VideoFeatureTokens features(const SilhouetteVideo& video) const = 0;
    virtual std::string provider_id() const = 0;
};

// Non-overlapping (patch_t x patch_s x patch_s) patches, each flattened,
// linearly projected to d_vid and offset by a sinusoidal spatio-temporal
// position encoding. The projection is trained jointly with the generator,
// so its parameters live in the generator's store.
class PatchTokenizer : public VideoFeatureProvider {
public:
    PatchTokenizer(const TokenizerConfig& cfg, ParamStore& store, Rng& rng);

    // video frame/height/width must be divisible by the patch sizes
    int64_t token_count(int64_t frames, int64_t height, int64_t width) const;
    int64_t patch_volume() const { return cfg_.patch_t * cfg_.patch_s * cfg_.patch_s; }

    Tensor patches(const SilhouetteVideo& video) const;      // L x patch_volume
    Tensor position_encoding(int64_t frames, int64_t height, int64_t width) const;  // L x d_vid

    // graph path used in training: tokens = patches * W + b + PE
    NodeId tokens(Graph& g, const Tensor& patches, const Tensor& position_encoding) const;

    VideoFeatureTokens features(const SilhouetteVideo& video) const override;
    std::string provider_id() const override { return "patch-embed-v1"; }

    const TokenizerConfig& config() const { return cfg_; }

private:
    TokenizerConfig cfg_;
    Linear proj_;
};

} // namespace dmflow
