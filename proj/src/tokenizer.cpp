#include "dmflow/tokenizer.hpp"

#include <cmath>

#include "dmflow/error.hpp"

namespace dmflow {

PatchTokenizer::PatchTokenizer(const TokenizerConfig& cfg, ParamStore& store, Rng& rng)
    : cfg_(cfg) {
    require(cfg_.patch_t >= 1 && cfg_.patch_s >= 1, "invalid_arg", "tokenizer: patch sizes must be >= 1");
    require(cfg_.d_vid >= 2 && cfg_.d_vid % 2 == 0, "invalid_arg", "tokenizer: d_vid must be even");
    proj_ = Linear(store, "tokenizer.proj", patch_volume(), cfg_.d_vid, rng);
}

int64_t PatchTokenizer::token_count(int64_t frames, int64_t height, int64_t width) const {
    require(frames % cfg_.patch_t == 0, "invalid_arg",
            "tokenizer: frame count " + std::to_string(frames) + " not divisible by patch_t=" +
                std::to_string(cfg_.patch_t));
    require(height % cfg_.patch_s == 0 && width % cfg_.patch_s == 0, "invalid_arg",
            "tokenizer: resolution not divisible by patch_s=" + std::to_string(cfg_.patch_s));
    return (frames / cfg_.patch_t) * (height / cfg_.patch_s) * (width / cfg_.patch_s);
}

Tensor PatchTokenizer::patches(const SilhouetteVideo& video) const {
    const int64_t l = token_count(video.frames, video.height, video.width);
    const int64_t pt = cfg_.patch_t, ps = cfg_.patch_s;
    const int64_t gy = video.height / ps, gx = video.width / ps;
    Tensor out({l, patch_volume()});
    int64_t row = 0;
    for (int64_t it = 0; it < video.frames / pt; ++it) {
        for (int64_t iy = 0; iy < gy; ++iy) {
            for (int64_t ix = 0; ix < gx; ++ix, ++row) {
                int64_t col = 0;
                for (int64_t dt = 0; dt < pt; ++dt) {
                    for (int64_t dy = 0; dy < ps; ++dy) {
                        for (int64_t dx = 0; dx < ps; ++dx, ++col) {
                            out(row, col) = static_cast<double>(
                                video.at(it * pt + dt, iy * ps + dy, ix * ps + dx));
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor PatchTokenizer::position_encoding(int64_t frames, int64_t height, int64_t width) const {
    const int64_t l = token_count(frames, height, width);
    const int64_t d = cfg_.d_vid;
    // three contiguous even-width channel bands, one per axis (t, y, x)
    int64_t band = (d / 3) & ~int64_t{1};
    if (band == 0) band = 2;
    const int64_t widths[3] = {band, band, d - 2 * band};

    Tensor pe({l, d});
    const int64_t gy = height / cfg_.patch_s, gx = width / cfg_.patch_s;
    int64_t row = 0;
    for (int64_t it = 0; it < frames / cfg_.patch_t; ++it) {
        for (int64_t iy = 0; iy < gy; ++iy) {
            for (int64_t ix = 0; ix < gx; ++ix, ++row) {
                const double coords[3] = {static_cast<double>(it), static_cast<double>(iy),
                                          static_cast<double>(ix)};
                int64_t off = 0;
                for (int axis = 0; axis < 3; ++axis) {
                    const int64_t half = widths[axis] / 2;
                    for (int64_t i = 0; i < half; ++i) {
                        const double freq =
                            std::pow(10000.0, -static_cast<double>(i) / std::max<double>(1.0, static_cast<double>(half)));
                        pe(row, off + 2 * i) = std::sin(coords[axis] * freq);
                        pe(row, off + 2 * i + 1) = std::cos(coords[axis] * freq);
                    }
                    off += widths[axis];
                }
            }
        }
    }
    return pe;
}

NodeId PatchTokenizer::tokens(Graph& g, const Tensor& patches, const Tensor& position_encoding) const {
    require(patches.cols() == patch_volume(), "shape_mismatch", "tokenizer: bad patch width");
    require(position_encoding.rows() == patches.rows() && position_encoding.cols() == cfg_.d_vid,
            "shape_mismatch", "tokenizer: position encoding shape mismatch");
    return g.add(proj_(g, g.constant(patches)), g.constant(position_encoding));
}

VideoFeatureTokens PatchTokenizer::features(const SilhouetteVideo& video) const {
    Graph g;
    NodeId out = tokens(g, patches(video), position_encoding(video.frames, video.height, video.width));
    return VideoFeatureTokens{g.val(out), provider_id()};
}

} // namespace dmflow
