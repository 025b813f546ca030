#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmflow/tensor.hpp"

namespace dmflow {

// Orthographic front view: x maps to image x, y to image y (up), z is
// dropped. view_scale maps the normalized bound [-1,1] into the frame with a
// 5% total margin.
struct Camera {
    double view_scale = 0.95;
    int64_t width = 256;
    int64_t height = 256;
};

struct SilhouetteVideo {
    int64_t frames = 0;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> data;  // frames*height*width, values in {0,1}

    uint8_t at(int64_t t, int64_t y, int64_t x) const {
        return data[static_cast<size_t>((t * height + y) * width + x)];
    }
    uint8_t& at(int64_t t, int64_t y, int64_t x) {
        return data[static_cast<size_t>((t * height + y) * width + x)];
    }
};

// Binary coverage image: a pixel is 1 iff its center lies inside the
// projection of any real, non-degenerate triangle; pixels exactly on an edge
// resolve by a top-left fill rule. Deterministic.
std::vector<uint8_t> rasterize_silhouette(const Tensor& vertices,
                                          std::span<const std::array<uint32_t, 3>> faces,
                                          int64_t real_face_count, const Camera& cam);

// One silhouette frame per animation frame.
SilhouetteVideo render_silhouette_video(const Tensor& frames,
                                        std::span<const std::array<uint32_t, 3>> faces,
                                        int64_t real_face_count, const Camera& cam);

// Numbered binary PGM (P5) files, one per frame, values {0,255}.
void write_pgm_video(const SilhouetteVideo& video, const std::string& dir);
SilhouetteVideo read_pgm_video(const std::string& dir);

} // namespace dmflow
