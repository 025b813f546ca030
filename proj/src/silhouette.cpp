#include "dmflow/silhouette.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dmflow/error.hpp"

namespace dmflow {

namespace {

struct Vec2 {
    double x, y;
};

inline double edge_cross(const Vec2& a, const Vec2& b, double px, double py) {
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// With positive screen-space orientation (interior where the edge function is
// positive, y pointing down): a top edge is horizontal with the interior
// below it, a left edge points toward smaller y.
inline bool top_left(const Vec2& a, const Vec2& b) {
    const double dy = b.y - a.y;
    const double dx = b.x - a.x;
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

} // namespace

std::vector<uint8_t> rasterize_silhouette(const Tensor& vertices,
                                          std::span<const std::array<uint32_t, 3>> faces,
                                          int64_t real_face_count, const Camera& cam) {
    const int64_t w = cam.width;
    const int64_t h = cam.height;
    std::vector<uint8_t> image(static_cast<size_t>(w * h), 0);

    // project once: x right, y up in world -> row 0 at the top of the image
    const int64_t n = vertices.rank() == 0 ? 0 : vertices.dim(0);
    std::vector<Vec2> screen(static_cast<size_t>(n));
    for (int64_t v = 0; v < n; ++v) {
        screen[static_cast<size_t>(v)] = {
            (vertices(v, 0) * cam.view_scale + 1.0) * 0.5 * static_cast<double>(w),
            (1.0 - vertices(v, 1) * cam.view_scale) * 0.5 * static_cast<double>(h)};
    }

    for (int64_t f = 0; f < real_face_count; ++f) {
        const auto& face = faces[static_cast<size_t>(f)];
        Vec2 p0 = screen[face[0]];
        Vec2 p1 = screen[face[1]];
        Vec2 p2 = screen[face[2]];
        const double area = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
        if (area == 0.0) continue;  // degenerate (includes sentinel padding faces)
        if (area < 0.0) std::swap(p1, p2);

        const int64_t x0 = std::max<int64_t>(
            0, static_cast<int64_t>(std::floor(std::min({p0.x, p1.x, p2.x}) - 0.5)));
        const int64_t x1 = std::min<int64_t>(
            w - 1, static_cast<int64_t>(std::ceil(std::max({p0.x, p1.x, p2.x}))));
        const int64_t y0 = std::max<int64_t>(
            0, static_cast<int64_t>(std::floor(std::min({p0.y, p1.y, p2.y}) - 0.5)));
        const int64_t y1 = std::min<int64_t>(
            h - 1, static_cast<int64_t>(std::ceil(std::max({p0.y, p1.y, p2.y}))));

        const bool tl0 = top_left(p0, p1);
        const bool tl1 = top_left(p1, p2);
        const bool tl2 = top_left(p2, p0);
        for (int64_t y = y0; y <= y1; ++y) {
            const double py = static_cast<double>(y) + 0.5;
            for (int64_t x = x0; x <= x1; ++x) {
                const double px = static_cast<double>(x) + 0.5;
                const double e0 = edge_cross(p0, p1, px, py);
                const double e1 = edge_cross(p1, p2, px, py);
                const double e2 = edge_cross(p2, p0, px, py);
                const bool in0 = e0 > 0.0 || (e0 == 0.0 && tl0);
                const bool in1 = e1 > 0.0 || (e1 == 0.0 && tl1);
                const bool in2 = e2 > 0.0 || (e2 == 0.0 && tl2);
                if (in0 && in1 && in2) {
                    image[static_cast<size_t>(y * w + x)] = 1;
                }
            }
        }
    }
    return image;
}

SilhouetteVideo render_silhouette_video(const Tensor& frames,
                                        std::span<const std::array<uint32_t, 3>> faces,
                                        int64_t real_face_count, const Camera& cam) {
    SilhouetteVideo video;
    video.frames = frames.dim(0);
    video.height = cam.height;
    video.width = cam.width;
    video.data.resize(static_cast<size_t>(video.frames * video.height * video.width));
    const int64_t n = frames.dim(1);
    for (int64_t t = 0; t < video.frames; ++t) {
        Tensor frame({n, 3});
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                frame(v, k) = frames.at3(t, v, k);
            }
        }
        auto image = rasterize_silhouette(frame, faces, real_face_count, cam);
        std::copy(image.begin(), image.end(),
                  video.data.begin() + static_cast<std::ptrdiff_t>(t * video.height * video.width));
    }
    return video;
}

void write_pgm_video(const SilhouetteVideo& video, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (int64_t t = 0; t < video.frames; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04" PRId64 ".pgm", t);
        const std::string path = (std::filesystem::path(dir) / name).string();
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        require(os.good(), "io", "write_pgm_video: cannot open " + path);
        os << "P5\n" << video.width << " " << video.height << "\n255\n";
        for (int64_t y = 0; y < video.height; ++y) {
            for (int64_t x = 0; x < video.width; ++x) {
                os.put(video.at(t, y, x) ? static_cast<char>(255) : 0);
            }
        }
        require(os.good(), "io", "write_pgm_video: write failed for " + path);
    }
}

SilhouetteVideo read_pgm_video(const std::string& dir) {
    require(std::filesystem::is_directory(dir), "missing_frames",
            "read_pgm_video: not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".pgm") {
            paths.push_back(entry.path().string());
        }
    }
    require(!paths.empty(), "missing_frames", "read_pgm_video: no .pgm frames in " + dir);
    std::sort(paths.begin(), paths.end());

    SilhouetteVideo video;
    for (const auto& path : paths) {
        std::ifstream is(path, std::ios::binary);
        require(is.good(), "io", "read_pgm_video: cannot open " + path);
        std::string magic;
        int64_t w = 0, h = 0, maxval = 0;
        is >> magic >> w >> h >> maxval;
        require(magic == "P5" && w > 0 && h > 0 && maxval == 255, "io",
                "read_pgm_video: unsupported PGM header in " + path);
        is.get();  // single whitespace after the header
        if (video.frames == 0) {
            video.height = h;
            video.width = w;
        } else {
            require(w == video.width && h == video.height, "shape_mismatch",
                    "read_pgm_video: frame size mismatch in " + path);
        }
        std::vector<char> buf(static_cast<size_t>(w * h));
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        require(is.good(), "truncated", "read_pgm_video: truncated " + path);
        for (char c : buf) {
            video.data.push_back(static_cast<uint8_t>(c) > 127 ? 1 : 0);
        }
        ++video.frames;
    }
    return video;
}

} // namespace dmflow
