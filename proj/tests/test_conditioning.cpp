#include <doctest.h>

#include <cmath>

#include "dmflow/error.hpp"
#include "dmflow/silhouette.hpp"
#include "dmflow/tokenizer.hpp"
#include "test_util.hpp"

using namespace dmflow;
using testutil::random_tensor;

namespace {

// independent point-in-triangle classification: barycentric coordinates by
// Cramer's rule on the projected triangle, strict interior
bool oracle_inside(double ax, double ay, double bx, double by, double cx, double cy, double px,
                   double py) {
    const double det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (det == 0.0) return false;
    const double u = ((px - ax) * (cy - ay) - (py - ay) * (cx - ax)) / det;
    const double v = ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) / det;
    return u > 0.0 && v > 0.0 && (u + v) < 1.0;
}

Tensor triangle_vertices(double a0, double a1, double b0, double b1, double c0, double c1) {
    Tensor v({3, 3});
    v(0, 0) = a0;
    v(0, 1) = a1;
    v(1, 0) = b0;
    v(1, 1) = b1;
    v(2, 0) = c0;
    v(2, 1) = c1;
    return v;
}

} // namespace

TEST_SUITE("conditioning") {

TEST_CASE("zero real faces rasterize to an all-zero frame") {
    Camera cam;
    cam.width = 16;
    cam.height = 16;
    Tensor verts = random_tensor({5, 3}, 1);
    std::vector<std::array<uint32_t, 3>> faces{{0, 1, 2}};
    auto img = rasterize_silhouette(verts, faces, 0, cam);
    for (uint8_t p : img) CHECK(p == 0);
}

TEST_CASE("two triangles covering the view produce an all-one frame") {
    Camera cam;
    cam.width = 32;
    cam.height = 32;
    Tensor verts({4, 3});
    const double e = 1.5;  // beyond [-1,1] so every pixel center is interior
    verts(0, 0) = -e; verts(0, 1) = -e;
    verts(1, 0) = e;  verts(1, 1) = -e;
    verts(2, 0) = e;  verts(2, 1) = e;
    verts(3, 0) = -e; verts(3, 1) = e;
    std::vector<std::array<uint32_t, 3>> faces{{0, 1, 2}, {0, 2, 3}};
    auto img = rasterize_silhouette(verts, faces, 2, cam);
    for (uint8_t p : img) CHECK(p == 1);
}

TEST_CASE("random triangles match the barycentric oracle per pixel") {
    Camera cam;
    cam.width = 64;
    cam.height = 64;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor verts({3, 3});
        for (int64_t i = 0; i < 9; ++i) verts[i] = rng.uniform(-1.2, 1.2);
        std::vector<std::array<uint32_t, 3>> faces{{0, 1, 2}};
        auto img = rasterize_silhouette(verts, faces, 1, cam);

        auto project = [&](int64_t v, double& sx, double& sy) {
            sx = (verts(v, 0) * cam.view_scale + 1.0) * 0.5 * 64.0;
            sy = (1.0 - verts(v, 1) * cam.view_scale) * 0.5 * 64.0;
        };
        double ax, ay, bx, by, cx, cy;
        project(0, ax, ay);
        project(1, bx, by);
        project(2, cx, cy);
        for (int64_t y = 0; y < 64; ++y) {
            for (int64_t x = 0; x < 64; ++x) {
                const bool expect = oracle_inside(ax, ay, bx, by, cx, cy,
                                                  static_cast<double>(x) + 0.5,
                                                  static_cast<double>(y) + 0.5);
                CHECK(img[static_cast<size_t>(y * 64 + x)] == (expect ? 1 : 0));
            }
        }
    }
}

TEST_CASE("shared edges are covered exactly once under the fill rule") {
    Camera cam;
    cam.view_scale = 1.0;  // identity view so world maps exactly onto the pixel grid
    cam.width = 256;
    cam.height = 256;
    // vertical shared edge through the centers of pixel column 127
    const double xe = 127.5 / 128.0 - 1.0;
    Tensor verts({4, 3});
    verts(0, 0) = -0.9; verts(0, 1) = -0.9;
    verts(1, 0) = xe;   verts(1, 1) = -0.9;
    verts(2, 0) = xe;   verts(2, 1) = 0.9;
    verts(3, 0) = -0.9; verts(3, 1) = 0.9;
    std::vector<std::array<uint32_t, 3>> left{{0, 1, 2}, {0, 2, 3}};

    Tensor verts_r({4, 3});
    verts_r(0, 0) = xe;  verts_r(0, 1) = -0.9;
    verts_r(1, 0) = 0.9; verts_r(1, 1) = -0.9;
    verts_r(2, 0) = 0.9; verts_r(2, 1) = 0.9;
    verts_r(3, 0) = xe;  verts_r(3, 1) = 0.9;
    std::vector<std::array<uint32_t, 3>> right{{0, 1, 2}, {0, 2, 3}};

    auto img_l = rasterize_silhouette(verts, left, 2, cam);
    auto img_r = rasterize_silhouette(verts_r, right, 2, cam);
    int64_t boundary_claims = 0;
    for (int64_t y = 20; y < 236; ++y) {
        const int64_t i = y * 256 + 127;
        const int claims = img_l[static_cast<size_t>(i)] + img_r[static_cast<size_t>(i)];
        CHECK(claims == 1);  // no double coverage, no gap
        boundary_claims += claims;
    }
    CHECK(boundary_claims == 216);
}

TEST_CASE("mesh outside the view rasterizes to zero") {
    Camera cam;
    cam.width = 16;
    cam.height = 16;
    Tensor verts = triangle_vertices(5.0, 5.0, 6.0, 5.0, 5.5, 6.0);
    std::vector<std::array<uint32_t, 3>> faces{{0, 1, 2}};
    auto img = rasterize_silhouette(verts, faces, 1, cam);
    for (uint8_t p : img) CHECK(p == 0);
}

TEST_CASE("rasterizer output is binary and deterministic") {
    Camera cam;
    cam.width = 24;
    cam.height = 24;
    Tensor verts = random_tensor({6, 3}, 9);
    std::vector<std::array<uint32_t, 3>> faces{{0, 1, 2}, {3, 4, 5}};
    auto a = rasterize_silhouette(verts, faces, 2, cam);
    auto b = rasterize_silhouette(verts, faces, 2, cam);
    CHECK(a == b);
    for (uint8_t p : a) CHECK((p == 0 || p == 1));
}

TEST_CASE("pgm video round trip") {
    SilhouetteVideo video;
    video.frames = 3;
    video.height = 10;
    video.width = 12;
    video.data.resize(360);
    Rng rng(17);
    for (auto& p : video.data) p = rng.uniform_int(2) ? 1 : 0;
    const std::string dir = testutil::scratch_dir("pgm");
    write_pgm_video(video, dir);
    SilhouetteVideo back = read_pgm_video(dir);
    CHECK(back.frames == 3);
    CHECK(back.height == 10);
    CHECK(back.width == 12);
    CHECK(back.data == video.data);

    CHECK_THROWS_AS((void)read_pgm_video(testutil::scratch_dir("pgm_empty")), Error);
}

TEST_CASE("token count follows the patch partition arithmetic") {
    ParamStore store;
    Rng rng(1);
    TokenizerConfig cfg;
    cfg.patch_t = 4;
    cfg.patch_s = 32;
    cfg.d_vid = 128;
    PatchTokenizer tok(cfg, store, rng);
    CHECK(tok.token_count(64, 256, 256) == 1024);  // 16 * 8 * 8
    CHECK_THROWS_AS((void)tok.token_count(63, 256, 256), Error);
    CHECK_THROWS_AS((void)tok.token_count(64, 250, 256), Error);
}

TEST_CASE("all-zero video tokenizes to position encoding plus bias") {
    ParamStore store;
    Rng rng(2);
    TokenizerConfig cfg;
    cfg.patch_t = 2;
    cfg.patch_s = 8;
    cfg.d_vid = 24;
    PatchTokenizer tok(cfg, store, rng);

    SilhouetteVideo video;
    video.frames = 4;
    video.height = 16;
    video.width = 16;
    video.data.assign(static_cast<size_t>(4 * 16 * 16), 0);

    VideoFeatureTokens out = tok.features(video);
    CHECK(out.provider == "patch-embed-v1");
    Tensor pe = tok.position_encoding(4, 16, 16);
    REQUIRE(out.tokens.same_shape(pe));
    // bias is zero-initialized, so tokens equal the position encoding exactly
    CHECK(testutil::max_abs_diff(out.tokens, pe) == 0.0);
}

TEST_CASE("tokenizer is deterministic and token count is input-shape only") {
    ParamStore store;
    Rng rng(3);
    TokenizerConfig cfg;
    cfg.patch_t = 2;
    cfg.patch_s = 8;
    cfg.d_vid = 16;
    PatchTokenizer tok(cfg, store, rng);

    SilhouetteVideo video;
    video.frames = 4;
    video.height = 16;
    video.width = 24;
    video.data.resize(static_cast<size_t>(4 * 16 * 24));
    Rng bits(5);
    for (auto& p : video.data) p = bits.uniform_int(2) ? 1 : 0;

    VideoFeatureTokens a = tok.features(video);
    VideoFeatureTokens b = tok.features(video);
    CHECK(testutil::max_abs_diff(a.tokens, b.tokens) == 0.0);
    CHECK(a.tokens.rows() == tok.token_count(4, 16, 24));
    CHECK(a.tokens.cols() == 16);
    CHECK(a.tokens.all_finite());
}

} // TEST_SUITE
