#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dmflow/animate.hpp"
#include "dmflow/error.hpp"
#include "dmflow/metrics.hpp"
#include "dmflow/obj_io.hpp"
#include "dmflow/trainer.hpp"
#include "test_util.hpp"

using namespace dmflow;
using testutil::random_tensor;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

SilhouetteVideo binary_video(int64_t t, int64_t h, int64_t w, uint64_t seed) {
    SilhouetteVideo v;
    v.frames = t;
    v.height = h;
    v.width = w;
    v.data.resize(static_cast<size_t>(t * h * w));
    Rng rng(seed);
    for (auto& p : v.data) p = rng.uniform_int(2) ? 1 : 0;
    return v;
}

// trains throwaway checkpoints on a tiny rendered dataset and returns
// (dataset, vae_ckpt, rf_ckpt)
struct Pipeline {
    std::string dataset;
    std::string vae_ckpt;
    std::string rf_ckpt;
    std::string clip0;
};

Pipeline tiny_pipeline(const std::string& tag) {
    CurationConfig gen;
    gen.count = 2;
    gen.clip_frames = 4;
    gen.seed = 31;
    gen.pad_vertices = 64;
    gen.pad_faces = 160;
    gen.min_resolution = 4;
    gen.max_resolution = 4;
    gen.render_silhouettes = true;
    gen.silhouette_resolution = 16;
    Pipeline p;
    p.dataset = testutil::scratch_dir(tag + "_data");
    auto paths = generate_dataset(gen, p.dataset);
    p.clip0 = paths[0];

    TrainConfig vc;
    vc.stage = "vae";
    vc.iterations = 1;
    vc.batch_size = 1;
    vc.seed = 2;
    vc.dataset_dir = p.dataset;
    vc.out_dir = testutil::scratch_dir(tag + "_vae");
    vc.vae.layers_enc = 1;
    vc.vae.layers_dec = 1;
    vc.vae.feature_dim = 16;
    vc.vae.heads = 2;
    vc.vae.fps_ratio = 4;
    vc.vae.d_cond = 8;
    vc.vae.d_jump = 4;
    vc.vae.d_traj = 8;
    vc.vae.frame_count = 4;
    vc.vae.pe_bands = 2;
    p.vae_ckpt = train_vae(vc).final_checkpoint;

    TrainConfig rc;
    rc.stage = "rf";
    rc.iterations = 1;
    rc.batch_size = 1;
    rc.seed = 3;
    rc.dataset_dir = p.dataset;
    rc.out_dir = testutil::scratch_dir(tag + "_rf");
    rc.rf.blocks = 1;
    rc.rf.model_dim = 16;
    rc.rf.heads = 2;
    rc.rf.ffn_mult = 2;
    rc.tokenizer.patch_t = 2;
    rc.tokenizer.patch_s = 8;
    rc.tokenizer.d_vid = 8;
    p.rf_ckpt = train_rf(rc, p.vae_ckpt).final_checkpoint;
    return p;
}

// condition mesh + rendered silhouettes for clip0, ready for animate
struct AnimateInputs {
    std::string mesh;
    std::string video_dir;
};

AnimateInputs prepare_inputs(const Pipeline& p, const std::string& tag) {
    ClipRecord rec = read_clip(p.clip0);
    AnimateInputs in;
    in.video_dir = testutil::scratch_dir(tag + "_video");
    write_pgm_video(*rec.silhouette, in.video_dir);
    StaticMesh cond = rec.condition_mesh();
    in.mesh = in.video_dir + "/condition.obj";
    save_obj(in.mesh, cond.vertices, cond.faces, cond.real_vertex_count, cond.real_face_count);
    return in;
}

} // namespace

TEST_SUITE("evalcli") {

TEST_CASE("eucd basics and reference recomputation") {
    Tensor a = random_tensor({3, 5, 3}, 1);
    CHECK(eucd(a, a, 5) == 0.0);

    Tensor b = a;
    for (int64_t t = 0; t < 3; ++t) {
        for (int64_t v = 0; v < 5; ++v) b.at3(t, v, 0) += 0.3;
    }
    CHECK(eucd(a, b, 5) == doctest::Approx(0.3).epsilon(1e-12));

    Tensor c = random_tensor({3, 5, 3}, 2);
    double ref = 0.0;
    for (int64_t t = 0; t < 3; ++t) {
        for (int64_t v = 0; v < 5; ++v) {
            double d2 = 0.0;
            for (int64_t k = 0; k < 3; ++k) {
                d2 += (a.at3(t, v, k) - c.at3(t, v, k)) * (a.at3(t, v, k) - c.at3(t, v, k));
            }
            ref += std::sqrt(d2);
        }
    }
    ref /= 15.0;
    CHECK(eucd(a, c, 5) == doctest::Approx(ref).epsilon(1e-13));

    // metric properties: nonnegative, symmetric, zero iff equal on real rows
    CHECK(eucd(a, c, 5) > 0.0);
    CHECK(eucd(a, c, 5) == doctest::Approx(eucd(c, a, 5)).epsilon(1e-15));
}

TEST_CASE("eucd ignores padded vertices") {
    Tensor a = random_tensor({2, 6, 3}, 3);
    Tensor b = a;
    b.at3(0, 5, 1) += 100.0;  // padded row
    CHECK(eucd(a, b, 5) == 0.0);
}

TEST_CASE("silhouette psnr cap, floor and reference") {
    SilhouetteVideo a = binary_video(2, 8, 8, 4);
    CHECK(silhouette_psnr(a, a) == 100.0);

    SilhouetteVideo zero = a, one = a;
    std::fill(zero.data.begin(), zero.data.end(), 0);
    std::fill(one.data.begin(), one.data.end(), 1);
    CHECK(silhouette_psnr(zero, one) == doctest::Approx(0.0).epsilon(1e-12));

    SilhouetteVideo b = binary_video(2, 8, 8, 5);
    double ref = 0.0;
    for (int64_t t = 0; t < 2; ++t) {
        int wrong = 0;
        for (int64_t i = 0; i < 64; ++i) {
            wrong += a.data[static_cast<size_t>(t * 64 + i)] !=
                             b.data[static_cast<size_t>(t * 64 + i)]
                         ? 1
                         : 0;
        }
        ref += wrong == 0 ? 100.0 : 10.0 * std::log10(64.0 / wrong);
    }
    ref /= 2.0;
    CHECK(silhouette_psnr(a, b) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("silhouette iou") {
    SilhouetteVideo a = binary_video(1, 4, 4, 6);
    CHECK(silhouette_iou(a, a) == 1.0);
    SilhouetteVideo zero = a;
    std::fill(zero.data.begin(), zero.data.end(), 0);
    CHECK(silhouette_iou(zero, zero) == 1.0);  // empty union counts as 1
    SilhouetteVideo one = a;
    std::fill(one.data.begin(), one.data.end(), 1);
    CHECK(silhouette_iou(zero, one) == 0.0);
}

TEST_CASE("smoothness: linear one, static one, jitter below half") {
    Tensor linear({5, 2, 3});
    for (int64_t t = 0; t < 5; ++t) {
        for (int64_t v = 0; v < 2; ++v) linear.at3(t, v, 0) = 0.2 * static_cast<double>(t);
    }
    CHECK(smoothness(linear, 2) == doctest::Approx(1.0).epsilon(1e-9));

    Tensor still({4, 2, 3});
    CHECK(smoothness(still, 2) == 1.0);

    const double delta = 0.05;
    Tensor jitter({6, 1, 3});
    for (int64_t t = 0; t < 6; ++t) jitter.at3(t, 0, 0) = (t % 2 == 0) ? delta : -delta;
    const double score = smoothness(jitter, 1);
    CHECK(score < 0.5);
    // closed form: second difference 4d, first difference 2d
    CHECK(score == doctest::Approx(std::exp(-4.0 * delta / (2.0 * delta + 1e-8))).epsilon(1e-9));

    CHECK_THROWS_AS((void)smoothness(Tensor({2, 1, 3}), 1), Error);
}

TEST_CASE("animate end to end on tiny checkpoints") {
    Pipeline p = tiny_pipeline("an_e2e");
    AnimateInputs in = prepare_inputs(p, "an_e2e");

    AnimateOptions opts;
    opts.steps = 2;
    opts.cfg_scale = 2.0;
    opts.seed = 7;
    opts.gt_clip = p.clip0;
    const std::string out = testutil::scratch_dir("an_e2e_out");
    AnimateReport rep = animate(in.mesh, in.video_dir, p.vae_ckpt, p.rf_ckpt, out, opts);

    CHECK(rep.frames == 4);  // matches the video frame count
    CHECK(rep.eucd.has_value());
    CHECK(rep.smoothness.has_value());
    CHECK(rep.video_provider == "patch-embed-v1");
    for (int t = 0; t < 4; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "/frame_%04d.obj", t);
        CHECK(std::filesystem::exists(out + name));
        StaticMesh frame = load_obj(out + name);
        CHECK(frame.vertices.all_finite());
    }
    CHECK(std::filesystem::exists(out + "/report.json"));

    // byte-identical reruns with the same seed
    const std::string out2 = testutil::scratch_dir("an_e2e_out2");
    (void)animate(in.mesh, in.video_dir, p.vae_ckpt, p.rf_ckpt, out2, opts);
    for (int t = 0; t < 4; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "/frame_%04d.obj", t);
        CHECK(read_file(out + name) == read_file(out2 + name));
    }

    // pose-only export: a single rectified frame
    const std::string out3 = testutil::scratch_dir("an_e2e_pose");
    AnimateOptions pose = opts;
    pose.pose_only = true;
    AnimateReport rep3 = animate(in.mesh, in.video_dir, p.vae_ckpt, p.rf_ckpt, out3, pose);
    CHECK(rep3.frames == 1);
    CHECK(std::filesystem::exists(out3 + "/frame_0000.obj"));
    CHECK_FALSE(std::filesystem::exists(out3 + "/frame_0001.obj"));
}

TEST_CASE("animate reports distinct diagnostics") {
    Pipeline p = tiny_pipeline("an_err");
    AnimateInputs in = prepare_inputs(p, "an_err");

    auto code_of = [&](const std::string& mesh, const std::string& video,
                       const std::string& vae, const std::string& rf) {
        try {
            (void)animate(mesh, video, vae, rf, testutil::scratch_dir("an_err_out"), {});
        } catch (const Error& e) {
            return e.code();
        }
        return std::string("no_error");
    };

    // size filter: face/vertex ratio >= 2.5
    const std::string bad_mesh = testutil::scratch_dir("an_err_mesh") + "/dense.obj";
    {
        std::ofstream os(bad_mesh);
        os << "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n";
        for (int i = 0; i < 10; ++i) os << "f 1 2 3\n";
    }
    CHECK(code_of(bad_mesh, in.video_dir, p.vae_ckpt, p.rf_ckpt) == "filter_rejected");

    // missing frames
    CHECK(code_of(in.mesh, testutil::scratch_dir("an_err_novideo"), p.vae_ckpt, p.rf_ckpt) ==
          "missing_frames");

    // frame-count mismatch against the model
    const std::string wrong_video = testutil::scratch_dir("an_err_wrongT");
    write_pgm_video(binary_video(8, 16, 16, 9), wrong_video);
    CHECK(code_of(in.mesh, wrong_video, p.vae_ckpt, p.rf_ckpt) == "ckpt_mismatch");

    // swapped checkpoints
    CHECK(code_of(in.mesh, in.video_dir, p.rf_ckpt, p.vae_ckpt) == "ckpt_mismatch");
}

TEST_CASE("cli surfaces machine-readable errors and succeeds on gen-data") {
#ifdef DMFLOW_CLI_PATH
    const std::string cli = DMFLOW_CLI_PATH;
    const std::string dir = testutil::scratch_dir("cli");

    // failure path: missing required inputs
    const std::string err_file = dir + "/err.txt";
    int rc = std::system((cli + " render --clip /nonexistent.dmc --out " + dir + "/r 2> " +
                          err_file + " > /dev/null")
                             .c_str());
    CHECK(rc != 0);
    const std::string err = read_file(err_file);
    CHECK(err.find("\"error\"") != std::string::npos);

    // success path: a small dataset
    const std::string cfg_path = dir + "/gen.json";
    {
        std::ofstream os(cfg_path);
        os << R"({"count":1,"clip_frames":4,"pad_vertices":64,"pad_faces":160,)"
           << R"("min_resolution":4,"max_resolution":4,"silhouette_resolution":16})";
    }
    rc = std::system(
        (cli + " gen-data --config " + cfg_path + " --seed 1 --out " + dir + "/data > /dev/null")
            .c_str());
    CHECK(rc == 0);
    CHECK(std::filesystem::exists(dir + "/data/clip_00000.dmc"));
#else
    MESSAGE("cli path not configured");
#endif
}

} // TEST_SUITE
