// Command-line front end: dataset generation, the two training stages,
// silhouette rendering, generation and evaluation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmflow/animate.hpp"
#include "dmflow/config_io.hpp"
#include "dmflow/error.hpp"
#include "dmflow/metrics.hpp"
#include "dmflow/obj_io.hpp"
#include "dmflow/trainer.hpp"

namespace {

using dmflow::Error;
using nlohmann::json;

struct CommonArgs {
    std::string config;
    std::optional<uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "JSON config file");
    cmd->add_option("--seed", args.seed, "seed override");
    cmd->add_option("--out", args.out, "output directory");
}

int run_gen_data(const CommonArgs& args) {
    dmflow::CurationConfig cfg;
    if (!args.config.empty()) cfg = dmflow::curation_config_from_json(dmflow::load_json_file(args.config));
    if (args.seed) cfg.seed = *args.seed;
    dmflow::require(!args.out.empty(), "invalid_arg", "gen-data: --out is required");
    auto paths = dmflow::generate_dataset(cfg, args.out);
    std::cout << "wrote " << paths.size() << " clips to " << args.out << "\n";
    return 0;
}

int run_train(const CommonArgs& args, const std::string& stage, const std::string& vae_ckpt,
              const std::string& dataset, const std::string& resume) {
    dmflow::require(!args.config.empty(), "invalid_arg", "train: --config is required");
    dmflow::TrainConfig cfg = dmflow::train_config_from_json(dmflow::load_json_file(args.config));
    cfg.stage = stage;
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (!dataset.empty()) cfg.dataset_dir = dataset;
    if (!resume.empty()) cfg.resume_from = resume;
    dmflow::require(!cfg.out_dir.empty(), "invalid_arg", "train: no output directory configured");

    dmflow::TrainStats stats;
    if (stage == "vae") {
        stats = dmflow::train_vae(cfg);
    } else {
        dmflow::require(!vae_ckpt.empty(), "invalid_arg", "train-rf: --vae-ckpt is required");
        stats = dmflow::train_rf(cfg, vae_ckpt);
    }
    std::cout << "trained " << stats.steps << " steps, loss " << stats.first_loss << " -> "
              << stats.last_loss << "\n"
              << "checkpoint: " << stats.final_checkpoint << "\n";
    return 0;
}

int run_render(const CommonArgs& args, const std::string& clip_path, int64_t resolution) {
    dmflow::require(!clip_path.empty(), "invalid_arg", "render: --clip is required");
    dmflow::require(!args.out.empty(), "invalid_arg", "render: --out is required");
    dmflow::ClipRecord rec = dmflow::read_clip(clip_path);
    dmflow::Canonicalized canon = dmflow::canonicalize(rec.condition_mesh(), &rec.sequence);
    dmflow::Camera cam;
    cam.width = resolution;
    cam.height = resolution;
    dmflow::SilhouetteVideo video = dmflow::render_silhouette_video(
        canon.seq->frames, rec.sequence.faces, rec.sequence.real_face_count, cam);
    dmflow::write_pgm_video(video, args.out);
    // raw condition mesh alongside, ready to drive `animate`
    dmflow::StaticMesh cond = rec.condition_mesh();
    dmflow::save_obj((std::filesystem::path(args.out) / "condition.obj").string(), cond.vertices,
                     cond.faces, cond.real_vertex_count, cond.real_face_count);
    std::cout << "rendered " << video.frames << " frames to " << args.out << "\n";
    return 0;
}

int run_animate(const CommonArgs& args, const std::string& mesh, const std::string& video_dir,
                const std::string& vae_ckpt, const std::string& rf_ckpt,
                const dmflow::AnimateOptions& opts) {
    dmflow::require(!mesh.empty() && !video_dir.empty() && !vae_ckpt.empty() && !rf_ckpt.empty(),
                    "invalid_arg", "animate: --mesh, --video-dir, --vae-ckpt, --rf-ckpt are required");
    dmflow::require(!args.out.empty(), "invalid_arg", "animate: --out is required");
    dmflow::AnimateOptions o = opts;
    if (args.seed) o.seed = *args.seed;
    dmflow::AnimateReport rep =
        dmflow::animate(mesh, video_dir, vae_ckpt, rf_ckpt, args.out, o);
    std::cout << "frames=" << rep.frames << " psnr=" << rep.psnr << " iou=" << rep.iou;
    if (rep.smoothness) std::cout << " smoothness=" << *rep.smoothness;
    if (rep.eucd) std::cout << " eucd=" << *rep.eucd;
    std::cout << "\n";
    return 0;
}

// predicted OBJ sequence against a ground-truth clip
int run_eval(const CommonArgs& args, const std::string& pred_dir, const std::string& gt_clip) {
    dmflow::require(!pred_dir.empty() && !gt_clip.empty(), "invalid_arg",
                    "eval: --pred and --gt are required");
    dmflow::ClipRecord gt = dmflow::read_clip(gt_clip);
    dmflow::Canonicalized canon = dmflow::canonicalize(gt.condition_mesh(), &gt.sequence);

    // load frame_*.obj in order and renormalize into the clip's frame
    std::vector<std::string> frames;
    for (const auto& entry : std::filesystem::directory_iterator(pred_dir)) {
        if (entry.path().extension() == ".obj" &&
            entry.path().filename().string().rfind("frame_", 0) == 0) {
            frames.push_back(entry.path().string());
        }
    }
    std::sort(frames.begin(), frames.end());
    dmflow::require(!frames.empty(), "missing_frames", "eval: no frame_*.obj in " + pred_dir);

    const int64_t t_count = static_cast<int64_t>(frames.size());
    const int64_t n = canon.seq->vertex_count();
    dmflow::Tensor pred({t_count, n, 3});
    for (int64_t t = 0; t < t_count; ++t) {
        dmflow::StaticMesh m = dmflow::load_obj(frames[static_cast<size_t>(t)]);
        dmflow::require(m.real_vertex_count == gt.sequence.real_vertex_count, "shape_mismatch",
                        "eval: vertex count mismatch at " + frames[static_cast<size_t>(t)]);
        for (int64_t v = 0; v < m.real_vertex_count; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                const double world = m.vertices(v, k);
                pred.at3(t, v, k) =
                    (world - canon.norm.c_cond[static_cast<size_t>(k)]) / canon.norm.scale;
            }
        }
    }
    dmflow::require(t_count == canon.seq->frame_count(), "shape_mismatch",
                    "eval: frame count mismatch (pred " + std::to_string(t_count) + ", gt " +
                        std::to_string(canon.seq->frame_count()) + ")");

    json report;
    report["eucd"] = dmflow::eucd(pred, canon.seq->frames, gt.sequence.real_vertex_count);
    report["smoothness"] = canon.seq->frame_count() >= 3
                               ? dmflow::smoothness(pred, gt.sequence.real_vertex_count)
                               : 1.0;
    dmflow::Camera cam;
    if (gt.silhouette) {
        cam.width = gt.silhouette->width;
        cam.height = gt.silhouette->height;
        auto rendered = dmflow::render_silhouette_video(pred, gt.sequence.faces,
                                                        gt.sequence.real_face_count, cam);
        report["psnr"] = dmflow::silhouette_psnr(rendered, *gt.silhouette);
        report["iou"] = dmflow::silhouette_iou(rendered, *gt.silhouette);
    }
    report["clip"] = gt_clip;
    report["smoothness_note"] = "second-difference proxy";
    const std::string out = args.out.empty() ? pred_dir : args.out;
    std::filesystem::create_directories(out);
    std::ofstream os((std::filesystem::path(out) / "eval.json").string(), std::ios::trunc);
    os << report.dump(2) << "\n";
    std::cout << report.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic mesh generation pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_vae_args, train_rf_args, render_args, animate_args, eval_args;

    auto* gen = app.add_subcommand("gen-data", "generate a procedural clip dataset");
    add_common(gen, gen_args);

    std::string tv_dataset, tv_resume;
    auto* tvae = app.add_subcommand("train-vae", "train the mesh compressor");
    add_common(tvae, train_vae_args);
    tvae->add_option("--dataset", tv_dataset, "dataset directory override");
    tvae->add_option("--resume", tv_resume, "checkpoint to resume from");

    std::string tr_dataset, tr_resume, tr_vae_ckpt;
    auto* trf = app.add_subcommand("train-rf", "train the latent generator");
    add_common(trf, train_rf_args);
    trf->add_option("--dataset", tr_dataset, "dataset directory override");
    trf->add_option("--resume", tr_resume, "checkpoint to resume from");
    trf->add_option("--vae-ckpt", tr_vae_ckpt, "frozen compressor checkpoint");

    std::string render_clip;
    int64_t render_res = 256;
    auto* render = app.add_subcommand("render", "render clip silhouettes to PGM frames");
    add_common(render, render_args);
    render->add_option("--clip", render_clip, ".dmc clip");
    render->add_option("--resolution", render_res, "square frame size");

    std::string an_mesh, an_video, an_vae, an_rf;
    dmflow::AnimateOptions an_opts;
    auto* an = app.add_subcommand("animate", "drive a mesh with a silhouette video");
    add_common(an, animate_args);
    an->add_option("--mesh", an_mesh, "OBJ mesh");
    an->add_option("--video-dir", an_video, "directory of PGM frames");
    an->add_option("--vae-ckpt", an_vae, "compressor checkpoint");
    an->add_option("--rf-ckpt", an_rf, "generator checkpoint");
    an->add_option("--steps", an_opts.steps, "sampler steps");
    an->add_option("--cfg-scale", an_opts.cfg_scale, "guidance scale");
    an->add_option("--gt", an_opts.gt_clip, "optional ground-truth .dmc for EucD");
    an->add_flag("--pose-only", an_opts.pose_only, "export only the rectified first frame");

    std::string ev_pred, ev_gt;
    auto* ev = app.add_subcommand("eval", "score an OBJ sequence against a clip");
    add_common(ev, eval_args);
    ev->add_option("--pred", ev_pred, "directory of frame_*.obj");
    ev->add_option("--gt", ev_gt, "ground-truth .dmc clip");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_data(gen_args);
        if (tvae->parsed()) return run_train(train_vae_args, "vae", "", tv_dataset, tv_resume);
        if (trf->parsed()) return run_train(train_rf_args, "rf", tr_vae_ckpt, tr_dataset, tr_resume);
        if (render->parsed()) return run_render(render_args, render_clip, render_res);
        if (an->parsed()) return run_animate(animate_args, an_mesh, an_video, an_vae, an_rf, an_opts);
        if (ev->parsed()) return run_eval(eval_args, ev_pred, ev_gt);
    } catch (const Error& e) {
        std::cerr << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
