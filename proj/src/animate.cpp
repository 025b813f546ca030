#include "dmflow/animate.hpp"

#include <filesystem>
#include <fstream>

#include "dmflow/config_io.hpp"
#include "dmflow/error.hpp"
#include "dmflow/metrics.hpp"
#include "dmflow/obj_io.hpp"

namespace dmflow {

AnimateReport animate(const std::string& mesh_path, const std::string& video_dir,
                      const std::string& vae_ckpt, const std::string& rf_ckpt,
                      const std::string& out_dir, const AnimateOptions& opts) {
    StaticMesh mesh = load_obj(mesh_path);
    require(passes_size_filter(mesh), "filter_rejected",
            "animate: mesh fails the size filter (vertices=" +
                std::to_string(mesh.real_vertex_count) +
                ", faces=" + std::to_string(mesh.real_face_count) + ")");

    SilhouetteVideo video = read_pgm_video(video_dir);

    VaeBundle vae = VaeBundle::from_checkpoint(vae_ckpt);
    RfBundle rf = RfBundle::from_checkpoint(rf_ckpt);

    require(vae_config_to_json(rf.vae) == vae_config_to_json(vae.cfg), "ckpt_mismatch",
            "animate: the generator was trained against a different compressor config");
    require(rf.rf.z_channels == vae.cfg.z_channels() && rf.rf.cond_channels == vae.cfg.d_cond,
            "ckpt_mismatch", "animate: latent channel mismatch between checkpoints");
    require(vae.cfg.frame_count == video.frames, "ckpt_mismatch",
            "animate: video has " + std::to_string(video.frames) + " frames, model expects " +
                std::to_string(vae.cfg.frame_count));
    const int64_t video_tokens =
        rf.tokenizer->token_count(video.frames, video.height, video.width);
    require(video_tokens == rf.rf.video_tokens, "ckpt_mismatch",
            "animate: video tokenizes to " + std::to_string(video_tokens) +
                " tokens, generator expects " + std::to_string(rf.rf.video_tokens));

    Canonicalized canon = canonicalize(mesh, nullptr, vae.cfg.dual_norm);
    AdjacencyMask adj = build_adjacency(mesh.faces, mesh.vertex_count());

    Tensor x_cond, fine;
    {
        Graph g;
        auto enc = vae.model->encode_condition(g, canon.cond.vertices, mesh.real_vertex_count, adj);
        x_cond = g.val(enc.x_cond);
        fine = g.val(enc.fine);
    }

    VideoFeatureTokens f_vid = rf.tokenizer->features(video);
    Rng rng(opts.seed);
    Tensor z = rf.model->sample(x_cond, f_vid.tokens, opts.steps, opts.cfg_scale, rng);

    Tensor jump_rec, traj_rec;
    {
        Graph g;
        NodeId zj = -1, zt = -1;
        if (vae.cfg.jump_decomp) {
            Tensor z_jump({z.rows(), vae.cfg.d_jump}), z_traj({z.rows(), vae.cfg.d_traj});
            for (int64_t r = 0; r < z.rows(); ++r) {
                for (int64_t c = 0; c < vae.cfg.d_jump; ++c) z_jump(r, c) = z(r, c);
                for (int64_t c = 0; c < vae.cfg.d_traj; ++c) z_traj(r, c) = z(r, vae.cfg.d_jump + c);
            }
            zj = g.constant(std::move(z_jump));
            zt = g.constant(std::move(z_traj));
        } else {
            zt = g.constant(z);
        }
        auto dec = vae.model->decode(g, g.constant(x_cond), zj, zt, g.constant(fine),
                                     mesh.real_vertex_count);
        if (dec.jump_rec >= 0) jump_rec = g.val(dec.jump_rec);
        traj_rec = g.val(dec.traj_rec);
    }

    Tensor frames_norm;
    if (opts.pose_only) {
        // rectified pose: condition plus jump offset, a single frame
        const int64_t n = canon.cond.vertices.rows();
        frames_norm = Tensor({1, n, 3});
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                double x = canon.cond.vertices(v, k);
                x += vae.cfg.jump_decomp ? jump_rec(v, k) : traj_rec(v, k);
                frames_norm.at3(0, v, k) = x;
            }
        }
    } else {
        frames_norm = assemble_frames(canon.cond.vertices,
                                      vae.cfg.jump_decomp ? &jump_rec : nullptr, traj_rec);
    }
    require(frames_norm.all_finite(), "nonfinite", "animate: output contains non-finite values");

    Tensor world = denormalize(frames_norm, canon.norm);
    export_obj_sequence(world, mesh.faces, mesh.real_vertex_count, mesh.real_face_count, out_dir);

    AnimateReport report;
    report.frames = frames_norm.dim(0);
    report.video_provider = f_vid.provider;

    Camera cam;
    cam.width = video.width;
    cam.height = video.height;
    SilhouetteVideo rendered = render_silhouette_video(frames_norm, mesh.faces,
                                                       mesh.real_face_count, cam);
    SilhouetteVideo reference = video;
    if (opts.pose_only) {
        reference.frames = 1;
        reference.data.resize(static_cast<size_t>(video.height * video.width));
    }
    report.psnr = silhouette_psnr(rendered, reference);
    report.iou = silhouette_iou(rendered, reference);
    if (report.frames >= 3) {
        report.smoothness = smoothness(frames_norm, mesh.real_vertex_count);
    }

    if (!opts.gt_clip.empty()) {
        ClipRecord gt = read_clip(opts.gt_clip);
        Canonicalized gt_canon =
            canonicalize(gt.condition_mesh(), &gt.sequence, vae.cfg.dual_norm);
        // the clip may be padded; compare over real vertices only
        require(gt.sequence.real_vertex_count == mesh.real_vertex_count, "shape_mismatch",
                "animate: ground-truth clip real vertex count differs from the mesh");
        const int64_t real_n = mesh.real_vertex_count;
        const int64_t frames = frames_norm.dim(0);
        require(opts.pose_only || gt_canon.seq->frame_count() == frames, "shape_mismatch",
                "animate: ground-truth clip frame count differs");
        Tensor gt_real({frames, real_n, 3});
        Tensor pred_real({frames, real_n, 3});
        for (int64_t t = 0; t < frames; ++t) {
            for (int64_t v = 0; v < real_n; ++v) {
                for (int64_t k = 0; k < 3; ++k) {
                    gt_real.at3(t, v, k) = gt_canon.seq->frames.at3(t, v, k);
                    pred_real.at3(t, v, k) = frames_norm.at3(t, v, k);
                }
            }
        }
        report.eucd = eucd(pred_real, gt_real, real_n);
    }

    nlohmann::json combined{{"vae", vae_config_to_json(vae.cfg)}, {"rf", rf_config_to_json(rf.rf)}};
    report.config_digest = config_digest(combined);

    nlohmann::json rj{{"frames", report.frames},
                      {"psnr", report.psnr},
                      {"iou", report.iou},
                      {"video_provider", report.video_provider},
                      {"config_digest", report.config_digest},
                      {"smoothness_proxy_note",
                       "smoothness is a second-difference proxy, not a perceptual metric"}};
    if (report.smoothness) rj["smoothness"] = *report.smoothness;
    if (report.eucd) rj["eucd"] = *report.eucd;
    std::ofstream os((std::filesystem::path(out_dir) / "report.json").string(),
                     std::ios::trunc);
    require(os.good(), "io", "animate: cannot write report.json");
    os << rj.dump(2) << "\n";
    return report;
}

} // namespace dmflow
