#pragma once

#include <optional>
#include <string>

#include "dmflow/trainer.hpp"

namespace dmflow {

struct AnimateOptions {
    int64_t steps = 32;
    double cfg_scale = 2.0;
    uint64_t seed = 0;
    bool pose_only = false;  // export only the rectified first frame
    std::string gt_clip;     // optional .dmc for EucD against ground truth
};

struct AnimateReport {
    int64_t frames = 0;
    double psnr = 0.0;
    double iou = 0.0;
    std::optional<double> smoothness;
    std::optional<double> eucd;  // normalized units, against gt_clip
    std::string video_provider;
    std::string config_digest;
};

// Full generation pipeline: load + canonicalize the mesh, encode the
// condition, tokenize the silhouette video, sample dynamic latents, decode,
// recompose, de-normalize into the condition-centered frame and write one OBJ
// per frame plus report.json under out_dir. Deterministic given the seed.
AnimateReport animate(const std::string& mesh_path, const std::string& video_dir,
                      const std::string& vae_ckpt, const std::string& rf_ckpt,
                      const std::string& out_dir, const AnimateOptions& opts);

} // namespace dmflow
