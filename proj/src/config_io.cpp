#include "dmflow/config_io.hpp"

#include <fstream>

#include "dmflow/error.hpp"
#include "dmflow/trainer.hpp"

namespace dmflow {

using nlohmann::json;

json vae_config_to_json(const VaeConfig& c) {
    return json{{"layers_enc", c.layers_enc},
                {"layers_dec", c.layers_dec},
                {"feature_dim", c.feature_dim},
                {"heads", c.heads},
                {"fps_ratio", c.fps_ratio},
                {"d_cond", c.d_cond},
                {"d_jump", c.d_jump},
                {"d_traj", c.d_traj},
                {"frame_count", c.frame_count},
                {"pe_bands", c.pe_bands},
                {"eta_jump", c.eta_jump},
                {"eta_traj", c.eta_traj},
                {"dual_norm", c.dual_norm},
                {"jump_decomp", c.jump_decomp},
                {"tri_attn", c.tri_attn},
                {"decoup_loss", c.decoup_loss}};
}

VaeConfig vae_config_from_json(const json& j) {
    VaeConfig c;
    c.layers_enc = j.value("layers_enc", c.layers_enc);
    c.layers_dec = j.value("layers_dec", c.layers_dec);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.heads = j.value("heads", c.heads);
    c.fps_ratio = j.value("fps_ratio", c.fps_ratio);
    c.d_cond = j.value("d_cond", c.d_cond);
    c.d_jump = j.value("d_jump", c.d_jump);
    c.d_traj = j.value("d_traj", c.d_traj);
    c.frame_count = j.value("frame_count", c.frame_count);
    c.pe_bands = j.value("pe_bands", c.pe_bands);
    c.eta_jump = j.value("eta_jump", c.eta_jump);
    c.eta_traj = j.value("eta_traj", c.eta_traj);
    c.dual_norm = j.value("dual_norm", c.dual_norm);
    c.jump_decomp = j.value("jump_decomp", c.jump_decomp);
    c.tri_attn = j.value("tri_attn", c.tri_attn);
    c.decoup_loss = j.value("decoup_loss", c.decoup_loss);
    return c;
}

json rf_config_to_json(const RfConfig& c) {
    return json{{"blocks", c.blocks},
                {"model_dim", c.model_dim},
                {"heads", c.heads},
                {"cond_drop_p", c.cond_drop_p},
                {"sample_steps", c.sample_steps},
                {"cfg_scale", c.cfg_scale},
                {"z_channels", c.z_channels},
                {"cond_channels", c.cond_channels},
                {"d_vid", c.d_vid},
                {"video_tokens", c.video_tokens},
                {"ffn_mult", c.ffn_mult}};
}

RfConfig rf_config_from_json(const json& j) {
    RfConfig c;
    c.blocks = j.value("blocks", c.blocks);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.heads = j.value("heads", c.heads);
    c.cond_drop_p = j.value("cond_drop_p", c.cond_drop_p);
    c.sample_steps = j.value("sample_steps", c.sample_steps);
    c.cfg_scale = j.value("cfg_scale", c.cfg_scale);
    c.z_channels = j.value("z_channels", c.z_channels);
    c.cond_channels = j.value("cond_channels", c.cond_channels);
    c.d_vid = j.value("d_vid", c.d_vid);
    c.video_tokens = j.value("video_tokens", c.video_tokens);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    return c;
}

json tokenizer_config_to_json(const TokenizerConfig& c) {
    return json{{"patch_t", c.patch_t}, {"patch_s", c.patch_s}, {"d_vid", c.d_vid}};
}

TokenizerConfig tokenizer_config_from_json(const json& j) {
    TokenizerConfig c;
    c.patch_t = j.value("patch_t", c.patch_t);
    c.patch_s = j.value("patch_s", c.patch_s);
    c.d_vid = j.value("d_vid", c.d_vid);
    return c;
}

json curation_config_to_json(const CurationConfig& c) {
    return json{{"count", c.count},
                {"clip_frames", c.clip_frames},
                {"sequence_frames", c.sequence_frames},
                {"seed", c.seed},
                {"pad_vertices", c.pad_vertices},
                {"pad_faces", c.pad_faces},
                {"static_threshold", c.static_threshold},
                {"min_amplitude", c.min_amplitude},
                {"max_amplitude", c.max_amplitude},
                {"min_resolution", c.min_resolution},
                {"max_resolution", c.max_resolution},
                {"render_silhouettes", c.render_silhouettes},
                {"silhouette_resolution", c.silhouette_resolution}};
}

CurationConfig curation_config_from_json(const json& j) {
    CurationConfig c;
    c.count = j.value("count", c.count);
    c.clip_frames = j.value("clip_frames", c.clip_frames);
    c.sequence_frames = j.value("sequence_frames", c.sequence_frames);
    c.seed = j.value("seed", c.seed);
    c.pad_vertices = j.value("pad_vertices", c.pad_vertices);
    c.pad_faces = j.value("pad_faces", c.pad_faces);
    c.static_threshold = j.value("static_threshold", c.static_threshold);
    c.min_amplitude = j.value("min_amplitude", c.min_amplitude);
    c.max_amplitude = j.value("max_amplitude", c.max_amplitude);
    c.min_resolution = j.value("min_resolution", c.min_resolution);
    c.max_resolution = j.value("max_resolution", c.max_resolution);
    c.render_silhouettes = j.value("render_silhouettes", c.render_silhouettes);
    c.silhouette_resolution = j.value("silhouette_resolution", c.silhouette_resolution);
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"stage", c.stage},
                {"iterations", c.iterations},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"checkpoint_interval", c.checkpoint_interval},
                {"dataset_dir", c.dataset_dir},
                {"out_dir", c.out_dir},
                {"resume_from", c.resume_from},
                {"threads", c.threads},
                {"lr0", c.lr0},
                {"lr1", c.lr1},
                {"lr_const", c.lr_const},
                {"grad_clip", c.grad_clip},
                {"vae", vae_config_to_json(c.vae)},
                {"rf", rf_config_to_json(c.rf)},
                {"tokenizer", tokenizer_config_to_json(c.tokenizer)}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.stage = j.value("stage", c.stage);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.resume_from = j.value("resume_from", c.resume_from);
    c.threads = j.value("threads", c.threads);
    c.lr0 = j.value("lr0", c.lr0);
    c.lr1 = j.value("lr1", c.lr1);
    c.lr_const = j.value("lr_const", c.lr_const);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    if (j.contains("vae")) c.vae = vae_config_from_json(j.at("vae"));
    if (j.contains("rf")) c.rf = rf_config_from_json(j.at("rf"));
    if (j.contains("tokenizer")) c.tokenizer = tokenizer_config_from_json(j.at("tokenizer"));
    return c;
}

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "io", "cannot open config file " + path);
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        fail("io", "malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

std::string config_digest(const json& j) {
    const std::string s = j.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace dmflow
