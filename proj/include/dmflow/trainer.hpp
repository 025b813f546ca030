#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dmflow/checkpoint.hpp"
#include "dmflow/dataset.hpp"
#include "dmflow/rf.hpp"
#include "dmflow/tokenizer.hpp"
#include "dmflow/vae.hpp"

namespace dmflow {

// lr1 + 0.5 * (lr0 - lr1) * (1 + cos(pi * step / total))
double cosine_lr(int64_t step, int64_t total, double lr0 = 2e-4, double lr1 = 2e-5);

class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : b1_(beta1), b2_(beta2), eps_(eps) {}

    void init(const ParamStore& store);
    void step(ParamStore& store, double lr);
    int64_t step_count() const { return t_; }

    void save_state(Checkpoint& ckpt, const ParamStore& store) const;
    void load_state(const Checkpoint& ckpt, const ParamStore& store);

private:
    double b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Model plus its parameter store; movable, pointers into the store stay valid.
struct VaeBundle {
    VaeConfig cfg;
    ParamStore store;
    std::unique_ptr<TriflowVae> model;

    static VaeBundle create(const VaeConfig& cfg, uint64_t seed);
    static VaeBundle from_checkpoint(const std::string& path);
    std::string config_json() const;
};

struct RfBundle {
    RfConfig rf;
    TokenizerConfig tokenizer_cfg;
    VaeConfig vae;  // snapshot of the VAE this generator was trained against
    ParamStore store;
    std::unique_ptr<PatchTokenizer> tokenizer;
    std::unique_ptr<RfModel> model;

    static RfBundle create(const RfConfig& rf, const TokenizerConfig& tok, const VaeConfig& vae,
                           uint64_t seed);
    static RfBundle from_checkpoint(const std::string& path);
    std::string config_json() const;
};

struct TrainConfig {
    std::string stage = "vae";  // "vae" | "rf"
    int64_t iterations = 1000;
    int64_t batch_size = 8;
    uint64_t seed = 0;
    int64_t checkpoint_interval = 0;  // 0: final checkpoint only
    std::string dataset_dir;
    std::string out_dir;
    std::string resume_from;  // optional checkpoint to continue from
    int threads = 1;
    double lr0 = 2e-4;       // cosine schedule endpoints (vae stage)
    double lr1 = 2e-5;
    double lr_const = 1e-4;  // rf stage
    double grad_clip = 1.0;
    VaeConfig vae;
    RfConfig rf;  // z/cond/video token sizes are derived, not read from here
    TokenizerConfig tokenizer;
};

struct TrainStats {
    int64_t steps = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
    int64_t drop_count = 0;          // rf: dropped-condition samples
    int64_t sample_count = 0;        // rf: total samples
    double frozen_grad_norm = 0.0;   // rf: gradient norm of the frozen vae (stays 0)
    std::string final_checkpoint;
};

// Per-clip cached training item (canonicalization and decomposition are
// deterministic, so they are computed once).
struct VaeTrainItem {
    TriflowVae::EncoderInputs inputs;
    AdjacencyMask adj;
    Tensor gt_frames;  // recomposed normalized frames, T x N x 3
    int64_t real_n = 0;
};

VaeTrainItem make_vae_item(const TriflowVae& model, const ClipRecord& record);
std::vector<std::string> list_dataset(const std::string& dir);  // sorted *.dmc paths

// frames[t] = v_cond + jump_rec + traj_rec[:, 3t:3t+3]; jump_rec may be null.
Tensor assemble_frames(const Tensor& v_cond, const Tensor* jump_rec, const Tensor& traj_rec);

// Teacher-forced reconstruction through posterior means; returns normalized
// T x N x 3 frames.
Tensor reconstruct_frames(const TriflowVae& model, const VaeTrainItem& item);

TrainStats train_vae(const TrainConfig& cfg);
TrainStats train_rf(const TrainConfig& cfg, const std::string& vae_ckpt_path);

} // namespace dmflow
