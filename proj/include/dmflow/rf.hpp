#pragma once

#include <optional>
#include <vector>

#include "dmflow/graph.hpp"
#include "dmflow/nn.hpp"
#include "dmflow/rng.hpp"

namespace dmflow {

struct RfConfig {
    int64_t blocks = 12;
    int64_t model_dim = 512;
    int64_t heads = 8;
    double cond_drop_p = 0.1;
    int64_t sample_steps = 32;
    double cfg_scale = 2.0;
    int64_t z_channels = 80;     // jump + trajectory latent channels from the VAE
    int64_t cond_channels = 64;  // x_cond channels
    int64_t d_vid = 128;         // video token width
    int64_t video_tokens = 1024; // L, fixed by the tokenizer and video dims
    int64_t ffn_mult = 4;

    void validate() const;
};

// Exact linear blend t*z_dyn + (1-t)*eps; endpoints are exact.
Tensor interpolate_state(const Tensor& z_dyn, const Tensor& eps, double t);

// v_uncond + s*(v_cond - v_uncond); s==1 and s==0 return the respective
// input bitwise.
Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double s);

// Fixed-step Euler integration z <- z + (1/steps) * v(z, t_i) over the
// uniform grid t_i = i/steps, noise to data.
using VelocityFn = std::function<Tensor(const Tensor& z, double t)>;
Tensor euler_sample(Tensor z, const VelocityFn& v, int64_t steps);

// Velocity estimator: token-wise [z_t; x_cond] projection, then stacked
// blocks of cross-attention (video tokens), self-attention and FFN, each
// gated by zero-initialized AdaLN parameters so the untrained network is the
// identity between input projection and output head.
class RfModel {
public:
    RfModel(const RfConfig& cfg, ParamStore& store, Rng& rng);

    const RfConfig& config() const { return cfg_; }

    // Sinusoidal embedding of t as a 1 x model_dim row (pure function).
    Tensor time_embedding(double t) const;

    // f_vid: video tokens node (L x d_vid); ignored when drop_condition, in
    // which case the learned null token set is attended instead.
    NodeId velocity(Graph& g, NodeId z_t, NodeId x_cond, double t, NodeId f_vid,
                    bool drop_condition) const;

    struct FlowLoss {
        NodeId loss = -1;
        NodeId velocity = -1;
    };
    // Flow-matching objective for one sample: ||v - (z_dyn - eps)||^2 averaged
    // over entries, with z_t built from (z_dyn, eps, t).
    FlowLoss flow_loss(Graph& g, const Tensor& z_dyn, const Tensor& x_cond, NodeId f_vid,
                       bool drop_condition, double t, const Tensor& eps) const;

    // Same objective evaluated on an externally supplied velocity (e.g. an
    // analytic oracle field).
    static double flow_loss_value(const Tensor& velocity, const Tensor& z_dyn, const Tensor& eps);

    // Euler integration from seeded noise over the uniform grid t_i = i/steps;
    // deterministic given the seed.
    Tensor sample(const Tensor& x_cond, const Tensor& f_vid, int64_t steps, double cfg_scale,
                  Rng& rng) const;

    Parameter& null_video() { return *null_video_; }

private:
    struct Block {
        Linear adaln;  // model_dim -> 9 * model_dim, gate outputs zeroed
        Linear cross_q, cross_k, cross_v, cross_o;
        Linear self_q, self_k, self_v, self_o;
        Linear ffn1, ffn2;
    };

    NodeId modulate(Graph& g, NodeId x, NodeId alpha, NodeId beta) const;
    NodeId run_block(Graph& g, const Block& b, NodeId x, NodeId f_vid, NodeId t_feat) const;
    Tensor velocity_eval(const Tensor& z_t, const Tensor& x_cond, double t, const Tensor* f_vid) const;

    RfConfig cfg_;
    Linear in_proj_;
    Linear time_mlp1_, time_mlp2_;
    std::vector<Block> blocks_;
    Linear head_;
    Parameter* null_video_ = nullptr;
};

} // namespace dmflow
