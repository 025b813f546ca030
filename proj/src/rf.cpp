#include "dmflow/rf.hpp"

#include <cmath>

#include "dmflow/error.hpp"

namespace dmflow {

void RfConfig::validate() const {
    require(blocks >= 1, "invalid_arg", "rf: blocks must be >= 1");
    require(model_dim >= 2 && heads >= 1 && model_dim % heads == 0, "invalid_arg",
            "rf: heads must divide model_dim");
    require(cond_drop_p >= 0.0 && cond_drop_p <= 1.0, "invalid_arg", "rf: drop p outside [0,1]");
    require(sample_steps >= 1, "invalid_arg", "rf: sample_steps must be >= 1");
    require(z_channels >= 1 && cond_channels >= 1 && d_vid >= 1 && video_tokens >= 1, "invalid_arg",
            "rf: channel counts must be >= 1");
    require(ffn_mult >= 1, "invalid_arg", "rf: ffn_mult must be >= 1");
}

Tensor interpolate_state(const Tensor& z_dyn, const Tensor& eps, double t) {
    require(z_dyn.same_shape(eps), "shape_mismatch", "interpolate_state: shape mismatch");
    require(t >= 0.0 && t <= 1.0, "invalid_arg", "interpolate_state: t outside [0,1]");
    if (t == 0.0) return eps;
    if (t == 1.0) return z_dyn;
    Tensor out = z_dyn;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = t * z_dyn[i] + (1.0 - t) * eps[i];
    }
    return out;
}

Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double s) {
    require(v_cond.same_shape(v_uncond), "shape_mismatch", "cfg_velocity: shape mismatch");
    if (s == 1.0) return v_cond;
    if (s == 0.0) return v_uncond;
    Tensor out = v_uncond;
    for (int64_t i = 0; i < out.size(); ++i) {
        out[i] = v_uncond[i] + s * (v_cond[i] - v_uncond[i]);
    }
    return out;
}

namespace {
constexpr double kLnEps = 1e-5;
} // namespace

RfModel::RfModel(const RfConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int64_t d = cfg_.model_dim;
    in_proj_ = Linear(store, "rf.in_proj", cfg_.z_channels + cfg_.cond_channels, d, rng);
    time_mlp1_ = Linear(store, "rf.time.mlp1", d, d, rng);
    time_mlp2_ = Linear(store, "rf.time.mlp2", d, d, rng);
    for (int64_t b = 0; b < cfg_.blocks; ++b) {
        const std::string p = "rf.block" + std::to_string(b);
        Block blk;
        blk.adaln = Linear(store, p + ".adaln", d, 9 * d, rng);
        // zero the gate outputs (chunks 2, 5, 8) so every block starts as the
        // identity
        for (int chunk : {2, 5, 8}) {
            for (int64_t i = 0; i < d; ++i) {
                for (int64_t j = 0; j < d; ++j) {
                    blk.adaln.w->value(i, chunk * d + j) = 0.0;
                }
            }
            for (int64_t j = 0; j < d; ++j) {
                blk.adaln.b->value[chunk * d + j] = 0.0;
            }
        }
        blk.cross_q = Linear(store, p + ".cross.q", d, d, rng);
        blk.cross_k = Linear(store, p + ".cross.k", cfg_.d_vid, d, rng, -1.0, false);
        blk.cross_v = Linear(store, p + ".cross.v", cfg_.d_vid, d, rng);
        blk.cross_o = Linear(store, p + ".cross.o", d, d, rng);
        blk.self_q = Linear(store, p + ".self.q", d, d, rng);
        blk.self_k = Linear(store, p + ".self.k", d, d, rng, -1.0, false);
        blk.self_v = Linear(store, p + ".self.v", d, d, rng);
        blk.self_o = Linear(store, p + ".self.o", d, d, rng);
        blk.ffn1 = Linear(store, p + ".ffn.1", d, cfg_.ffn_mult * d, rng);
        blk.ffn2 = Linear(store, p + ".ffn.2", cfg_.ffn_mult * d, d, rng);
        blocks_.push_back(std::move(blk));
    }
    head_ = Linear(store, "rf.head", d, cfg_.z_channels, rng);
    null_video_ = &store.add("rf.null_video",
                             normal_init({cfg_.video_tokens, cfg_.d_vid}, 0.02, rng));
}

Tensor RfModel::time_embedding(double t) const {
    const int64_t d = cfg_.model_dim;
    const int64_t half = d / 2;
    Tensor out({1, d});
    for (int64_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out(0, i) = std::sin(1000.0 * t * freq);
        out(0, half + i) = std::cos(1000.0 * t * freq);
    }
    if (d % 2 == 1) out(0, d - 1) = 0.0;
    return out;
}

NodeId RfModel::modulate(Graph& g, NodeId x, NodeId alpha, NodeId beta) const {
    return g.add_rowvec(g.mul_rowvec(x, g.add_scalar(alpha, 1.0)), beta);
}

NodeId RfModel::run_block(Graph& g, const Block& b, NodeId x, NodeId f_vid, NodeId t_feat) const {
    const int heads = static_cast<int>(cfg_.heads);
    const int64_t d = cfg_.model_dim;
    NodeId mods = b.adaln(g, g.silu(t_feat));  // 1 x 9d
    auto chunk = [&](int i) { return g.slice_cols(mods, i * d, (i + 1) * d); };

    // cross-attention over video tokens
    {
        NodeId h = modulate(g, g.layer_norm_rows(x, kLnEps), chunk(0), chunk(1));
        auto maps = attention_maps(g, b.cross_q(g, h), b.cross_k(g, f_vid), heads);
        NodeId attn = b.cross_o(g, apply_attention_maps(g, maps, b.cross_v(g, f_vid), heads));
        x = g.add(x, g.mul_rowvec(attn, chunk(2)));
    }
    // full self-attention over mesh tokens
    {
        NodeId h = modulate(g, g.layer_norm_rows(x, kLnEps), chunk(3), chunk(4));
        auto maps = attention_maps(g, b.self_q(g, h), b.self_k(g, h), heads);
        NodeId attn = b.self_o(g, apply_attention_maps(g, maps, b.self_v(g, h), heads));
        x = g.add(x, g.mul_rowvec(attn, chunk(5)));
    }
    // feed-forward
    {
        NodeId h = modulate(g, g.layer_norm_rows(x, kLnEps), chunk(6), chunk(7));
        NodeId f = b.ffn2(g, g.silu(b.ffn1(g, h)));
        x = g.add(x, g.mul_rowvec(f, chunk(8)));
    }
    return x;
}

NodeId RfModel::velocity(Graph& g, NodeId z_t, NodeId x_cond, double t, NodeId f_vid,
                         bool drop_condition) const {
    require(g.val(z_t).rows() == g.val(x_cond).rows(), "shape_mismatch",
            "velocity: z_t / x_cond token counts differ");
    require(g.val(z_t).cols() == cfg_.z_channels, "shape_mismatch", "velocity: z_t channel mismatch");
    require(g.val(x_cond).cols() == cfg_.cond_channels, "shape_mismatch",
            "velocity: x_cond channel mismatch");

    NodeId cond_tokens = drop_condition ? g.param(*null_video_) : f_vid;
    require(cond_tokens >= 0, "invalid_arg", "velocity: missing video tokens");
    require(g.val(cond_tokens).cols() == cfg_.d_vid, "shape_mismatch",
            "velocity: video token width mismatch");

    NodeId tokens = in_proj_(g, g.concat_cols({z_t, x_cond}));
    NodeId t_feat = time_mlp2_(g, g.silu(time_mlp1_(g, g.constant(time_embedding(t)))));
    for (const Block& b : blocks_) {
        tokens = run_block(g, b, tokens, cond_tokens, t_feat);
    }
    return head_(g, tokens);
}

RfModel::FlowLoss RfModel::flow_loss(Graph& g, const Tensor& z_dyn, const Tensor& x_cond,
                                     NodeId f_vid, bool drop_condition, double t,
                                     const Tensor& eps) const {
    Tensor z_t = interpolate_state(z_dyn, eps, t);
    NodeId v = velocity(g, g.constant(std::move(z_t)), g.constant(x_cond), t, f_vid, drop_condition);

    Tensor target = z_dyn;  // z_dyn - eps
    target.axpy_(-1.0, eps);
    NodeId diff = g.sub(v, g.constant(std::move(target)));
    FlowLoss out;
    out.velocity = v;
    out.loss = g.mean_all(g.mul(diff, diff));
    return out;
}

double RfModel::flow_loss_value(const Tensor& velocity, const Tensor& z_dyn, const Tensor& eps) {
    require(velocity.same_shape(z_dyn) && z_dyn.same_shape(eps), "shape_mismatch",
            "flow_loss_value: shape mismatch");
    double sum = 0.0;
    for (int64_t i = 0; i < velocity.size(); ++i) {
        const double d = velocity[i] - (z_dyn[i] - eps[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(velocity.size());
}

Tensor RfModel::velocity_eval(const Tensor& z_t, const Tensor& x_cond, double t,
                              const Tensor* f_vid) const {
    Graph g;
    NodeId f = f_vid != nullptr ? g.constant(*f_vid) : -1;
    NodeId v = velocity(g, g.constant(z_t), g.constant(x_cond), t, f, f_vid == nullptr);
    return g.val(v);
}

Tensor euler_sample(Tensor z, const VelocityFn& v, int64_t steps) {
    require(steps >= 1, "invalid_arg", "euler_sample: steps must be >= 1");
    const double dt = 1.0 / static_cast<double>(steps);
    for (int64_t i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        z.axpy_(dt, v(z, t));
    }
    return z;
}

Tensor RfModel::sample(const Tensor& x_cond, const Tensor& f_vid, int64_t steps, double cfg_scale,
                       Rng& rng) const {
    Tensor z0({x_cond.rows(), cfg_.z_channels});
    for (int64_t i = 0; i < z0.size(); ++i) {
        z0[i] = rng.gauss();
    }
    auto field = [&](const Tensor& z, double t) {
        Tensor v_c = velocity_eval(z, x_cond, t, &f_vid);
        if (cfg_scale == 1.0) return v_c;
        return cfg_velocity(v_c, velocity_eval(z, x_cond, t, nullptr), cfg_scale);
    };
    return euler_sample(std::move(z0), field, steps);
}

} // namespace dmflow
