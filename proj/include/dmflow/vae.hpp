#pragma once

#include <optional>
#include <vector>

#include "dmflow/graph.hpp"
#include "dmflow/mesh.hpp"
#include "dmflow/nn.hpp"

namespace dmflow {

struct VaeConfig {
    int64_t layers_enc = 8;
    int64_t layers_dec = 8;
    int64_t feature_dim = 256;
    int64_t heads = 4;
    int64_t fps_ratio = 8;
    int64_t d_cond = 64;
    int64_t d_jump = 16;
    int64_t d_traj = 64;
    int64_t frame_count = 64;
    int64_t pe_bands = 6;
    double eta_jump = 1e-6;
    double eta_traj = 1e-6;
    // ablation toggles
    bool dual_norm = true;    // consumed by canonicalize()
    bool jump_decomp = true;  // off: absolute trajectories, no jump stream
    bool tri_attn = true;     // off: per-stream attention maps
    bool decoup_loss = true;  // off: one MSE over the concatenated target

    int64_t z_channels() const { return jump_decomp ? d_jump + d_traj : d_traj; }
    void validate() const;
};

// Sin/cos features at pe_bands frequency bands per input channel, frequencies
// pi * 2^b; output width is 2 * bands * c. The learned projection applied on
// top of this lives in the model.
Tensor fourier_features(const Tensor& coords, int64_t bands);

// Captured attention maps: layers[layer][stream][head] as applied to that
// stream. Streams are ordered geometry, jump (when present), trajectory.
struct AttnTrace {
    std::vector<std::vector<std::vector<Tensor>>> layers;
};

struct EncodeOptions {
    int64_t fps_start = 0;
    const std::vector<int64_t>* fps_indices = nullptr;  // test override
    AttnTrace* trace = nullptr;
};

// Encoder/decoder over the (geometry, jump, trajectory) token streams.
// Every attention layer computes its map from geometry features only and
// applies it to all streams, so the geometry path is self-contained and the
// condition can be encoded without motion data at inference.
class TriflowVae {
public:
    TriflowVae(const VaeConfig& cfg, ParamStore& store, Rng& rng);

    const VaeConfig& config() const { return cfg_; }
    int64_t token_count(int64_t real_n) const;  // ceil(real_n / fps_ratio)

    // Graph constants derived from a decomposition. traj holds relative
    // trajectories, or absolute frame offsets from the condition when
    // jump_decomp is off (jump left empty in that case).
    struct EncoderInputs {
        Tensor cond;  // N x 3
        Tensor jump;  // N x 3
        Tensor traj;  // N x (T*3)
        int64_t real_n = 0;
    };
    EncoderInputs prepare_inputs(const Decomposition& d) const;

    struct CondEncoding {
        NodeId fine = -1;        // N x feature_dim, pre-sampling geometry features
        NodeId tokens_geo = -1;  // n x feature_dim geometry stream after the stack
        NodeId x_cond = -1;      // n x d_cond
        std::vector<int64_t> fps_indices;
    };

    struct Posterior {
        NodeId mu = -1;
        NodeId log_sigma = -1;
        bool present() const { return mu >= 0; }
    };

    struct EncodeOut {
        CondEncoding cond;
        Posterior jump;  // absent when jump_decomp is off
        Posterior traj;
        NodeId z_jump = -1;  // sampled (or mu when no noise given)
        NodeId z_traj = -1;
    };

    // Condition-only path used at inference.
    CondEncoding encode_condition(Graph& g, const Tensor& cond, int64_t real_n,
                                  const AdjacencyMask& adj, const EncodeOptions& opts = {}) const;

    // Full path. noise_* of matching shape trigger reparameterized samples;
    // nullptr selects the posterior mean.
    EncodeOut encode(Graph& g, const EncoderInputs& in, const AdjacencyMask& adj,
                     const Tensor* noise_jump, const Tensor* noise_traj,
                     const EncodeOptions& opts = {}) const;

    struct DecodeOut {
        NodeId jump_rec = -1;  // N x 3 (absent when jump_decomp is off)
        NodeId traj_rec = -1;  // N x (T*3); padded rows exactly zero
    };
    DecodeOut decode(Graph& g, NodeId x_cond, NodeId z_jump, NodeId z_traj, NodeId fine,
                     int64_t real_n, AttnTrace* trace = nullptr) const;

    struct LossOut {
        NodeId total = -1;
        NodeId recon_jump = -1;  // holds the combined MSE when decoup_loss is off
        NodeId recon_traj = -1;
        NodeId kl_jump = -1;
        NodeId kl_traj = -1;
    };
    LossOut loss(Graph& g, const EncoderInputs& targets, const DecodeOut& dec,
                 const EncodeOut& enc) const;

    // Single encoder layer over explicit streams (geometry first), exposed so
    // the shared-map contract can be verified against reference computations.
    std::vector<NodeId> encoder_layer_forward(Graph& g, size_t index,
                                              const std::vector<NodeId>& queries,
                                              const std::vector<NodeId>& keys,
                                              const AttnMask* key_mask = nullptr,
                                              AttnTrace* trace = nullptr) const;

    static constexpr double kLogSigmaMin = -10.0;
    static constexpr double kLogSigmaMax = 5.0;

private:
    // role slots: 0 geometry, 1 jump, 2 trajectory
    struct StreamAttention {
        Linear q[3];
        Linear k[3];
        Linear v[3];
    };

    std::vector<int> active_roles() const;
    std::vector<NodeId> streams_forward(Graph& g, const StreamAttention& layer,
                                        const std::vector<NodeId>& queries,
                                        const std::vector<NodeId>& keys,
                                        const std::vector<int>& roles, const AttnMask* key_mask,
                                        bool residual, AttnTrace* trace) const;
    NodeId positional_encode(Graph& g, const Tensor& coords, const Linear& proj) const;

    VaeConfig cfg_;
    // encoder
    Linear pe_vertex_;
    Linear pe_traj_;
    Linear msa_q_, msa_k_, msa_v_;
    std::vector<StreamAttention> enc_layers_;
    Linear head_cond_;
    Linear head_jump_mu_, head_jump_ls_;
    Linear head_traj_mu_, head_traj_ls_;
    // decoder
    Linear dec_proj_cond_, dec_proj_jump_, dec_proj_traj_;
    std::vector<StreamAttention> dec_layers_;
    StreamAttention cross_;
    Linear head_rec_jump_, head_rec_traj_;
};

} // namespace dmflow
