#include "dmflow/vae.hpp"

#include <cmath>

#include "dmflow/error.hpp"

namespace dmflow {

void VaeConfig::validate() const {
    require(layers_enc >= 1 && layers_dec >= 1, "invalid_arg", "vae: layer counts must be >= 1");
    require(feature_dim >= 2 && heads >= 1 && feature_dim % heads == 0, "invalid_arg",
            "vae: heads must divide feature_dim");
    require(fps_ratio >= 1, "invalid_arg", "vae: fps_ratio must be >= 1");
    require(d_cond >= 1 && d_jump >= 1 && d_traj >= 1, "invalid_arg", "vae: latent dims must be >= 1");
    require(frame_count >= 1, "invalid_arg", "vae: frame_count must be >= 1");
    require(pe_bands >= 1, "invalid_arg", "vae: pe_bands must be >= 1");
    require(eta_jump >= 0.0 && eta_traj >= 0.0, "invalid_arg", "vae: KL weights must be >= 0");
}

Tensor fourier_features(const Tensor& coords, int64_t bands) {
    const int64_t k = coords.rows(), c = coords.cols();
    Tensor out({k, 2 * bands * c});
    for (int64_t i = 0; i < k; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            const double x = coords(i, j);
            for (int64_t b = 0; b < bands; ++b) {
                const double w = M_PI * std::ldexp(1.0, static_cast<int>(b));  // pi * 2^b
                out(i, (j * bands + b) * 2 + 0) = std::sin(w * x);
                out(i, (j * bands + b) * 2 + 1) = std::cos(w * x);
            }
        }
    }
    return out;
}

TriflowVae::TriflowVae(const VaeConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int64_t d = cfg_.feature_dim;
    const int64_t pe_v = 2 * cfg_.pe_bands * 3;
    const int64_t pe_t = 2 * cfg_.pe_bands * cfg_.frame_count * 3;

    pe_vertex_ = Linear(store, "enc.pe_vertex", pe_v, d, rng);
    pe_traj_ = Linear(store, "enc.pe_traj", pe_t, d, rng);
    msa_q_ = Linear(store, "enc.msa.q", d, d, rng);
    msa_k_ = Linear(store, "enc.msa.k", d, d, rng, -1.0, false);
    msa_v_ = Linear(store, "enc.msa.v", d, d, rng);

    auto make_stream_attention = [&](const std::string& prefix) {
        StreamAttention layer;
        static const char* role_names[3] = {"geo", "jump", "traj"};
        for (int r = 0; r < 3; ++r) {
            if (r == 1 && !cfg_.jump_decomp) continue;
            const std::string base = prefix + "." + role_names[r];
            if (cfg_.tri_attn) {
                if (r == 0) {
                    layer.q[r] = Linear(store, base + ".q", d, d, rng);
                    layer.k[r] = Linear(store, base + ".k", d, d, rng, -1.0, false);
                }
            } else {
                layer.q[r] = Linear(store, base + ".q", d, d, rng);
                layer.k[r] = Linear(store, base + ".k", d, d, rng, -1.0, false);
            }
            layer.v[r] = Linear(store, base + ".v", d, d, rng);
        }
        return layer;
    };

    for (int64_t l = 0; l < cfg_.layers_enc; ++l) {
        enc_layers_.push_back(make_stream_attention("enc.tri" + std::to_string(l)));
    }
    head_cond_ = Linear(store, "enc.head.cond", d, cfg_.d_cond, rng);
    if (cfg_.jump_decomp) {
        head_jump_mu_ = Linear(store, "enc.head.jump_mu", d, cfg_.d_jump, rng);
        head_jump_ls_ = Linear(store, "enc.head.jump_ls", d, cfg_.d_jump, rng, 0.01);
    }
    head_traj_mu_ = Linear(store, "enc.head.traj_mu", d, cfg_.d_traj, rng);
    head_traj_ls_ = Linear(store, "enc.head.traj_ls", d, cfg_.d_traj, rng, 0.01);

    dec_proj_cond_ = Linear(store, "dec.proj.cond", cfg_.d_cond, d, rng);
    if (cfg_.jump_decomp) {
        dec_proj_jump_ = Linear(store, "dec.proj.jump", cfg_.d_jump, d, rng);
    }
    dec_proj_traj_ = Linear(store, "dec.proj.traj", cfg_.d_traj, d, rng);
    for (int64_t l = 0; l < cfg_.layers_dec; ++l) {
        dec_layers_.push_back(make_stream_attention("dec.tri" + std::to_string(l)));
    }
    cross_ = make_stream_attention("dec.cross");
    if (cfg_.jump_decomp) {
        head_rec_jump_ = Linear(store, "dec.head.jump", d, 3, rng);
    }
    head_rec_traj_ = Linear(store, "dec.head.traj", d, cfg_.frame_count * 3, rng);
}

int64_t TriflowVae::token_count(int64_t real_n) const {
    require(real_n >= 1, "invalid_arg", "token_count: real vertex count must be >= 1");
    return (real_n + cfg_.fps_ratio - 1) / cfg_.fps_ratio;
}

std::vector<int> TriflowVae::active_roles() const {
    return cfg_.jump_decomp ? std::vector<int>{0, 1, 2} : std::vector<int>{0, 2};
}

TriflowVae::EncoderInputs TriflowVae::prepare_inputs(const Decomposition& d) const {
    require(d.frame_count() == cfg_.frame_count, "shape_mismatch",
            "prepare_inputs: clip has " + std::to_string(d.frame_count()) + " frames, model expects " +
                std::to_string(cfg_.frame_count));
    EncoderInputs in;
    in.cond = d.v_cond;
    in.real_n = d.real_vertex_count;
    if (cfg_.jump_decomp) {
        in.jump = d.jump;
        in.traj = d.traj_matrix();
    } else {
        // absolute per-frame offsets from the condition folded into one stream
        const int64_t n = d.vertex_count(), t_count = d.frame_count();
        in.traj = Tensor({n, t_count * 3});
        for (int64_t t = 0; t < t_count; ++t) {
            for (int64_t v = 0; v < n; ++v) {
                for (int64_t k = 0; k < 3; ++k) {
                    in.traj(v, t * 3 + k) = d.jump(v, k) + d.rel_traj.at3(t, v, k);
                }
            }
        }
    }
    return in;
}

NodeId TriflowVae::positional_encode(Graph& g, const Tensor& coords, const Linear& proj) const {
    return proj(g, g.constant(fourier_features(coords, cfg_.pe_bands)));
}

std::vector<NodeId> TriflowVae::streams_forward(Graph& g, const StreamAttention& layer,
                                                const std::vector<NodeId>& queries,
                                                const std::vector<NodeId>& keys,
                                                const std::vector<int>& roles,
                                                const AttnMask* key_mask, bool residual,
                                                AttnTrace* trace) const {
    const int heads = static_cast<int>(cfg_.heads);
    std::vector<std::vector<NodeId>> maps(queries.size());
    if (cfg_.tri_attn) {
        // one geometry-derived map reused by every stream
        auto shared = attention_maps(g, layer.q[0](g, queries[0]), layer.k[0](g, keys[0]), heads,
                                     key_mask);
        for (auto& m : maps) m = shared;
    } else {
        for (size_t s = 0; s < queries.size(); ++s) {
            const int r = roles[s];
            maps[s] = attention_maps(g, layer.q[r](g, queries[s]), layer.k[r](g, keys[s]), heads,
                                     key_mask);
        }
    }
    if (trace != nullptr) {
        std::vector<std::vector<Tensor>> layer_trace(queries.size());
        for (size_t s = 0; s < queries.size(); ++s) {
            for (NodeId m : maps[s]) layer_trace[s].push_back(g.val(m));
        }
        trace->layers.push_back(std::move(layer_trace));
    }
    std::vector<NodeId> out(queries.size());
    for (size_t s = 0; s < queries.size(); ++s) {
        const int r = roles[s];
        NodeId agg = apply_attention_maps(g, maps[s], layer.v[r](g, keys[s]), heads);
        out[s] = residual ? g.add(queries[s], agg) : agg;
    }
    return out;
}

namespace {

// first real_n rows of an N x 3 coordinate matrix
Tensor real_rows(const Tensor& coords, int64_t real_n) {
    Tensor out({real_n, coords.cols()});
    for (int64_t i = 0; i < real_n; ++i) {
        for (int64_t j = 0; j < coords.cols(); ++j) out(i, j) = coords(i, j);
    }
    return out;
}

std::shared_ptr<std::vector<uint8_t>> copy_mask(const std::vector<uint8_t>& m) {
    return std::make_shared<std::vector<uint8_t>>(m);
}

} // namespace

TriflowVae::EncodeOut TriflowVae::encode(Graph& g, const EncoderInputs& in,
                                         const AdjacencyMask& adj, const Tensor* noise_jump,
                                         const Tensor* noise_traj, const EncodeOptions& opts) const {
    const int64_t n_total = in.cond.rows();
    const int64_t real_n = in.real_n;
    require(real_n >= 1 && real_n <= n_total, "invalid_arg", "encode: bad real vertex count");
    require(adj.n == n_total, "shape_mismatch", "encode: adjacency size mismatch");
    require(in.traj.cols() == cfg_.frame_count * 3, "shape_mismatch",
            "encode: trajectory width does not match the configured frame count");

    const std::vector<int> roles = active_roles();
    const bool with_jump = cfg_.jump_decomp;
    if (with_jump) {
        require(in.jump.rows() == n_total, "shape_mismatch", "encode: jump shape mismatch");
    }

    // positional encodings; geometry then passes through adjacency-masked
    // self-attention to pick up local structure
    NodeId geo = positional_encode(g, in.cond, pe_vertex_);
    AttnMask adj_mask{n_total, n_total, copy_mask(adj.allow)};
    {
        auto maps = attention_maps(g, msa_q_(g, geo), msa_k_(g, geo),
                                   static_cast<int>(cfg_.heads), &adj_mask);
        geo = g.add(geo, apply_attention_maps(g, maps, msa_v_(g, geo), static_cast<int>(cfg_.heads)));
    }
    NodeId fine = geo;

    std::vector<NodeId> full_streams;
    full_streams.push_back(geo);
    if (with_jump) full_streams.push_back(positional_encode(g, in.jump, pe_vertex_));
    full_streams.push_back(positional_encode(g, in.traj, pe_traj_));

    // farthest point sampling over real vertices on raw coordinates
    const int64_t n_tokens = token_count(real_n);
    std::vector<int64_t> fps;
    if (opts.fps_indices != nullptr) {
        fps = *opts.fps_indices;
        require(static_cast<int64_t>(fps.size()) == n_tokens, "invalid_arg",
                "encode: fps override must supply token_count indices");
    } else {
        fps = fps_sample(real_rows(in.cond, real_n), n_tokens, opts.fps_start);
    }
    auto idx = std::make_shared<const std::vector<int64_t>>(fps);

    std::vector<NodeId> tokens;
    tokens.reserve(full_streams.size());
    for (NodeId s : full_streams) tokens.push_back(g.gather_rows(s, idx));

    // layer 0 keys are the full streams (padded keys masked out); later layers
    // are token self-attention
    std::optional<AttnMask> key_mask;
    if (real_n < n_total) {
        std::vector<uint8_t> valid(static_cast<size_t>(n_total), 0);
        for (int64_t i = 0; i < real_n; ++i) valid[static_cast<size_t>(i)] = 1;
        key_mask = AttnMask::key_mask(n_tokens, valid);
    }
    for (size_t l = 0; l < enc_layers_.size(); ++l) {
        if (l == 0) {
            tokens = streams_forward(g, enc_layers_[l], tokens, full_streams, roles,
                                     key_mask ? &*key_mask : nullptr, true, opts.trace);
        } else {
            tokens = streams_forward(g, enc_layers_[l], tokens, tokens, roles, nullptr, true,
                                     opts.trace);
        }
    }

    EncodeOut out;
    out.cond.fine = fine;
    out.cond.tokens_geo = tokens[0];
    out.cond.x_cond = head_cond_(g, tokens[0]);
    out.cond.fps_indices = fps;

    size_t slot = 1;
    if (with_jump) {
        out.jump.mu = head_jump_mu_(g, tokens[slot]);
        out.jump.log_sigma = head_jump_ls_(g, tokens[slot]);
        out.z_jump = noise_jump != nullptr
                         ? reparameterize(g, out.jump.mu, out.jump.log_sigma, *noise_jump,
                                          kLogSigmaMin, kLogSigmaMax)
                         : out.jump.mu;
        ++slot;
    }
    out.traj.mu = head_traj_mu_(g, tokens[slot]);
    out.traj.log_sigma = head_traj_ls_(g, tokens[slot]);
    out.z_traj = noise_traj != nullptr
                     ? reparameterize(g, out.traj.mu, out.traj.log_sigma, *noise_traj,
                                      kLogSigmaMin, kLogSigmaMax)
                     : out.traj.mu;
    return out;
}

std::vector<NodeId> TriflowVae::encoder_layer_forward(Graph& g, size_t index,
                                                      const std::vector<NodeId>& queries,
                                                      const std::vector<NodeId>& keys,
                                                      const AttnMask* key_mask,
                                                      AttnTrace* trace) const {
    require(index < enc_layers_.size(), "invalid_arg", "encoder_layer_forward: bad layer index");
    require(queries.size() == active_roles().size(), "invalid_arg",
            "encoder_layer_forward: expected one node per active stream");
    return streams_forward(g, enc_layers_[index], queries, keys, active_roles(), key_mask, true,
                           trace);
}

TriflowVae::CondEncoding TriflowVae::encode_condition(Graph& g, const Tensor& cond, int64_t real_n,
                                                      const AdjacencyMask& adj,
                                                      const EncodeOptions& opts) const {
    const int64_t n_total = cond.rows();
    require(real_n >= 1 && real_n <= n_total, "invalid_arg", "encode_condition: bad real count");
    require(adj.n == n_total, "shape_mismatch", "encode_condition: adjacency size mismatch");

    NodeId geo = positional_encode(g, cond, pe_vertex_);
    AttnMask adj_mask{n_total, n_total, copy_mask(adj.allow)};
    {
        auto maps = attention_maps(g, msa_q_(g, geo), msa_k_(g, geo),
                                   static_cast<int>(cfg_.heads), &adj_mask);
        geo = g.add(geo, apply_attention_maps(g, maps, msa_v_(g, geo), static_cast<int>(cfg_.heads)));
    }
    NodeId fine = geo;

    const int64_t n_tokens = token_count(real_n);
    std::vector<int64_t> fps;
    if (opts.fps_indices != nullptr) {
        fps = *opts.fps_indices;
    } else {
        fps = fps_sample(real_rows(cond, real_n), n_tokens, opts.fps_start);
    }
    auto idx = std::make_shared<const std::vector<int64_t>>(fps);

    std::vector<NodeId> tokens{g.gather_rows(geo, idx)};
    std::vector<NodeId> full{geo};
    std::vector<int> roles{0};
    std::optional<AttnMask> key_mask;
    if (real_n < n_total) {
        std::vector<uint8_t> valid(static_cast<size_t>(n_total), 0);
        for (int64_t i = 0; i < real_n; ++i) valid[static_cast<size_t>(i)] = 1;
        key_mask = AttnMask::key_mask(static_cast<int64_t>(fps.size()), valid);
    }
    for (size_t l = 0; l < enc_layers_.size(); ++l) {
        if (l == 0) {
            tokens = streams_forward(g, enc_layers_[l], tokens, full, roles,
                                     key_mask ? &*key_mask : nullptr, true, opts.trace);
        } else {
            tokens = streams_forward(g, enc_layers_[l], tokens, tokens, roles, nullptr, true,
                                     opts.trace);
        }
    }

    CondEncoding out;
    out.fine = fine;
    out.tokens_geo = tokens[0];
    out.x_cond = head_cond_(g, tokens[0]);
    out.fps_indices = std::move(fps);
    return out;
}

TriflowVae::DecodeOut TriflowVae::decode(Graph& g, NodeId x_cond, NodeId z_jump, NodeId z_traj,
                                         NodeId fine, int64_t real_n, AttnTrace* trace) const {
    const std::vector<int> roles = active_roles();
    const bool with_jump = cfg_.jump_decomp;
    require(!with_jump || z_jump >= 0, "invalid_arg", "decode: missing jump latent");

    std::vector<NodeId> tokens;
    tokens.push_back(dec_proj_cond_(g, x_cond));
    if (with_jump) tokens.push_back(dec_proj_jump_(g, z_jump));
    tokens.push_back(dec_proj_traj_(g, z_traj));

    for (const auto& layer : dec_layers_) {
        tokens = streams_forward(g, layer, tokens, tokens, roles, nullptr, true, trace);
    }

    // cross-attention back to the dense topology: fine geometry features
    // query the processed tokens (no residual, the queries are a different
    // width semantically even though dims match)
    std::vector<NodeId> fine_queries(tokens.size(), fine);
    std::vector<NodeId> propagated =
        streams_forward(g, cross_, fine_queries, tokens, roles, nullptr, false, trace);

    const int64_t n_total = g.val(fine).rows();
    DecodeOut out;
    size_t slot = 1;
    if (with_jump) {
        out.jump_rec = head_rec_jump_(g, propagated[slot]);
        ++slot;
    }
    out.traj_rec = head_rec_traj_(g, propagated[slot]);

    if (real_n < n_total) {
        // zero the padded rows so downstream losses and exports ignore them
        auto row_mask = [&](int64_t width) {
            Tensor m({n_total, width});
            for (int64_t i = 0; i < real_n; ++i) {
                for (int64_t j = 0; j < width; ++j) m(i, j) = 1.0;
            }
            return g.constant(std::move(m));
        };
        if (with_jump) out.jump_rec = g.mul(out.jump_rec, row_mask(3));
        out.traj_rec = g.mul(out.traj_rec, row_mask(cfg_.frame_count * 3));
    }
    return out;
}

TriflowVae::LossOut TriflowVae::loss(Graph& g, const EncoderInputs& targets, const DecodeOut& dec,
                                     const EncodeOut& enc) const {
    const int64_t n_total = targets.cond.rows();
    const int64_t real_n = targets.real_n;
    const bool with_jump = cfg_.jump_decomp;

    auto masked_mse = [&](NodeId rec, const Tensor& target) {
        NodeId diff = g.sub(rec, g.constant(target));
        NodeId sq = g.mul(diff, diff);
        if (real_n < n_total) {
            Tensor m({n_total, target.cols()});
            for (int64_t i = 0; i < real_n; ++i) {
                for (int64_t j = 0; j < target.cols(); ++j) m(i, j) = 1.0;
            }
            sq = g.mul(sq, g.constant(std::move(m)));
        }
        return g.scale(g.sum_all(sq), 1.0 / static_cast<double>(real_n * target.cols()));
    };

    LossOut out;
    NodeId recon = -1;
    if (!with_jump) {
        out.recon_traj = masked_mse(dec.traj_rec, targets.traj);
        recon = out.recon_traj;
    } else if (cfg_.decoup_loss) {
        out.recon_jump = masked_mse(dec.jump_rec, targets.jump);
        out.recon_traj = masked_mse(dec.traj_rec, targets.traj);
        recon = g.add(out.recon_jump, out.recon_traj);
    } else {
        // single MSE over the concatenated [jump; traj] target
        NodeId rec = g.concat_cols({dec.jump_rec, dec.traj_rec});
        Tensor target({n_total, 3 + targets.traj.cols()});
        for (int64_t i = 0; i < n_total; ++i) {
            for (int64_t j = 0; j < 3; ++j) target(i, j) = targets.jump(i, j);
            for (int64_t j = 0; j < targets.traj.cols(); ++j) target(i, 3 + j) = targets.traj(i, j);
        }
        out.recon_jump = masked_mse(rec, target);
        recon = out.recon_jump;
    }

    NodeId total = recon;
    if (with_jump && cfg_.eta_jump > 0.0) {
        out.kl_jump = gaussian_kl_mean(g, enc.jump.mu, enc.jump.log_sigma, kLogSigmaMin, kLogSigmaMax);
        total = g.add(total, g.scale(out.kl_jump, cfg_.eta_jump));
    }
    if (cfg_.eta_traj > 0.0) {
        out.kl_traj = gaussian_kl_mean(g, enc.traj.mu, enc.traj.log_sigma, kLogSigmaMin, kLogSigmaMax);
        total = g.add(total, g.scale(out.kl_traj, cfg_.eta_traj));
    }
    out.total = total;
    return out;
}

} // namespace dmflow
