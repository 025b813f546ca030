#pragma once

#include <deque>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmflow/graph.hpp"
#include "dmflow/rng.hpp"

namespace dmflow {

// Owns named parameters in registration order. Deque keeps addresses stable
// so layers can hold Parameter pointers.
class ParamStore {
public:
    Parameter& add(const std::string& name, Tensor init);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    size_t count() const { return params_.size(); }
    Parameter& at(size_t i) { return params_[i]; }
    const Parameter& at(size_t i) const { return params_[i]; }

    void zero_grads();
    double grad_norm() const;          // global L2 norm over every gradient entry
    void scale_grads(double s);
    int64_t total_size() const;
    std::vector<Parameter*> all();

private:
    std::deque<Parameter> params_;
    std::unordered_map<std::string, size_t> by_name_;
};

Tensor normal_init(std::vector<int64_t> shape, double stddev, Rng& rng);

// Fully connected layer, weight laid out in x out so forward is a plain
// matmul. Bias optional, zero by default.
struct Linear {
    Parameter* w = nullptr;
    Parameter* b = nullptr;

    Linear() = default;
    // stddev < 0 selects 1/sqrt(in); stddev == 0 zero-initializes (used for
    // gate heads that must start as identity).
    Linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
           double stddev = -1.0, bool bias = true);

    NodeId operator()(Graph& g, NodeId x) const;
    int64_t in_dim() const { return w->value.dim(0); }
    int64_t out_dim() const { return w->value.dim(1); }
};

// Row-major q_count x k_count allow matrix for attention masking.
struct AttnMask {
    int64_t q_count = 0;
    int64_t k_count = 0;
    std::shared_ptr<std::vector<uint8_t>> allow;

    static AttnMask key_mask(int64_t q_count, std::span<const uint8_t> key_valid);
};

// Per-head maps A_h = softmax(Q_h K_h^T / sqrt(d_k)), optionally masked.
// q: n x d, k: m x d with d divisible by heads.
std::vector<NodeId> attention_maps(Graph& g, NodeId q, NodeId k, int heads,
                                   const AttnMask* mask = nullptr);

// concat over heads of A_h V_h; v: m x d.
NodeId apply_attention_maps(Graph& g, std::span<const NodeId> maps, NodeId v, int heads);

// Row-wise standardization followed by elementwise gain and bias
// (the conventional affine layer norm).
NodeId layer_norm_affine(Graph& g, NodeId x, NodeId gain, NodeId bias, double eps);

// z = mu + sigma * eps with sigma = exp(clamped log_sigma); gradients flow to
// mu and log_sigma only.
NodeId reparameterize(Graph& g, NodeId mu, NodeId log_sigma, const Tensor& noise,
                      double log_sigma_min = -10.0, double log_sigma_max = 5.0);

// Mean of 0.5 * (mu^2 + sigma^2 - 1 - 2 log sigma) over all entries:
// KL(N(mu, sigma^2) || N(0, I)) per element, averaged.
NodeId gaussian_kl_mean(Graph& g, NodeId mu, NodeId log_sigma,
                        double log_sigma_min = -10.0, double log_sigma_max = 5.0);

} // namespace dmflow
