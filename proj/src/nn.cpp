#include "dmflow/nn.hpp"

#include <cmath>

#include "dmflow/error.hpp"

namespace dmflow {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
    require(by_name_.find(name) == by_name_.end(), "invalid_arg", "duplicate parameter " + name);
    Parameter p;
    p.name = name;
    p.grad = Tensor(init.shape());
    p.value = std::move(init);
    params_.push_back(std::move(p));
    by_name_[name] = params_.size() - 1;
    return params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParamStore::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
}

void ParamStore::zero_grads() {
    for (auto& p : params_) {
        p.grad.fill(0.0);
    }
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_) {
        for (int64_t i = 0; i < p.grad.size(); ++i) {
            s += p.grad[i] * p.grad[i];
        }
    }
    return std::sqrt(s);
}

void ParamStore::scale_grads(double s) {
    for (auto& p : params_) {
        p.grad.scale_(s);
    }
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

std::vector<Parameter*> ParamStore::all() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) {
        out.push_back(&p);
    }
    return out;
}

Tensor normal_init(std::vector<int64_t> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) {
        t[i] = stddev * rng.gauss();
    }
    return t;
}

Linear::Linear(ParamStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
               double stddev, bool bias) {
    const double sd = stddev < 0.0 ? 1.0 / std::sqrt(static_cast<double>(in)) : stddev;
    w = &store.add(name + ".w", sd == 0.0 ? Tensor({in, out}) : normal_init({in, out}, sd, rng));
    if (bias) {
        b = &store.add(name + ".b", Tensor({out}));
    }
}

NodeId Linear::operator()(Graph& g, NodeId x) const {
    NodeId y = g.matmul(x, g.param(*w));
    if (b != nullptr) {
        y = g.add_rowvec(y, g.param(*b));
    }
    return y;
}

AttnMask AttnMask::key_mask(int64_t q_count, std::span<const uint8_t> key_valid) {
    AttnMask m;
    m.q_count = q_count;
    m.k_count = static_cast<int64_t>(key_valid.size());
    m.allow = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(q_count * m.k_count));
    for (int64_t i = 0; i < q_count; ++i) {
        for (int64_t j = 0; j < m.k_count; ++j) {
            (*m.allow)[static_cast<size_t>(i * m.k_count + j)] = key_valid[static_cast<size_t>(j)];
        }
    }
    return m;
}

std::vector<NodeId> attention_maps(Graph& g, NodeId q, NodeId k, int heads, const AttnMask* mask) {
    const int64_t d = g.val(q).cols();
    require(g.val(k).cols() == d, "shape_mismatch", "attention_maps: q/k feature dims differ");
    require(heads > 0 && d % heads == 0, "invalid_arg", "attention_maps: heads must divide dim");
    const int64_t dk = d / heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    if (mask != nullptr) {
        require(mask->q_count == g.val(q).rows() && mask->k_count == g.val(k).rows(),
                "shape_mismatch", "attention_maps: mask shape does not match q/k");
    }
    std::vector<NodeId> maps;
    maps.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        NodeId qh = g.slice_cols(q, h * dk, (h + 1) * dk);
        NodeId kh = g.slice_cols(k, h * dk, (h + 1) * dk);
        NodeId logits = g.scale(g.matmul(qh, kh, false, true), inv_sqrt_dk);
        maps.push_back(mask ? g.softmax_rows_masked(logits, mask->allow) : g.softmax_rows(logits));
    }
    return maps;
}

NodeId apply_attention_maps(Graph& g, std::span<const NodeId> maps, NodeId v, int heads) {
    const int64_t d = g.val(v).cols();
    require(static_cast<int>(maps.size()) == heads && d % heads == 0, "invalid_arg",
            "apply_attention_maps: head count mismatch");
    const int64_t dk = d / heads;
    std::vector<NodeId> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        NodeId vh = g.slice_cols(v, h * dk, (h + 1) * dk);
        outs.push_back(g.matmul(maps[static_cast<size_t>(h)], vh));
    }
    return g.concat_cols(outs);
}

NodeId layer_norm_affine(Graph& g, NodeId x, NodeId gain, NodeId bias, double eps) {
    return g.add_rowvec(g.mul_rowvec(g.layer_norm_rows(x, eps), gain), bias);
}

NodeId reparameterize(Graph& g, NodeId mu, NodeId log_sigma, const Tensor& noise,
                      double log_sigma_min, double log_sigma_max) {
    require(g.val(mu).same_shape(noise), "shape_mismatch", "reparameterize: noise shape mismatch");
    NodeId sigma = g.exp(g.clamp(log_sigma, log_sigma_min, log_sigma_max));
    return g.add(mu, g.mul(sigma, g.constant(noise)));
}

NodeId gaussian_kl_mean(Graph& g, NodeId mu, NodeId log_sigma,
                        double log_sigma_min, double log_sigma_max) {
    NodeId ls = g.clamp(log_sigma, log_sigma_min, log_sigma_max);
    NodeId var = g.exp(g.scale(ls, 2.0));
    NodeId term = g.sub(g.add(g.mul(mu, mu), var), g.scale(ls, 2.0));
    return g.scale(g.mean_all(g.add_scalar(term, -1.0)), 0.5);
}

} // namespace dmflow
