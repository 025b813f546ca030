#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dmflow/tensor.hpp"

namespace dmflow {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value; callers zero explicitly between steps
};

using NodeId = int32_t;

// Reverse-mode tape over the op set used by the layers in this project.
// Nodes are appended in evaluation order, so reverse creation order is a
// valid reverse-topological order for backward(). A Graph is built per
// forward pass; clear() reuses the storage. Gradients accumulate additively
// into Parameter::grad (or into a sink, see GradSink).
class Graph {
public:
    // Collects leaf gradients instead of writing Parameter::grad directly.
    // Used by data-parallel workers so the shared parameters stay read-only.
    struct GradSink {
        std::vector<std::pair<Parameter*, Tensor>> grads;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    NodeId constant(Tensor value);
    NodeId param(Parameter& p);

    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor& grad(NodeId id);  // allocates zeros on first use
    bool needs_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    // elementwise
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId add_scalar(NodeId a, double s);
    NodeId exp(NodeId a);
    NodeId sin(NodeId a);
    NodeId cos(NodeId a);
    NodeId silu(NodeId a);
    NodeId clamp(NodeId a, double lo, double hi);

    // linear algebra on 2-D views
    NodeId matmul(NodeId a, NodeId b, bool trans_a = false, bool trans_b = false);
    NodeId add_rowvec(NodeId x, NodeId v);  // broadcast add of a length-d vector to every row
    NodeId mul_rowvec(NodeId x, NodeId v);  // broadcast multiply of every row by a length-d vector
    NodeId softmax_rows(NodeId a);
    // Entries where allow==0 receive exactly zero weight; every row must keep
    // at least one allowed entry.
    NodeId softmax_rows_masked(NodeId a, std::shared_ptr<const std::vector<uint8_t>> allow);
    NodeId layer_norm_rows(NodeId x, double eps);  // per-row standardization, no affine

    // shape
    NodeId gather_rows(NodeId a, std::shared_ptr<const std::vector<int64_t>> idx);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId slice_cols(NodeId a, int64_t begin, int64_t end);

    // reductions
    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);

    double scalar(NodeId id) const;  // value of a 1-element node

    void backward(NodeId root);  // root must be scalar
    void set_grad_sink(GradSink* sink) { sink_ = sink; }

    void clear();
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Graph&, NodeId)> back;  // second argument: own id
        Parameter* leaf = nullptr;
        bool needs_grad = false;
    };

    NodeId push(Tensor value, bool needs_grad, std::function<void(Graph&, NodeId)> back);
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }

    std::deque<Node> nodes_;
    GradSink* sink_ = nullptr;
};

} // namespace dmflow
