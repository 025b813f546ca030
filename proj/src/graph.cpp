#include "dmflow/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmflow/error.hpp"

namespace dmflow {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.same_shape(b), "shape_mismatch",
            std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace

NodeId Graph::push(Tensor value, bool needs_grad, std::function<void(Graph&, NodeId)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = needs_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::constant(Tensor value) {
    return push(std::move(value), false, nullptr);
}

NodeId Graph::param(Parameter& p) {
    Parameter* ptr = &p;
    NodeId id = push(p.value, true, [ptr](Graph& g, NodeId self) {
        if (g.sink_ != nullptr) {
            g.sink_->grads.emplace_back(ptr, g.grad(self));
        } else {
            ptr->grad.add_(g.grad(self));
        }
    });
    nodes_.back().leaf = ptr;
    return id;
}

Tensor& Graph::grad(NodeId id) {
    Node& n = node(id);
    if (n.grad.empty()) {
        n.grad = Tensor(n.value.shape());
    }
    return n.grad;
}

double Graph::scalar(NodeId id) const {
    require(val(id).size() == 1, "shape_mismatch", "scalar() on non-scalar node");
    return val(id)[0];
}

// ---------------------------------------------------------------- elementwise

NodeId Graph::add(NodeId a, NodeId b) {
    check_same_shape(val(a), val(b), "add");
    Tensor out = val(a);
    out.add_(val(b));
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        if (g.needs_grad(a)) g.grad(a).add_(go);
        if (g.needs_grad(b)) g.grad(b).add_(go);
    });
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_same_shape(val(a), val(b), "sub");
    Tensor out = val(a);
    out.axpy_(-1.0, val(b));
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        if (g.needs_grad(a)) g.grad(a).add_(go);
        if (g.needs_grad(b)) g.grad(b).axpy_(-1.0, go);
    });
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_same_shape(val(a), val(b), "mul");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, [a, b](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        if (g.needs_grad(a)) {
            Tensor& ga = g.grad(a);
            const Tensor& vb = g.val(b);
            for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (g.needs_grad(b)) {
            Tensor& gb = g.grad(b);
            const Tensor& va = g.val(a);
            for (int64_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
    });
}

NodeId Graph::scale(NodeId a, double s) {
    Tensor out = val(a);
    out.scale_(s);
    return push(std::move(out), needs_grad(a), [a, s](Graph& g, NodeId self) {
        if (g.needs_grad(a)) g.grad(a).axpy_(s, g.grad(self));
    });
}

NodeId Graph::add_scalar(NodeId a, double s) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (g.needs_grad(a)) g.grad(a).add_(g.grad(self));
    });
}

NodeId Graph::exp(NodeId a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        const Tensor& y = g.val(self);
        Tensor& ga = g.grad(a);
        for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
    });
}

NodeId Graph::sin(NodeId a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sin(out[i]);
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        const Tensor& x = g.val(a);
        Tensor& ga = g.grad(a);
        for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * std::cos(x[i]);
    });
}

NodeId Graph::cos(NodeId a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::cos(out[i]);
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        const Tensor& x = g.val(a);
        Tensor& ga = g.grad(a);
        for (int64_t i = 0; i < go.size(); ++i) ga[i] -= go[i] * std::sin(x[i]);
    });
}

NodeId Graph::silu(NodeId a) {
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        const Tensor& x = g.val(a);
        Tensor& ga = g.grad(a);
        for (int64_t i = 0; i < go.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-x[i]));
            ga[i] += go[i] * s * (1.0 + x[i] * (1.0 - s));
        }
    });
}

NodeId Graph::clamp(NodeId a, double lo, double hi) {
    require(lo < hi, "invalid_arg", "clamp: lo must be < hi");
    Tensor out = val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo, hi);
    return push(std::move(out), needs_grad(a), [a, lo, hi](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        const Tensor& x = g.val(a);
        Tensor& ga = g.grad(a);
        for (int64_t i = 0; i < go.size(); ++i) {
            if (x[i] > lo && x[i] < hi) ga[i] += go[i];
        }
    });
}

// ------------------------------------------------------------- linear algebra

NodeId Graph::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    const int64_t m = trans_a ? va.cols() : va.rows();
    const int64_t n = trans_b ? vb.rows() : vb.cols();
    Tensor out({m, n});
    gemm(1.0, va, trans_a, vb, trans_b, 0.0, out);
    bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(out), ng, [a, b, trans_a, trans_b](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        const Tensor& va = g.val(a);
        const Tensor& vb = g.val(b);
        if (g.needs_grad(a)) {
            Tensor& ga = g.grad(a);
            if (!trans_a) {
                gemm(1.0, go, false, vb, !trans_b, 1.0, ga);  // dA = dC op(B)^T
            } else if (!trans_b) {
                gemm(1.0, vb, false, go, true, 1.0, ga);      // dA = B dC^T
            } else {
                gemm(1.0, vb, true, go, true, 1.0, ga);       // dA = B^T dC^T
            }
        }
        if (g.needs_grad(b)) {
            Tensor& gb = g.grad(b);
            if (!trans_b) {
                gemm(1.0, va, !trans_a, go, false, 1.0, gb);  // dB = op(A)^T dC
            } else if (!trans_a) {
                gemm(1.0, go, true, va, false, 1.0, gb);      // dB = dC^T A
            } else {
                gemm(1.0, go, true, va, true, 1.0, gb);       // dB = dC^T A^T
            }
        }
    });
}

NodeId Graph::add_rowvec(NodeId x, NodeId v) {
    const Tensor& vx = val(x);
    const Tensor& vv = val(v);
    require(vv.size() == vx.cols(), "shape_mismatch",
            "add_rowvec: " + vx.shape_str() + " + " + vv.shape_str());
    Tensor out = vx;
    const int64_t r = vx.rows(), c = vx.cols();
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) out[i * c + j] += vv[j];
    }
    bool ng = needs_grad(x) || needs_grad(v);
    return push(std::move(out), ng, [x, v](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        const int64_t r = go.rows(), c = go.cols();
        if (g.needs_grad(x)) g.grad(x).add_(go);
        if (g.needs_grad(v)) {
            Tensor& gv = g.grad(v);
            for (int64_t i = 0; i < r; ++i) {
                for (int64_t j = 0; j < c; ++j) gv[j] += go[i * c + j];
            }
        }
    });
}

NodeId Graph::mul_rowvec(NodeId x, NodeId v) {
    const Tensor& vx = val(x);
    const Tensor& vv = val(v);
    require(vv.size() == vx.cols(), "shape_mismatch",
            "mul_rowvec: " + vx.shape_str() + " * " + vv.shape_str());
    Tensor out = vx;
    const int64_t r = vx.rows(), c = vx.cols();
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) out[i * c + j] *= vv[j];
    }
    bool ng = needs_grad(x) || needs_grad(v);
    return push(std::move(out), ng, [x, v](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        const Tensor& vx = g.val(x);
        const Tensor& vv = g.val(v);
        const int64_t r = go.rows(), c = go.cols();
        if (g.needs_grad(x)) {
            Tensor& gx = g.grad(x);
            for (int64_t i = 0; i < r; ++i) {
                for (int64_t j = 0; j < c; ++j) gx[i * c + j] += go[i * c + j] * vv[j];
            }
        }
        if (g.needs_grad(v)) {
            Tensor& gv = g.grad(v);
            for (int64_t i = 0; i < r; ++i) {
                for (int64_t j = 0; j < c; ++j) gv[j] += go[i * c + j] * vx[i * c + j];
            }
        }
    });
}

namespace {

// Shared forward for the plain and masked softmax; allow == nullptr means all
// entries participate. Max-subtraction keeps exp() in range for any finite
// input.
Tensor softmax_forward(const Tensor& x, const std::vector<uint8_t>* allow) {
    for (int64_t i = 0; i < x.size(); ++i) {
        require(!std::isnan(x[i]), "nan_input", "softmax_rows: NaN at flat index " + std::to_string(i));
    }
    const int64_t r = x.rows(), c = x.cols();
    Tensor y({r, c});
    for (int64_t i = 0; i < r; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < c; ++j) {
            if (allow && !(*allow)[static_cast<size_t>(i * c + j)]) continue;
            m = std::max(m, x[i * c + j]);
        }
        require(m > -std::numeric_limits<double>::infinity(), "invalid_arg",
                "softmax_rows: row " + std::to_string(i) + " has no allowed entries");
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            double e = 0.0;
            if (!allow || (*allow)[static_cast<size_t>(i * c + j)]) {
                e = std::exp(x[i * c + j] - m);
            }
            y[i * c + j] = e;
            s += e;
        }
        const double inv = 1.0 / s;
        for (int64_t j = 0; j < c; ++j) y[i * c + j] *= inv;
    }
    return y;
}

// dx = y * (dy - sum(dy * y)) per row; masked entries have y == 0 so their
// gradient vanishes without special casing.
void softmax_backward(const Tensor& y, const Tensor& go, Tensor& gx) {
    const int64_t r = y.rows(), c = y.cols();
    for (int64_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += go[i * c + j] * y[i * c + j];
        for (int64_t j = 0; j < c; ++j) {
            gx[i * c + j] += y[i * c + j] * (go[i * c + j] - dot);
        }
    }
}

} // namespace

NodeId Graph::softmax_rows(NodeId a) {
    Tensor out = softmax_forward(val(a), nullptr);
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        softmax_backward(g.val(self), g.grad(self), g.grad(a));
    });
}

NodeId Graph::softmax_rows_masked(NodeId a, std::shared_ptr<const std::vector<uint8_t>> allow) {
    const Tensor& va = val(a);
    require(allow && static_cast<int64_t>(allow->size()) == va.size(), "shape_mismatch",
            "softmax_rows_masked: mask size does not match input");
    Tensor out = softmax_forward(va, allow.get());
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        softmax_backward(g.val(self), g.grad(self), g.grad(a));
    });
}

NodeId Graph::layer_norm_rows(NodeId x, double eps) {
    require(eps > 0.0, "invalid_arg", "layer_norm_rows: eps must be positive");
    const Tensor& vx = val(x);
    const int64_t r = vx.rows(), c = vx.cols();
    Tensor out({r, c});
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < c; ++j) mean += vx[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double d = vx[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = inv;
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = (vx[i * c + j] - mean) * inv;
    }
    return push(std::move(out), needs_grad(x), [x, inv_std](Graph& g, NodeId self) {
        if (!g.needs_grad(x)) return;
        const Tensor& y = g.val(self);
        const Tensor& go = g.grad(self);
        Tensor& gx = g.grad(x);
        const int64_t r = y.rows(), c = y.cols();
        for (int64_t i = 0; i < r; ++i) {
            double mean_g = 0.0, mean_gy = 0.0;
            for (int64_t j = 0; j < c; ++j) {
                mean_g += go[i * c + j];
                mean_gy += go[i * c + j] * y[i * c + j];
            }
            mean_g /= static_cast<double>(c);
            mean_gy /= static_cast<double>(c);
            const double inv = (*inv_std)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < c; ++j) {
                gx[i * c + j] += inv * (go[i * c + j] - mean_g - y[i * c + j] * mean_gy);
            }
        }
    });
}

// ---------------------------------------------------------------------- shape

NodeId Graph::gather_rows(NodeId a, std::shared_ptr<const std::vector<int64_t>> idx) {
    const Tensor& va = val(a);
    const int64_t c = va.cols();
    const int64_t k = static_cast<int64_t>(idx->size());
    Tensor out({k, c});
    for (int64_t i = 0; i < k; ++i) {
        const int64_t src = (*idx)[static_cast<size_t>(i)];
        require(src >= 0 && src < va.rows(), "invalid_arg",
                "gather_rows: index " + std::to_string(src) + " out of range");
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = va[src * c + j];
    }
    return push(std::move(out), needs_grad(a), [a, idx](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        Tensor& ga = g.grad(a);
        const int64_t c = go.cols();
        for (int64_t i = 0; i < go.rows(); ++i) {
            const int64_t dst = (*idx)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < c; ++j) ga[dst * c + j] += go[i * c + j];  // scatter-add
        }
    });
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "invalid_arg", "concat_cols: no inputs");
    const int64_t r = val(parts[0]).rows();
    int64_t total = 0;
    bool ng = false;
    for (NodeId p : parts) {
        require(val(p).rows() == r, "shape_mismatch", "concat_cols: row mismatch");
        total += val(p).cols();
        ng = ng || needs_grad(p);
    }
    Tensor out({r, total});
    int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& vp = val(p);
        const int64_t c = vp.cols();
        for (int64_t i = 0; i < r; ++i) {
            for (int64_t j = 0; j < c; ++j) out[i * total + off + j] = vp[i * c + j];
        }
        off += c;
    }
    return push(std::move(out), ng, [parts](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        const int64_t r = go.rows(), total = go.cols();
        int64_t off = 0;
        for (NodeId p : parts) {
            const int64_t c = g.val(p).cols();
            if (g.needs_grad(p)) {
                Tensor& gp = g.grad(p);
                for (int64_t i = 0; i < r; ++i) {
                    for (int64_t j = 0; j < c; ++j) gp[i * c + j] += go[i * total + off + j];
                }
            }
            off += c;
        }
    });
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "invalid_arg", "concat_rows: no inputs");
    const int64_t c = val(parts[0]).cols();
    int64_t total = 0;
    bool ng = false;
    for (NodeId p : parts) {
        require(val(p).cols() == c, "shape_mismatch", "concat_rows: column mismatch");
        total += val(p).rows();
        ng = ng || needs_grad(p);
    }
    Tensor out({total, c});
    int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& vp = val(p);
        for (int64_t i = 0; i < vp.rows(); ++i) {
            for (int64_t j = 0; j < c; ++j) out[(off + i) * c + j] = vp[i * c + j];
        }
        off += vp.rows();
    }
    return push(std::move(out), ng, [parts](Graph& g, NodeId self) {
        const Tensor& go = g.grad(self);
        const int64_t c = go.cols();
        int64_t off = 0;
        for (NodeId p : parts) {
            const int64_t r = g.val(p).rows();
            if (g.needs_grad(p)) {
                Tensor& gp = g.grad(p);
                for (int64_t i = 0; i < r; ++i) {
                    for (int64_t j = 0; j < c; ++j) gp[i * c + j] += go[(off + i) * c + j];
                }
            }
            off += r;
        }
    });
}

NodeId Graph::slice_cols(NodeId a, int64_t begin, int64_t end) {
    const Tensor& va = val(a);
    require(0 <= begin && begin < end && end <= va.cols(), "invalid_arg",
            "slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
    const int64_t r = va.rows(), c = va.cols(), w = end - begin;
    Tensor out({r, w});
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < w; ++j) out[i * w + j] = va[i * c + begin + j];
    }
    return push(std::move(out), needs_grad(a), [a, begin](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const Tensor& go = g.grad(self);
        Tensor& ga = g.grad(a);
        const int64_t r = go.rows(), w = go.cols(), c = ga.cols();
        for (int64_t i = 0; i < r; ++i) {
            for (int64_t j = 0; j < w; ++j) ga[i * c + begin + j] += go[i * w + j];
        }
    });
}

// ----------------------------------------------------------------- reductions

NodeId Graph::sum_all(NodeId a) {
    Tensor out = Tensor::scalar(val(a).sum());
    return push(std::move(out), needs_grad(a), [a](Graph& g, NodeId self) {
        if (!g.needs_grad(a)) return;
        const double go = g.grad(self)[0];
        Tensor& ga = g.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += go;
    });
}

NodeId Graph::mean_all(NodeId a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size()));
}

// ------------------------------------------------------------------- backward

void Graph::backward(NodeId root) {
    require(val(root).size() == 1, "invalid_arg", "backward: root must be scalar");
    require(needs_grad(root), "invalid_arg", "backward: root does not require gradients");
    grad(root).fill(1.0);
    for (NodeId id = root; id >= 0; --id) {
        Node& n = node(id);
        if (!n.needs_grad || !n.back || n.grad.empty()) continue;
        n.back(*this, id);
    }
}

void Graph::clear() {
    nodes_.clear();
}

} // namespace dmflow
