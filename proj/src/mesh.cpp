#include "dmflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dmflow/error.hpp"

namespace dmflow {

Tensor DynamicSequence::frame(int64_t t) const {
    const int64_t n = vertex_count();
    Tensor out({n, 3});
    for (int64_t v = 0; v < n; ++v) {
        for (int64_t k = 0; k < 3; ++k) {
            out(v, k) = frames.at3(t, v, k);
        }
    }
    return out;
}

StaticMesh DynamicSequence::frame_mesh(int64_t t) const {
    StaticMesh m;
    m.vertices = frame(t);
    m.faces = faces;
    m.real_vertex_count = real_vertex_count;
    m.real_face_count = real_face_count;
    return m;
}

Tensor Decomposition::traj_matrix() const {
    const int64_t t_count = frame_count();
    const int64_t n = vertex_count();
    Tensor out({n, t_count * 3});
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                out(v, t * 3 + k) = rel_traj.at3(t, v, k);
            }
        }
    }
    return out;
}

AdjacencyMask build_adjacency(std::span<const std::array<uint32_t, 3>> faces, int64_t n) {
    AdjacencyMask mask;
    mask.n = n;
    mask.allow.assign(static_cast<size_t>(n * n), 0);
    for (int64_t i = 0; i < n; ++i) {
        mask.allow[static_cast<size_t>(i * n + i)] = 1;
    }
    for (const auto& f : faces) {
        for (int e = 0; e < 3; ++e) {
            const int64_t a = f[static_cast<size_t>(e)];
            const int64_t b = f[static_cast<size_t>((e + 1) % 3)];
            require(a < n && b < n, "invalid_arg",
                    "build_adjacency: face index " + std::to_string(std::max(a, b)) +
                        " out of range for n=" + std::to_string(n));
            if (a == b) continue;  // degenerate sentinel edges contribute nothing
            mask.allow[static_cast<size_t>(a * n + b)] = 1;
            mask.allow[static_cast<size_t>(b * n + a)] = 1;
        }
    }
    return mask;
}

namespace {

std::array<double, 3> centroid(const Tensor& pts, int64_t real_n) {
    std::array<double, 3> c{0.0, 0.0, 0.0};
    for (int64_t v = 0; v < real_n; ++v) {
        for (int64_t k = 0; k < 3; ++k) {
            c[static_cast<size_t>(k)] += pts(v, k);
        }
    }
    for (double& x : c) {
        x /= static_cast<double>(real_n);
    }
    return c;
}

} // namespace

Canonicalized canonicalize(const StaticMesh& cond, const DynamicSequence* seq, bool dual_center) {
    require(cond.real_vertex_count >= 1, "invalid_arg", "canonicalize: condition has no vertices");
    if (seq != nullptr) {
        require(seq->vertex_count() == cond.vertex_count(), "shape_mismatch",
                "canonicalize: sequence/condition vertex counts differ");
        require(seq->real_vertex_count == cond.real_vertex_count, "shape_mismatch",
                "canonicalize: sequence/condition real vertex counts differ");
    }

    Canonicalized out;
    out.norm.c_cond = centroid(cond.vertices, cond.real_vertex_count);

    // Scale from the centered condition, real vertices only.
    double s = 0.0;
    for (int64_t v = 0; v < cond.real_vertex_count; ++v) {
        for (int64_t k = 0; k < 3; ++k) {
            s = std::max(s, std::abs(cond.vertices(v, k) - out.norm.c_cond[static_cast<size_t>(k)]));
        }
    }
    require(s > 0.0, "degenerate_input", "canonicalize: all condition vertices coincide");
    out.norm.scale = s;

    out.cond = cond;
    for (int64_t v = 0; v < cond.vertex_count(); ++v) {
        const bool real = v < cond.real_vertex_count;
        for (int64_t k = 0; k < 3; ++k) {
            out.cond.vertices(v, k) =
                real ? (cond.vertices(v, k) - out.norm.c_cond[static_cast<size_t>(k)]) / s : 0.0;
        }
    }

    if (seq != nullptr) {
        Tensor first = seq->frame(0);
        const std::array<double, 3> c_first =
            dual_center ? centroid(first, seq->real_vertex_count) : out.norm.c_cond;
        out.norm.c_first = c_first;
        out.seq = *seq;
        for (int64_t t = 0; t < seq->frame_count(); ++t) {
            for (int64_t v = 0; v < seq->vertex_count(); ++v) {
                const bool real = v < seq->real_vertex_count;
                for (int64_t k = 0; k < 3; ++k) {
                    out.seq->frames.at3(t, v, k) =
                        real ? (seq->frames.at3(t, v, k) - c_first[static_cast<size_t>(k)]) / s : 0.0;
                }
            }
        }
    }
    return out;
}

Decomposition decompose(const Tensor& cond_norm, const Tensor& frames_norm,
                        int64_t real_vertex_count, NormParams norm) {
    require(cond_norm.rank() == 2 && cond_norm.dim(1) == 3, "shape_mismatch",
            "decompose: condition must be N x 3");
    require(frames_norm.rank() == 3 && frames_norm.dim(2) == 3, "shape_mismatch",
            "decompose: frames must be T x N x 3");
    require(frames_norm.dim(1) == cond_norm.dim(0), "shape_mismatch",
            "decompose: vertex counts differ");

    const int64_t t_count = frames_norm.dim(0);
    const int64_t n = cond_norm.dim(0);

    Decomposition d;
    d.v_cond = cond_norm;
    d.norm = norm;
    d.real_vertex_count = real_vertex_count;
    d.jump = Tensor({n, 3});
    d.rel_traj = Tensor({t_count, n, 3});
    for (int64_t v = 0; v < n; ++v) {
        for (int64_t k = 0; k < 3; ++k) {
            d.jump(v, k) = frames_norm.at3(0, v, k) - cond_norm(v, k);
        }
    }
    // rel_traj[0] stays exactly zero by construction.
    for (int64_t t = 1; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                d.rel_traj.at3(t, v, k) = frames_norm.at3(t, v, k) - frames_norm.at3(0, v, k);
            }
        }
    }
    return d;
}

Tensor recompose(const Decomposition& d) {
    const int64_t t_count = d.frame_count();
    const int64_t n = d.vertex_count();
    Tensor frames({t_count, n, 3});
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                frames.at3(t, v, k) = d.v_cond(v, k) + d.jump(v, k) + d.rel_traj.at3(t, v, k);
            }
        }
    }
    return frames;
}

Tensor denormalize(const Tensor& frames_norm, const NormParams& norm) {
    Tensor out = frames_norm;
    const int64_t t_count = out.dim(0);
    const int64_t n = out.dim(1);
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                out.at3(t, v, k) = out.at3(t, v, k) * norm.scale + norm.c_cond[static_cast<size_t>(k)];
            }
        }
    }
    return out;
}

std::vector<int64_t> fps_sample(const Tensor& points, int64_t n, int64_t start) {
    require(points.rank() == 2 && points.dim(1) == 3, "shape_mismatch",
            "fps_sample: points must be K x 3");
    const int64_t k = points.dim(0);
    require(n >= 1 && n <= k, "invalid_arg",
            "fps_sample: n=" + std::to_string(n) + " outside [1," + std::to_string(k) + "]");
    require(start >= 0 && start < k, "invalid_arg", "fps_sample: start index out of range");

    std::vector<int64_t> picks;
    picks.reserve(static_cast<size_t>(n));
    std::vector<double> min_d2(static_cast<size_t>(k), std::numeric_limits<double>::infinity());
    std::vector<uint8_t> picked(static_cast<size_t>(k), 0);
    int64_t current = start;
    picks.push_back(current);
    picked[static_cast<size_t>(current)] = 1;
    for (int64_t step = 1; step < n; ++step) {
        // fold the last pick into the running min distances, then take the
        // farthest unpicked point; ties break toward the lowest index
        double best = -1.0;
        int64_t best_i = -1;
        for (int64_t i = 0; i < k; ++i) {
            double d2 = 0.0;
            for (int64_t c = 0; c < 3; ++c) {
                const double d = points(i, c) - points(current, c);
                d2 += d * d;
            }
            min_d2[static_cast<size_t>(i)] = std::min(min_d2[static_cast<size_t>(i)], d2);
            if (!picked[static_cast<size_t>(i)] && min_d2[static_cast<size_t>(i)] > best) {
                best = min_d2[static_cast<size_t>(i)];
                best_i = i;
            }
        }
        current = best_i;
        picks.push_back(current);
        picked[static_cast<size_t>(current)] = 1;
    }
    return picks;
}

} // namespace dmflow
