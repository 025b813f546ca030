#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dmflow/tensor.hpp"

namespace dmflow {

// Fixed-topology triangle mesh. Rows past real_vertex_count are zero padding;
// faces past real_face_count are degenerate sentinel triples (s, s, s) with
// s = real_vertex_count of the padded mesh.
struct StaticMesh {
    Tensor vertices;  // N x 3
    std::vector<std::array<uint32_t, 3>> faces;
    int64_t real_vertex_count = 0;
    int64_t real_face_count = 0;

    int64_t vertex_count() const { return vertices.rank() == 0 ? 0 : vertices.dim(0); }
    int64_t face_count() const { return static_cast<int64_t>(faces.size()); }
};

// T frames over the same topology.
struct DynamicSequence {
    Tensor frames;  // T x N x 3
    std::vector<std::array<uint32_t, 3>> faces;
    int64_t real_vertex_count = 0;
    int64_t real_face_count = 0;

    int64_t frame_count() const { return frames.rank() == 0 ? 0 : frames.dim(0); }
    int64_t vertex_count() const { return frames.rank() == 0 ? 0 : frames.dim(1); }
    int64_t face_count() const { return static_cast<int64_t>(faces.size()); }
    Tensor frame(int64_t t) const;                 // N x 3 copy
    StaticMesh frame_mesh(int64_t t) const;        // frame t as a static mesh
};

// Dual-center normalization parameters. c_first is absent at inference, where
// only the condition mesh exists.
struct NormParams {
    std::array<double, 3> c_cond{0.0, 0.0, 0.0};
    std::optional<std::array<double, 3>> c_first;
    double scale = 1.0;
};

// (v_cond, jump, rel_traj) triple in the normalized frame; rel_traj frame 0 is
// exactly zero and padded rows are zero.
struct Decomposition {
    Tensor v_cond;    // N x 3
    Tensor jump;      // N x 3
    Tensor rel_traj;  // T x N x 3
    NormParams norm;
    int64_t real_vertex_count = 0;

    int64_t frame_count() const { return rel_traj.rank() == 0 ? 0 : rel_traj.dim(0); }
    int64_t vertex_count() const { return v_cond.rank() == 0 ? 0 : v_cond.dim(0); }
    Tensor traj_matrix() const;  // N x (T*3), row v = [f0.xyz, f1.xyz, ...]
};

// Symmetric boolean adjacency with a true diagonal; true off-diagonal exactly
// for vertex pairs sharing a face edge. Padded rows/columns are false
// off-diagonal because no real face references them.
struct AdjacencyMask {
    int64_t n = 0;
    std::vector<uint8_t> allow;  // n*n row-major

    bool at(int64_t i, int64_t j) const { return allow[static_cast<size_t>(i * n + j)] != 0; }
};

AdjacencyMask build_adjacency(std::span<const std::array<uint32_t, 3>> faces, int64_t n);

struct Canonicalized {
    StaticMesh cond;
    std::optional<DynamicSequence> seq;
    NormParams norm;
};

// Centers the condition at its own centroid and (when present) every frame of
// the sequence at the centroid of frame 0, then divides both by
// s = max |centered condition coordinate|. Centroids, s and the static check
// use real vertices only. dual_center == false centers everything at the
// condition centroid instead (ablation path).
Canonicalized canonicalize(const StaticMesh& cond, const DynamicSequence* seq,
                           bool dual_center = true);

Decomposition decompose(const Tensor& cond_norm, const Tensor& frames_norm,
                        int64_t real_vertex_count, NormParams norm);

// frames[t] = v_cond + jump + rel_traj[t]; exact arithmetic inverse of
// decompose.
Tensor recompose(const Decomposition& d);

// Applies the inverse normalization (scale then condition-center translation)
// to normalized frames, returning coordinates in the condition-centered world
// frame.
Tensor denormalize(const Tensor& frames_norm, const NormParams& norm);

// Greedy maximin farthest point sampling over the given points (callers pass
// real vertices only). Deterministic: ties break toward the lowest index.
std::vector<int64_t> fps_sample(const Tensor& points, int64_t n, int64_t start = 0);

} // namespace dmflow
