#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmflow/mesh.hpp"
#include "dmflow/rng.hpp"
#include "dmflow/silhouette.hpp"

namespace dmflow {

enum class MotionKind { rigid_rotation, sinusoidal_bend, swing_chain, pulse_scale };
enum class BasePrimitive { sphere, cylinder, box, chain };

MotionKind motion_kind_from_string(const std::string& s);
BasePrimitive primitive_from_string(const std::string& s);
std::string to_string(MotionKind k);
std::string to_string(BasePrimitive p);

struct MotionSpec {
    MotionKind kind = MotionKind::rigid_rotation;
    BasePrimitive primitive = BasePrimitive::sphere;
    double amplitude = 0.5;
    double frequency = 1.0;
    int64_t frame_count = 64;
    uint64_t seed = 0;
    int64_t resolution = 8;  // tessellation control for the base primitive
};

StaticMesh make_primitive(BasePrimitive primitive, int64_t resolution);

// Deterministic given the spec; rigid_rotation preserves pairwise distances
// frame by frame.
DynamicSequence generate_clip(const MotionSpec& spec);

// Rotation applied by generate_clip for rigid_rotation at frame t; exposed so
// tests can rebuild frames independently.
void rigid_rotation_params(const MotionSpec& spec, int64_t frame,
                           std::array<double, 3>& axis, double& angle);

// Non-overlapping windows of exactly t frames; the trailing remainder is
// dropped.
std::vector<DynamicSequence> slice_clips(const DynamicSequence& seq, int64_t t = 64);

// True iff the max over vertices of the max-over-frames displacement from
// frame 0 is below threshold. Expects canonicalized input.
bool is_static(const DynamicSequence& clip, double threshold = 0.01);

// real_vertex_count < 8192 and face/vertex ratio < 2.5, both strict.
bool passes_size_filter(const StaticMesh& mesh);
bool passes_size_filter(const DynamicSequence& seq);

// Pads to target sizes: zero vertex rows, sentinel faces (s,s,s) with
// s = real_vertex_count. Idempotent; no-op on inputs already at the targets.
void pad_clip(DynamicSequence& clip, int64_t target_vertices = 8192, int64_t target_faces = 20480);
void unpad_clip(DynamicSequence& clip);

struct ClipRecord {
    DynamicSequence sequence;  // raw (un-normalized) frames
    int64_t condition_frame_index = 0;
    std::optional<SilhouetteVideo> silhouette;
    std::optional<MotionSpec> metadata;  // in-memory only, not serialized

    StaticMesh condition_mesh() const { return sequence.frame_mesh(condition_frame_index); }
};

// Uniform condition frame draw from [0, T); the target sequence is unchanged.
ClipRecord simulate_misalignment(const DynamicSequence& clip, Rng& rng);

// .dmc, little-endian: magic "RDMC", u32 version=1, u32 T, u32 N, u32 M,
// u32 real_N, u32 real_M, u32 condition_frame_index, M x 3 u32 faces,
// T x N x 3 f32 vertices, u8 silhouette flag [, u32 H, u32 W, T*H*W u8 masks].
void write_clip(const ClipRecord& record, const std::string& path);
ClipRecord read_clip(const std::string& path);

struct CurationConfig {
    int64_t count = 256;           // accepted clips to emit
    int64_t clip_frames = 64;      // T
    int64_t sequence_frames = 0;   // generated length; 0 means clip_frames
    uint64_t seed = 0;
    int64_t pad_vertices = 8192;
    int64_t pad_faces = 20480;
    double static_threshold = 0.01;
    double min_amplitude = 0.2;
    double max_amplitude = 0.6;
    int64_t min_resolution = 6;
    int64_t max_resolution = 8;
    bool render_silhouettes = false;
    int64_t silhouette_resolution = 256;
};

// Procedural generation + curation: generate, slice, misalign, canonicalize
// for the static check, filter, pad, snap to f32, optionally render, write.
// A pure function of the config: re-runs produce byte-identical files.
// Returns the written paths in order.
std::vector<std::string> generate_dataset(const CurationConfig& cfg, const std::string& out_dir);

// Snaps every coordinate to the nearest f32 (the .dmc storage precision) so
// in-memory records round trip bit-exactly.
void snap_to_f32(DynamicSequence& seq);

} // namespace dmflow
