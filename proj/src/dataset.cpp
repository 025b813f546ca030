#include "dmflow/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dmflow/error.hpp"

namespace dmflow {

namespace {

constexpr char kMagic[4] = {'R', 'D', 'M', 'C'};
constexpr uint32_t kVersion = 1;
constexpr double kTau = 6.283185307179586476925286766559;

} // namespace

MotionKind motion_kind_from_string(const std::string& s) {
    if (s == "rigid_rotation") return MotionKind::rigid_rotation;
    if (s == "sinusoidal_bend") return MotionKind::sinusoidal_bend;
    if (s == "swing_chain") return MotionKind::swing_chain;
    if (s == "pulse_scale") return MotionKind::pulse_scale;
    fail("invalid_arg", "unknown motion kind: " + s);
}

BasePrimitive primitive_from_string(const std::string& s) {
    if (s == "sphere") return BasePrimitive::sphere;
    if (s == "cylinder") return BasePrimitive::cylinder;
    if (s == "box") return BasePrimitive::box;
    if (s == "chain") return BasePrimitive::chain;
    fail("invalid_arg", "unknown primitive: " + s);
}

std::string to_string(MotionKind k) {
    switch (k) {
    case MotionKind::rigid_rotation: return "rigid_rotation";
    case MotionKind::sinusoidal_bend: return "sinusoidal_bend";
    case MotionKind::swing_chain: return "swing_chain";
    case MotionKind::pulse_scale: return "pulse_scale";
    }
    return "?";
}

std::string to_string(BasePrimitive p) {
    switch (p) {
    case BasePrimitive::sphere: return "sphere";
    case BasePrimitive::cylinder: return "cylinder";
    case BasePrimitive::box: return "box";
    case BasePrimitive::chain: return "chain";
    }
    return "?";
}

// ------------------------------------------------------------ primitives

namespace {

StaticMesh finish_mesh(std::vector<std::array<double, 3>> verts,
                       std::vector<std::array<uint32_t, 3>> faces) {
    StaticMesh m;
    m.vertices = Tensor({static_cast<int64_t>(verts.size()), 3});
    for (size_t v = 0; v < verts.size(); ++v) {
        for (int64_t k = 0; k < 3; ++k) {
            m.vertices(static_cast<int64_t>(v), k) = verts[v][static_cast<size_t>(k)];
        }
    }
    m.faces = std::move(faces);
    m.real_vertex_count = static_cast<int64_t>(verts.size());
    m.real_face_count = m.face_count();
    return m;
}

StaticMesh make_sphere(int64_t res) {
    const int64_t rings = res, segs = 2 * res;
    std::vector<std::array<double, 3>> verts;
    std::vector<std::array<uint32_t, 3>> faces;
    verts.push_back({0.0, 1.0, 0.0});  // top pole
    for (int64_t r = 1; r < rings; ++r) {
        const double phi = M_PI * static_cast<double>(r) / static_cast<double>(rings);
        for (int64_t s = 0; s < segs; ++s) {
            const double th = kTau * static_cast<double>(s) / static_cast<double>(segs);
            verts.push_back({std::sin(phi) * std::cos(th), std::cos(phi), std::sin(phi) * std::sin(th)});
        }
    }
    verts.push_back({0.0, -1.0, 0.0});  // bottom pole
    const uint32_t bottom = static_cast<uint32_t>(verts.size() - 1);
    auto ring_at = [&](int64_t r, int64_t s) {
        return static_cast<uint32_t>(1 + (r - 1) * segs + (s % segs));
    };
    for (int64_t s = 0; s < segs; ++s) {
        faces.push_back({0, ring_at(1, s + 1), ring_at(1, s)});
    }
    for (int64_t r = 1; r + 1 < rings; ++r) {
        for (int64_t s = 0; s < segs; ++s) {
            const uint32_t a = ring_at(r, s), b = ring_at(r, s + 1);
            const uint32_t c = ring_at(r + 1, s), d = ring_at(r + 1, s + 1);
            faces.push_back({a, b, c});
            faces.push_back({b, d, c});
        }
    }
    for (int64_t s = 0; s < segs; ++s) {
        faces.push_back({ring_at(rings - 1, s), ring_at(rings - 1, s + 1), bottom});
    }
    return finish_mesh(std::move(verts), std::move(faces));
}

StaticMesh make_cylinder(int64_t res) {
    const int64_t rows = res, segs = 2 * (res - 1);
    std::vector<std::array<double, 3>> verts;
    std::vector<std::array<uint32_t, 3>> faces;
    for (int64_t r = 0; r < rows; ++r) {
        const double y = 1.0 - 2.0 * static_cast<double>(r) / static_cast<double>(rows - 1);
        for (int64_t s = 0; s < segs; ++s) {
            const double th = kTau * static_cast<double>(s) / static_cast<double>(segs);
            verts.push_back({0.5 * std::cos(th), y, 0.5 * std::sin(th)});
        }
    }
    verts.push_back({0.0, 1.0, 0.0});
    verts.push_back({0.0, -1.0, 0.0});
    const uint32_t top = static_cast<uint32_t>(verts.size() - 2);
    const uint32_t bot = static_cast<uint32_t>(verts.size() - 1);
    auto at = [&](int64_t r, int64_t s) { return static_cast<uint32_t>(r * segs + (s % segs)); };
    for (int64_t r = 0; r + 1 < rows; ++r) {
        for (int64_t s = 0; s < segs; ++s) {
            faces.push_back({at(r, s), at(r, s + 1), at(r + 1, s)});
            faces.push_back({at(r, s + 1), at(r + 1, s + 1), at(r + 1, s)});
        }
    }
    for (int64_t s = 0; s < segs; ++s) {
        faces.push_back({top, at(0, s + 1), at(0, s)});
        faces.push_back({bot, at(rows - 1, s), at(rows - 1, s + 1)});
    }
    return finish_mesh(std::move(verts), std::move(faces));
}

// six independent 3x3 face grids; vertices along shared cube edges are
// duplicated, which is fine for silhouettes and deformation
StaticMesh make_box(int64_t /*res*/) {
    const int64_t g = 3;
    std::vector<std::array<double, 3>> verts;
    std::vector<std::array<uint32_t, 3>> faces;
    // axis = fixed coordinate, sign = its value; (u, v) span the other two
    for (int axis = 0; axis < 3; ++axis) {
        for (int sign = -1; sign <= 1; sign += 2) {
            const uint32_t base = static_cast<uint32_t>(verts.size());
            for (int64_t i = 0; i <= g; ++i) {
                for (int64_t j = 0; j <= g; ++j) {
                    const double u = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(g);
                    const double v = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(g);
                    std::array<double, 3> p{};
                    p[static_cast<size_t>(axis)] = static_cast<double>(sign);
                    p[static_cast<size_t>((axis + 1) % 3)] = u;
                    p[static_cast<size_t>((axis + 2) % 3)] = v;
                    verts.push_back(p);
                }
            }
            for (int64_t i = 0; i < g; ++i) {
                for (int64_t j = 0; j < g; ++j) {
                    const uint32_t a = base + static_cast<uint32_t>(i * (g + 1) + j);
                    const uint32_t b = a + 1;
                    const uint32_t c = a + static_cast<uint32_t>(g + 1);
                    const uint32_t d = c + 1;
                    faces.push_back({a, b, c});
                    faces.push_back({b, d, c});
                }
            }
        }
    }
    return finish_mesh(std::move(verts), std::move(faces));
}

StaticMesh make_chain(int64_t res) {
    const int64_t links = std::max<int64_t>(3, res / 2);
    std::vector<std::array<double, 3>> verts;
    std::vector<std::array<uint32_t, 3>> faces;
    const double link_h = 2.0 / static_cast<double>(links);
    const double half_w = 0.22;
    for (int64_t l = 0; l < links; ++l) {
        const double y_top = 1.0 - static_cast<double>(l) * link_h;
        const double y_bot = y_top - 0.85 * link_h;
        const uint32_t base = static_cast<uint32_t>(verts.size());
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = -1; dx <= 1; dx += 2) {
                for (int dz = -1; dz <= 1; dz += 2) {
                    verts.push_back({half_w * dx, dy == 0 ? y_top : y_bot, half_w * dz});
                }
            }
        }
        // corner order: (top/bottom) x (x-,x+) x (z-,z+)
        const uint32_t quads[6][4] = {
            {0, 1, 3, 2},  // top
            {4, 6, 7, 5},  // bottom
            {0, 2, 6, 4},  // x-
            {1, 5, 7, 3},  // x+
            {0, 4, 5, 1},  // z-
            {2, 3, 7, 6},  // z+
        };
        for (const auto& q : quads) {
            faces.push_back({base + q[0], base + q[1], base + q[2]});
            faces.push_back({base + q[0], base + q[2], base + q[3]});
        }
    }
    return finish_mesh(std::move(verts), std::move(faces));
}

} // namespace

StaticMesh make_primitive(BasePrimitive primitive, int64_t resolution) {
    require(resolution >= 3, "invalid_arg", "make_primitive: resolution must be >= 3");
    switch (primitive) {
    case BasePrimitive::sphere: return make_sphere(resolution);
    case BasePrimitive::cylinder: return make_cylinder(resolution);
    case BasePrimitive::box: return make_box(resolution);
    case BasePrimitive::chain: return make_chain(resolution);
    }
    fail("invalid_arg", "make_primitive: unknown primitive");
}

// --------------------------------------------------------------- motions

namespace {

std::array<double, 3> rotate_about(const std::array<double, 3>& axis, double angle,
                                   const std::array<double, 3>& v) {
    // Rodrigues
    const double c = std::cos(angle), s = std::sin(angle);
    const double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    std::array<double, 3> cr{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2],
                             axis[0] * v[1] - axis[1] * v[0]};
    std::array<double, 3> out{};
    for (int k = 0; k < 3; ++k) {
        out[static_cast<size_t>(k)] = v[static_cast<size_t>(k)] * c + cr[static_cast<size_t>(k)] * s +
                                      axis[static_cast<size_t>(k)] * dot * (1.0 - c);
    }
    return out;
}

std::array<double, 3> unit_axis(Rng& rng) {
    std::array<double, 3> a{rng.gauss(), rng.gauss(), rng.gauss()};
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    if (n < 1e-12) return {0.0, 1.0, 0.0};
    for (double& x : a) x /= n;
    return a;
}

} // namespace

void rigid_rotation_params(const MotionSpec& spec, int64_t frame, std::array<double, 3>& axis,
                           double& angle) {
    Rng rng(spec.seed);
    axis = unit_axis(rng);
    angle = spec.amplitude *
            std::sin(kTau * spec.frequency * static_cast<double>(frame) /
                     static_cast<double>(spec.frame_count));
}

DynamicSequence generate_clip(const MotionSpec& spec) {
    require(spec.frame_count >= 1, "invalid_arg", "generate_clip: frame_count must be >= 1");
    require(spec.amplitude >= 0.0, "invalid_arg", "generate_clip: amplitude must be >= 0");
    const StaticMesh base = make_primitive(spec.primitive, spec.resolution);
    const int64_t n = base.vertex_count();
    const int64_t t_count = spec.frame_count;

    Rng rng(spec.seed);
    const std::array<double, 3> axis = unit_axis(rng);
    const double phase = rng.uniform(0.0, kTau);

    DynamicSequence seq;
    seq.frames = Tensor({t_count, n, 3});
    seq.faces = base.faces;
    seq.real_vertex_count = base.real_vertex_count;
    seq.real_face_count = base.real_face_count;

    const double omega = kTau * spec.frequency / static_cast<double>(t_count);
    for (int64_t t = 0; t < t_count; ++t) {
        const double wave = std::sin(omega * static_cast<double>(t));
        for (int64_t v = 0; v < n; ++v) {
            std::array<double, 3> p{base.vertices(v, 0), base.vertices(v, 1), base.vertices(v, 2)};
            std::array<double, 3> q{};
            switch (spec.kind) {
            case MotionKind::rigid_rotation:
                q = rotate_about(axis, spec.amplitude * wave, p);
                break;
            case MotionKind::sinusoidal_bend: {
                // lateral sway growing quadratically with height
                const double height = 0.5 * (p[1] + 1.0);
                q = p;
                q[0] += spec.amplitude * height * height * wave;
                break;
            }
            case MotionKind::swing_chain: {
                // traveling-wave rotation about z, pivot at the top
                const std::array<double, 3> pivot{0.0, 1.0, 0.0};
                const double lag = 1.5 * (1.0 - p[1]);
                const double ang =
                    spec.amplitude * std::sin(omega * static_cast<double>(t) - lag + phase * 0.0) *
                    (0.25 + 0.375 * (1.0 - p[1]));
                std::array<double, 3> rel{p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]};
                q = rotate_about({0.0, 0.0, 1.0}, ang, rel);
                for (int k = 0; k < 3; ++k) q[static_cast<size_t>(k)] += pivot[static_cast<size_t>(k)];
                break;
            }
            case MotionKind::pulse_scale: {
                const double s = 1.0 + spec.amplitude * wave;
                q = {p[0] * s, p[1] * s, p[2] * s};
                break;
            }
            }
            for (int64_t k = 0; k < 3; ++k) {
                seq.frames.at3(t, v, k) = q[static_cast<size_t>(k)];
            }
        }
    }
    return seq;
}

// -------------------------------------------------------------- curation

std::vector<DynamicSequence> slice_clips(const DynamicSequence& seq, int64_t t) {
    require(t >= 1, "invalid_arg", "slice_clips: T must be >= 1");
    std::vector<DynamicSequence> out;
    const int64_t total = seq.frame_count();
    const int64_t n = seq.vertex_count();
    for (int64_t begin = 0; begin + t <= total; begin += t) {
        DynamicSequence clip;
        clip.frames = Tensor({t, n, 3});
        for (int64_t f = 0; f < t; ++f) {
            for (int64_t v = 0; v < n; ++v) {
                for (int64_t k = 0; k < 3; ++k) {
                    clip.frames.at3(f, v, k) = seq.frames.at3(begin + f, v, k);
                }
            }
        }
        clip.faces = seq.faces;
        clip.real_vertex_count = seq.real_vertex_count;
        clip.real_face_count = seq.real_face_count;
        out.push_back(std::move(clip));
    }
    return out;
}

bool is_static(const DynamicSequence& clip, double threshold) {
    double max_disp = 0.0;
    for (int64_t t = 1; t < clip.frame_count(); ++t) {
        for (int64_t v = 0; v < clip.real_vertex_count; ++v) {
            double d2 = 0.0;
            for (int64_t k = 0; k < 3; ++k) {
                const double d = clip.frames.at3(t, v, k) - clip.frames.at3(0, v, k);
                d2 += d * d;
            }
            max_disp = std::max(max_disp, std::sqrt(d2));
        }
    }
    return max_disp < threshold;
}

bool passes_size_filter(const StaticMesh& mesh) {
    require(mesh.real_vertex_count > 0, "invalid_arg", "passes_size_filter: zero vertices");
    if (mesh.real_vertex_count >= 8192) return false;
    const double ratio = static_cast<double>(mesh.real_face_count) /
                         static_cast<double>(mesh.real_vertex_count);
    return ratio < 2.5;
}

bool passes_size_filter(const DynamicSequence& seq) {
    require(seq.real_vertex_count > 0, "invalid_arg", "passes_size_filter: zero vertices");
    if (seq.real_vertex_count >= 8192) return false;
    const double ratio =
        static_cast<double>(seq.real_face_count) / static_cast<double>(seq.real_vertex_count);
    return ratio < 2.5;
}

void pad_clip(DynamicSequence& clip, int64_t target_vertices, int64_t target_faces) {
    const int64_t n = clip.vertex_count();
    const int64_t m = clip.face_count();
    require(n <= target_vertices && m <= target_faces, "invalid_arg",
            "pad_clip: clip exceeds target sizes");
    if (n == target_vertices && m == target_faces) return;

    const int64_t t_count = clip.frame_count();
    Tensor padded({t_count, target_vertices, 3});
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                padded.at3(t, v, k) = clip.frames.at3(t, v, k);
            }
        }
    }
    clip.frames = std::move(padded);

    const uint32_t sentinel = static_cast<uint32_t>(clip.real_vertex_count);
    clip.faces.resize(static_cast<size_t>(target_faces), {sentinel, sentinel, sentinel});
}

void unpad_clip(DynamicSequence& clip) {
    const int64_t n = clip.real_vertex_count;
    const int64_t t_count = clip.frame_count();
    Tensor frames({t_count, n, 3});
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                frames.at3(t, v, k) = clip.frames.at3(t, v, k);
            }
        }
    }
    clip.frames = std::move(frames);
    clip.faces.resize(static_cast<size_t>(clip.real_face_count));
}

ClipRecord simulate_misalignment(const DynamicSequence& clip, Rng& rng) {
    ClipRecord rec;
    rec.sequence = clip;
    rec.condition_frame_index = rng.uniform_int(clip.frame_count());
    return rec;
}

void snap_to_f32(DynamicSequence& seq) {
    for (int64_t i = 0; i < seq.frames.size(); ++i) {
        seq.frames[i] = static_cast<double>(static_cast<float>(seq.frames[i]));
    }
}

// ------------------------------------------------------------ .dmc format

namespace {

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is, const char* what) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    require(is.good(), "truncated", std::string(".dmc: truncated reading ") + what);
    return v;
}

} // namespace

void write_clip(const ClipRecord& record, const std::string& path) {
    const DynamicSequence& seq = record.sequence;
    require(record.condition_frame_index >= 0 && record.condition_frame_index < seq.frame_count(),
            "invalid_arg", "write_clip: condition frame index out of range");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), "io", "write_clip: cannot open " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(seq.frame_count()));
    write_u32(os, static_cast<uint32_t>(seq.vertex_count()));
    write_u32(os, static_cast<uint32_t>(seq.face_count()));
    write_u32(os, static_cast<uint32_t>(seq.real_vertex_count));
    write_u32(os, static_cast<uint32_t>(seq.real_face_count));
    write_u32(os, static_cast<uint32_t>(record.condition_frame_index));
    for (const auto& f : seq.faces) {
        write_u32(os, f[0]);
        write_u32(os, f[1]);
        write_u32(os, f[2]);
    }
    for (int64_t i = 0; i < seq.frames.size(); ++i) {
        const float v = static_cast<float>(seq.frames[i]);
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    const uint8_t flag = record.silhouette.has_value() ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&flag), 1);
    if (flag) {
        const SilhouetteVideo& sil = *record.silhouette;
        require(sil.frames == seq.frame_count(), "shape_mismatch",
                "write_clip: silhouette frame count mismatch");
        write_u32(os, static_cast<uint32_t>(sil.height));
        write_u32(os, static_cast<uint32_t>(sil.width));
        os.write(reinterpret_cast<const char*>(sil.data.data()),
                 static_cast<std::streamsize>(sil.data.size()));
    }
    require(os.good(), "io", "write_clip: write failed for " + path);
}

ClipRecord read_clip(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "io", "read_clip: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, kMagic, 4) == 0, "bad_magic",
            ".dmc: bad magic in " + path);
    const uint32_t version = read_u32(is, "version");
    require(version == kVersion, "bad_version",
            ".dmc: unsupported version " + std::to_string(version) + " in " + path);

    const uint32_t t_count = read_u32(is, "T");
    const uint32_t n = read_u32(is, "N");
    const uint32_t m = read_u32(is, "M");
    const uint32_t real_n = read_u32(is, "real_N");
    const uint32_t real_m = read_u32(is, "real_M");
    const uint32_t cond_idx = read_u32(is, "condition_frame_index");

    ClipRecord rec;
    rec.condition_frame_index = cond_idx;
    rec.sequence.real_vertex_count = real_n;
    rec.sequence.real_face_count = real_m;
    rec.sequence.faces.resize(m);
    for (auto& f : rec.sequence.faces) {
        f[0] = read_u32(is, "face");
        f[1] = read_u32(is, "face");
        f[2] = read_u32(is, "face");
    }
    rec.sequence.frames = Tensor({static_cast<int64_t>(t_count), static_cast<int64_t>(n), 3});
    for (int64_t i = 0; i < rec.sequence.frames.size(); ++i) {
        float v = 0.0f;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        require(is.good(), "truncated", ".dmc: truncated vertex data in " + path);
        rec.sequence.frames[i] = static_cast<double>(v);
    }
    uint8_t flag = 0;
    is.read(reinterpret_cast<char*>(&flag), 1);
    require(is.good(), "truncated", ".dmc: truncated silhouette flag in " + path);
    if (flag) {
        SilhouetteVideo sil;
        sil.frames = t_count;
        sil.height = read_u32(is, "silhouette H");
        sil.width = read_u32(is, "silhouette W");
        sil.data.resize(static_cast<size_t>(sil.frames * sil.height * sil.width));
        is.read(reinterpret_cast<char*>(sil.data.data()),
                static_cast<std::streamsize>(sil.data.size()));
        require(is.good(), "truncated", ".dmc: truncated silhouette data in " + path);
        rec.silhouette = std::move(sil);
    }
    require(rec.condition_frame_index < static_cast<int64_t>(t_count), "invalid_arg",
            ".dmc: condition frame index out of range in " + path);
    return rec;
}

std::vector<std::string> generate_dataset(const CurationConfig& cfg, const std::string& out_dir) {
    require(cfg.count >= 1, "invalid_arg", "generate_dataset: count must be >= 1");
    std::filesystem::create_directories(out_dir);

    const int64_t seq_frames = cfg.sequence_frames > 0 ? cfg.sequence_frames : cfg.clip_frames;
    Camera cam;
    cam.width = cfg.silhouette_resolution;
    cam.height = cfg.silhouette_resolution;

    std::vector<std::string> paths;
    int64_t accepted = 0;
    for (int64_t attempt = 0; accepted < cfg.count; ++attempt) {
        require(attempt < cfg.count * 64 + 1024, "curation_stalled",
                "generate_dataset: filters rejected too many candidates");
        Rng rng(hash_mix(cfg.seed, static_cast<uint64_t>(attempt)));

        MotionSpec spec;
        spec.kind = static_cast<MotionKind>(rng.uniform_int(4));
        spec.primitive = static_cast<BasePrimitive>(rng.uniform_int(4));
        spec.amplitude = rng.uniform(cfg.min_amplitude, cfg.max_amplitude);
        spec.frequency = 1.0;
        spec.frame_count = seq_frames;
        spec.resolution = cfg.min_resolution + rng.uniform_int(cfg.max_resolution - cfg.min_resolution + 1);
        spec.seed = hash_mix(cfg.seed, 0x10000u + static_cast<uint64_t>(attempt));

        DynamicSequence seq = generate_clip(spec);
        snap_to_f32(seq);

        for (DynamicSequence& window : slice_clips(seq, cfg.clip_frames)) {
            if (accepted >= cfg.count) break;
            ClipRecord rec = simulate_misalignment(window, rng);
            rec.metadata = spec;

            StaticMesh cond = rec.condition_mesh();
            if (!passes_size_filter(cond)) continue;
            if (rec.sequence.vertex_count() > cfg.pad_vertices ||
                rec.sequence.face_count() > cfg.pad_faces) {
                continue;
            }
            pad_clip(rec.sequence, cfg.pad_vertices, cfg.pad_faces);

            Canonicalized canon = canonicalize(rec.condition_mesh(), &rec.sequence);
            if (is_static(*canon.seq, cfg.static_threshold)) continue;

            if (cfg.render_silhouettes) {
                rec.silhouette = render_silhouette_video(canon.seq->frames, rec.sequence.faces,
                                                         rec.sequence.real_face_count, cam);
            }

            char name[32];
            std::snprintf(name, sizeof(name), "clip_%05" PRId64 ".dmc", accepted);
            const std::string path = (std::filesystem::path(out_dir) / name).string();
            write_clip(rec, path);
            paths.push_back(path);
            ++accepted;
        }
    }
    return paths;
}

} // namespace dmflow
