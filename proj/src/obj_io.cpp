#include "dmflow/obj_io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "dmflow/error.hpp"

namespace dmflow {

StaticMesh load_obj(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "io", "load_obj: cannot open " + path);

    std::vector<std::array<double, 3>> verts;
    std::vector<std::array<uint32_t, 3>> faces;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            std::array<double, 3> v{};
            require(static_cast<bool>(ls >> v[0] >> v[1] >> v[2]), "io",
                    "load_obj: malformed vertex line: " + line);
            verts.push_back(v);
        } else if (tag == "f") {
            std::vector<int64_t> idx;
            std::string tok;
            while (ls >> tok) {
                // keep the vertex index, drop /vt/vn parts
                const size_t slash = tok.find('/');
                if (slash != std::string::npos) tok = tok.substr(0, slash);
                int64_t i = std::stoll(tok);
                if (i < 0) i = static_cast<int64_t>(verts.size()) + i + 1;  // relative index
                require(i >= 1 && i <= static_cast<int64_t>(verts.size()), "io",
                        "load_obj: face index out of range in: " + line);
                idx.push_back(i - 1);
            }
            require(idx.size() >= 3, "io", "load_obj: face with fewer than 3 vertices: " + line);
            for (size_t t = 1; t + 1 < idx.size(); ++t) {
                faces.push_back({static_cast<uint32_t>(idx[0]), static_cast<uint32_t>(idx[t]),
                                 static_cast<uint32_t>(idx[t + 1])});
            }
        }
        // all other records ignored
    }
    require(!verts.empty(), "io", "load_obj: no vertices in " + path);

    StaticMesh mesh;
    mesh.vertices = Tensor({static_cast<int64_t>(verts.size()), 3});
    for (size_t v = 0; v < verts.size(); ++v) {
        for (int64_t k = 0; k < 3; ++k) {
            mesh.vertices(static_cast<int64_t>(v), k) = verts[v][static_cast<size_t>(k)];
        }
    }
    mesh.faces = std::move(faces);
    mesh.real_vertex_count = static_cast<int64_t>(verts.size());
    mesh.real_face_count = mesh.face_count();
    return mesh;
}

void save_obj(const std::string& path, const Tensor& vertices,
              std::span<const std::array<uint32_t, 3>> faces, int64_t real_vertex_count,
              int64_t real_face_count) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "io", "save_obj: cannot open " + path + " for writing");
    for (int64_t v = 0; v < real_vertex_count; ++v) {
        std::fprintf(f, "v %.6f %.6f %.6f\n", vertices(v, 0), vertices(v, 1), vertices(v, 2));
    }
    for (int64_t i = 0; i < real_face_count; ++i) {
        const auto& face = faces[static_cast<size_t>(i)];
        std::fprintf(f, "f %" PRIu32 " %" PRIu32 " %" PRIu32 "\n", face[0] + 1, face[1] + 1,
                     face[2] + 1);
    }
    const bool ok = std::fclose(f) == 0;
    require(ok, "io", "save_obj: write failed for " + path);
}

void export_obj_sequence(const Tensor& frames, std::span<const std::array<uint32_t, 3>> faces,
                         int64_t real_vertex_count, int64_t real_face_count,
                         const std::string& dir) {
    std::filesystem::create_directories(dir);
    const int64_t t_count = frames.dim(0);
    const int64_t n = frames.dim(1);
    for (int64_t t = 0; t < t_count; ++t) {
        Tensor frame({n, 3});
        for (int64_t v = 0; v < n; ++v) {
            for (int64_t k = 0; k < 3; ++k) {
                frame(v, k) = frames.at3(t, v, k);
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04" PRId64 ".obj", t);
        save_obj((std::filesystem::path(dir) / name).string(), frame, faces, real_vertex_count,
                 real_face_count);
    }
}

} // namespace dmflow
