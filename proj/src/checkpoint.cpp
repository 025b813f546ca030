#include "dmflow/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "dmflow/error.hpp"

namespace dmflow {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(is.good(), "truncated", std::string("checkpoint: truncated reading ") + what);
    return v;
}

} // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) {
            return &t;
        }
    }
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.good(), "io", "checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    write_pod<uint64_t>(os, ckpt.config_json.size());
    os.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
    write_pod<uint64_t>(os, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        write_pod<uint64_t>(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) {
            write_pod<int64_t>(os, t.dim(i));
        }
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * static_cast<int64_t>(sizeof(double))));
    }
    require(os.good(), "io", "checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "io", "checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, kMagic, 4) == 0, "bad_magic",
            "checkpoint: bad magic in " + path);
    const uint32_t version = read_pod<uint32_t>(is, "version");
    require(version == kVersion, "bad_version",
            "checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    const uint64_t json_len = read_pod<uint64_t>(is, "config length");
    ckpt.config_json.resize(json_len);
    is.read(ckpt.config_json.data(), static_cast<std::streamsize>(json_len));
    require(is.good(), "truncated", "checkpoint: truncated config");
    const uint64_t count = read_pod<uint64_t>(is, "tensor count");
    ckpt.tensors.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = read_pod<uint64_t>(is, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        require(is.good(), "truncated", "checkpoint: truncated tensor name");
        const uint32_t rank = read_pod<uint32_t>(is, "rank");
        std::vector<int64_t> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = read_pod<int64_t>(is, "dim");
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * static_cast<int64_t>(sizeof(double))));
        require(is.good(), "truncated", "checkpoint: truncated tensor data for " + name);
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void store_params(Checkpoint& ckpt, const ParamStore& store) {
    for (size_t i = 0; i < store.count(); ++i) {
        const Parameter& p = store.at(i);
        ckpt.tensors.emplace_back(p.name, p.value);
    }
}

void load_params(const Checkpoint& ckpt, ParamStore& store) {
    for (size_t i = 0; i < store.count(); ++i) {
        Parameter& p = store.at(i);
        const Tensor* t = ckpt.find(p.name);
        require(t != nullptr, "ckpt_mismatch", "checkpoint: missing parameter " + p.name);
        require(t->same_shape(p.value), "ckpt_mismatch",
                "checkpoint: shape mismatch for " + p.name + ": " + t->shape_str() + " vs " +
                    p.value.shape_str());
        p.value = *t;
    }
}

} // namespace dmflow
