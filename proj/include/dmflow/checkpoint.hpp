#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dmflow/nn.hpp"
#include "dmflow/tensor.hpp"

namespace dmflow {

// Versioned little-endian container of named f64 tensors plus an embedded
// JSON config snapshot. Save/load/save round trips are byte-identical.
struct Checkpoint {
    std::string config_json;
    std::vector<std::pair<std::string, Tensor>> tensors;  // ordered

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Appends every parameter of the store, in registration order.
void store_params(Checkpoint& ckpt, const ParamStore& store);

// Copies values into matching parameters; every parameter must be present
// with an identical shape.
void load_params(const Checkpoint& ckpt, ParamStore& store);

} // namespace dmflow
