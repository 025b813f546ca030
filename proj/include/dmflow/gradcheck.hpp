#pragma once

#include <functional>
#include <span>

#include "dmflow/graph.hpp"

namespace dmflow {

// The loss function evaluates the model at the current parameter values and
// returns the scalar loss. When with_grads is true it must also run backward
// so that Parameter::grad is populated (grads are zeroed by the checker
// beforehand). It must be deterministic: any noise inputs have to be fixed
// by the caller.
using LossFn = std::function<double(bool with_grads)>;

// Central-difference verification of reverse-mode gradients.
// Returns max over checked parameter entries of
//   |analytic - central_difference| / max(|central_difference|, 1e-8).
// max_entries_per_param < 0 checks every entry.
double check_gradients(const LossFn& loss_fn, std::span<Parameter* const> params, double step,
                       int64_t max_entries_per_param = -1);

} // namespace dmflow
