#pragma once

#include "dmflow/silhouette.hpp"
#include "dmflow/tensor.hpp"

namespace dmflow {

// Mean over frames and real vertices of the per-vertex L2 distance.
// pred and gt are T x N x 3 in the same normalization frame.
double eucd(const Tensor& pred, const Tensor& gt, int64_t real_vertex_count);

// Per-frame 10*log10(1/MSE) on {0,1} values, averaged over frames; identical
// frames cap at 100 dB.
double silhouette_psnr(const SilhouetteVideo& pred, const SilhouetteVideo& ref);

// Mean per-frame intersection-over-union; empty unions count as 1.
double silhouette_iou(const SilhouetteVideo& pred, const SilhouetteVideo& ref);

// exp(-mean ||second temporal difference|| / scale) with
// scale = mean ||first difference|| + 1e-8. In [0,1]; 1 for linear or static
// motion. Requires T >= 3.
double smoothness(const Tensor& seq, int64_t real_vertex_count);

} // namespace dmflow
