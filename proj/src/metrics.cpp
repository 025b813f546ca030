#include "dmflow/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dmflow/error.hpp"

namespace dmflow {

double eucd(const Tensor& pred, const Tensor& gt, int64_t real_vertex_count) {
    require(pred.same_shape(gt), "shape_mismatch",
            "eucd: " + pred.shape_str() + " vs " + gt.shape_str());
    require(pred.rank() == 3 && pred.dim(2) == 3, "shape_mismatch", "eucd: expected T x N x 3");
    const int64_t t_count = pred.dim(0);
    require(real_vertex_count >= 1 && real_vertex_count <= pred.dim(1), "invalid_arg",
            "eucd: bad real vertex count");
    double sum = 0.0;
    for (int64_t t = 0; t < t_count; ++t) {
        for (int64_t v = 0; v < real_vertex_count; ++v) {
            double d2 = 0.0;
            for (int64_t k = 0; k < 3; ++k) {
                const double d = pred.at3(t, v, k) - gt.at3(t, v, k);
                d2 += d * d;
            }
            sum += std::sqrt(d2);
        }
    }
    return sum / static_cast<double>(t_count * real_vertex_count);
}

double silhouette_psnr(const SilhouetteVideo& pred, const SilhouetteVideo& ref) {
    require(pred.frames == ref.frames, "shape_mismatch", "silhouette_psnr: frame count mismatch");
    require(pred.height == ref.height && pred.width == ref.width, "shape_mismatch",
            "silhouette_psnr: resolution mismatch");
    const int64_t pixels = pred.height * pred.width;
    double total = 0.0;
    for (int64_t t = 0; t < pred.frames; ++t) {
        int64_t wrong = 0;
        for (int64_t i = 0; i < pixels; ++i) {
            const size_t off = static_cast<size_t>(t * pixels + i);
            wrong += pred.data[off] != ref.data[off] ? 1 : 0;
        }
        double db = 100.0;
        if (wrong > 0) {
            const double mse = static_cast<double>(wrong) / static_cast<double>(pixels);
            db = std::min(100.0, 10.0 * std::log10(1.0 / mse));
        }
        total += db;
    }
    return total / static_cast<double>(pred.frames);
}

double silhouette_iou(const SilhouetteVideo& pred, const SilhouetteVideo& ref) {
    require(pred.frames == ref.frames && pred.height == ref.height && pred.width == ref.width,
            "shape_mismatch", "silhouette_iou: shape mismatch");
    const int64_t pixels = pred.height * pred.width;
    double total = 0.0;
    for (int64_t t = 0; t < pred.frames; ++t) {
        int64_t inter = 0, uni = 0;
        for (int64_t i = 0; i < pixels; ++i) {
            const size_t off = static_cast<size_t>(t * pixels + i);
            const bool a = pred.data[off] != 0, b = ref.data[off] != 0;
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
        total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return total / static_cast<double>(pred.frames);
}

double smoothness(const Tensor& seq, int64_t real_vertex_count) {
    require(seq.rank() == 3 && seq.dim(2) == 3, "shape_mismatch", "smoothness: expected T x N x 3");
    const int64_t t_count = seq.dim(0);
    require(t_count >= 3, "invalid_arg", "smoothness: needs at least 3 frames");
    require(real_vertex_count >= 1 && real_vertex_count <= seq.dim(1), "invalid_arg",
            "smoothness: bad real vertex count");

    auto norm3 = [&](int64_t t0, int64_t t1, int64_t t2, int64_t v) {
        // || x[t0] - 2 x[t1] + x[t2] || with coefficients (1, -2, 1) or
        // (1, -1, 0) for first differences when t2 < 0
        double d2 = 0.0;
        for (int64_t k = 0; k < 3; ++k) {
            double d = seq.at3(t0, v, k) - seq.at3(t1, v, k);
            if (t2 >= 0) d = seq.at3(t0, v, k) - 2.0 * seq.at3(t1, v, k) + seq.at3(t2, v, k);
            d2 += d * d;
        }
        return std::sqrt(d2);
    };

    double first = 0.0;
    for (int64_t t = 1; t < t_count; ++t) {
        for (int64_t v = 0; v < real_vertex_count; ++v) {
            first += norm3(t, t - 1, -1, v);
        }
    }
    first /= static_cast<double>((t_count - 1) * real_vertex_count);

    double second = 0.0;
    for (int64_t t = 1; t + 1 < t_count; ++t) {
        for (int64_t v = 0; v < real_vertex_count; ++v) {
            second += norm3(t + 1, t, t - 1, v);
        }
    }
    second /= static_cast<double>((t_count - 2) * real_vertex_count);

    return std::exp(-second / (first + 1e-8));
}

} // namespace dmflow
