#pragma once

#include <optional>
#include <string>

#include "epan/errors.hpp"
#include "epan/model.hpp"
#include "epan/tensor.hpp"

namespace epan {

struct LossWeights {
    double lambda_c = 4.0;
    double lambda_e = 4.0;

    void validate() const {
        if (lambda_c < 0.0 || lambda_e < 0.0) {
            throw config_error("loss weights must be non-negative");
        }
    }
};

namespace detail {

template <class T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* who) {
    if (a->shape != b->shape) {
        throw dimension_error(std::string(who) + ": shape mismatch " + shape_str(a->shape) +
                              " vs " + shape_str(b->shape));
    }
}

// Validates a weight map: single channel, matching batch/spatial extents,
// values in [0,1].
template <class T>
void require_weight_map(const TensorPtr<T>& mask, const TensorPtr<T>& ref, const char* who) {
    if (mask->shape.size() != 4 || ref->shape.size() != 4) {
        throw dimension_error(std::string(who) + ": expects 4-D tensors");
    }
    if (mask->shape[1] != 1) {
        throw dimension_error(std::string(who) + ": weight map must be single-channel, got " +
                              std::to_string(mask->shape[1]));
    }
    if (mask->shape[0] != ref->shape[0] || mask->shape[2] != ref->shape[2] ||
        mask->shape[3] != ref->shape[3]) {
        throw dimension_error(std::string(who) + ": weight map extents " + shape_str(mask->shape) +
                              " do not match image extents " + shape_str(ref->shape));
    }
    for (const T v : mask->data) {
        if (!(v >= T(0) && v <= T(1))) {
            throw contract_error(std::string(who) + ": weight map values must lie in [0,1]");
        }
    }
}

} // namespace detail

// Mean squared error over all pixel-channels.
template <class T>
TensorPtr<T> mse_loss(const TensorPtr<T>& prediction, const TensorPtr<T>& target) {
    detail::require_same_shape(prediction, target, "mse_loss");
    auto diff = sub(prediction, target);
    auto total = sum_all(elementwise_mul(diff, diff));
    return scale(total, T(1.0 / static_cast<double>(prediction->numel())));
}

// Squared error weighted per pixel by the sharp edge map, which broadcasts
// over color channels. Zero wherever the map is zero.
template <class T>
TensorPtr<T> edge_guided_loss(const TensorPtr<T>& deblurred, const TensorPtr<T>& sharp,
                              const TensorPtr<T>& sharp_edges) {
    detail::require_same_shape(deblurred, sharp, "edge_guided_loss");
    detail::require_weight_map(sharp_edges, deblurred, "edge_guided_loss");
    auto diff = sub(deblurred, sharp);
    auto weighted = elementwise_mul(sharp_edges, elementwise_mul(diff, diff));
    return scale(sum_all(weighted), T(1.0 / static_cast<double>(deblurred->numel())));
}

// CDN objective: (1/n) sum (lambda_C * M_S + 1) (I_D - I_S)^2, identically
// lambda_C * edge_guided_loss + mse_loss.
template <class T>
TensorPtr<T> cdn_loss(const TensorPtr<T>& deblurred, const TensorPtr<T>& sharp,
                      const TensorPtr<T>& sharp_edges, double lambda_c) {
    detail::require_same_shape(deblurred, sharp, "cdn_loss");
    detail::require_weight_map(sharp_edges, deblurred, "cdn_loss");
    auto weight_map = add_scalar(scale(sharp_edges, T(lambda_c)), T(1));
    auto diff = sub(deblurred, sharp);
    auto weighted = elementwise_mul(weight_map, elementwise_mul(diff, diff));
    return scale(sum_all(weighted), T(1.0 / static_cast<double>(deblurred->numel())));
}

// EEN objective: (1/n) sum (lambda_E * M_S + 1) (M_E - M_S)^2.
template <class T>
TensorPtr<T> een_loss(const TensorPtr<T>& enhanced_edges, const TensorPtr<T>& sharp_edges,
                      double lambda_e) {
    detail::require_same_shape(enhanced_edges, sharp_edges, "een_loss");
    detail::require_weight_map(sharp_edges, enhanced_edges, "een_loss");
    auto weight_map = add_scalar(scale(sharp_edges, T(lambda_e)), T(1));
    auto diff = sub(enhanced_edges, sharp_edges);
    auto weighted = elementwise_mul(weight_map, elementwise_mul(diff, diff));
    return scale(sum_all(weighted), T(1.0 / static_cast<double>(enhanced_edges->numel())));
}

// Per-variant objective:
//   phi                      -> mse
//   phi_eal                  -> cdn (mse + edge-guided)
//   phi_cat/phi_add/phi_att  -> mse + een (edge-guided term dropped)
//   epan                     -> cdn + een
template <class T>
TensorPtr<T> total_loss(const TensorPtr<T>& deblurred, const TensorPtr<T>& sharp,
                        const TensorPtr<T>& enhanced_edges, const TensorPtr<T>& sharp_edges,
                        const LossWeights& weights, Variant variant) {
    const bool needs_een = variant_has_een(variant);
    if (needs_een && !enhanced_edges) {
        throw contract_error("total_loss: variant " + variant_name(variant) +
                             " has an EEN but no enhanced edge map was supplied");
    }
    if (!needs_een && enhanced_edges) {
        throw contract_error("total_loss: variant " + variant_name(variant) +
                             " has no EEN but an enhanced edge map was supplied");
    }
    switch (variant) {
        case Variant::phi:
            return mse_loss(deblurred, sharp);
        case Variant::phi_eal:
            return cdn_loss(deblurred, sharp, sharp_edges, weights.lambda_c);
        case Variant::phi_cat:
        case Variant::phi_add:
        case Variant::phi_att:
            return add(mse_loss(deblurred, sharp),
                       een_loss(enhanced_edges, sharp_edges, weights.lambda_e));
        case Variant::epan:
            return add(cdn_loss(deblurred, sharp, sharp_edges, weights.lambda_c),
                       een_loss(enhanced_edges, sharp_edges, weights.lambda_e));
    }
    throw contract_error("total_loss: unhandled variant");
}

} // namespace epan
