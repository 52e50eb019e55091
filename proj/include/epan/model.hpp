#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "epan/errors.hpp"
#include "epan/tensor.hpp"

namespace epan {

// How EEN decoder features enter the CDN decoder at each fusion site.
enum class FusionMode { none, concat, add, attentive };

// The six ablation variants. phi and phi_eal build no EEN.
enum class Variant { phi, phi_cat, phi_add, phi_att, phi_eal, epan };

FusionMode fusion_mode_of(Variant v);
bool variant_has_een(Variant v);
// Whether the edge-guided term of the CDN loss is active for this variant.
bool variant_uses_edge_loss(Variant v);
std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
    Variant variant = Variant::epan;
    int levels = 3;
    int cdn_base_channels = 32;
    int een_channel_divisor = 4; // fixed architectural constraint
    int convs_per_level = 2;
    int kernel_size = 3;

    void validate() const;
    // Spatial extents of forward inputs must divide this.
    int spatial_divisor() const { return 1 << (levels - 1); }
    int cdn_width(int level) const { return cdn_base_channels << level; }
    int een_width(int level) const { return (cdn_base_channels / een_channel_divisor) << level; }
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

// A convolution's parameters; stride/padding are fixed per site.
template <class T>
struct ConvParams {
    TensorPtr<T> weight;
    TensorPtr<T> bias;
    int stride = 1;
    int padding = 0;
};

// One encoder-decoder branch (either CDN or EEN).
template <class T>
struct BranchParams {
    std::vector<std::vector<ConvParams<T>>> enc_stages; // [level][conv]
    std::vector<ConvParams<T>> downs;                   // stride-2, between stages
    std::vector<ConvParams<T>> dec_reduce;              // [decode step], post-upsample
    std::vector<std::vector<ConvParams<T>>> dec_stages; // [decode step][conv]
    ConvParams<T> head;                                 // no activation
};

template <class T>
struct Network {
    ModelConfig config;
    BranchParams<T> cdn;
    std::optional<BranchParams<T>> een;
    std::vector<ConvParams<T>> fusion; // one per fusion site; empty for mode none

    std::vector<TensorPtr<T>> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const;
    std::size_t een_parameter_count() const;
    void zero_grad() const;
};

template <class T>
struct ForwardResult {
    TensorPtr<T> deblurred;              // I_D
    TensorPtr<T> edge_enhanced = nullptr; // M_E; null for variants without EEN
};

// Eq.-style attentive fusion: sigmoid(g(x_E)) broadcast-multiplied into x_C.
// g is a 1x1 convolution with a single output channel.
template <class T>
TensorPtr<T> attentive_fuse(const TensorPtr<T>& x_e, const TensorPtr<T>& x_c,
                            const ConvParams<T>& g) {
    if (!g.weight || g.weight->shape[0] != 1) {
        throw contract_error("attentive_fuse: g must map to exactly 1 output channel");
    }
    if (x_e->shape[0] != x_c->shape[0] || x_e->shape[2] != x_c->shape[2] ||
        x_e->shape[3] != x_c->shape[3]) {
        throw dimension_error("attentive_fuse: spatial/batch mismatch between edge feature " +
                              detail::shape_str(x_e->shape) + " and content feature " +
                              detail::shape_str(x_c->shape));
    }
    auto mask = sigmoid(conv2d(x_e, g.weight, g.bias, 1, 0));
    return elementwise_mul(mask, x_c);
}

// Fusion dispatch. concat projects the concatenated tensor back to x_C's
// width with a 1x1 conv; add first projects x_E to x_C's width. The output
// shape always equals x_C's.
template <class T>
TensorPtr<T> fuse(FusionMode mode, const TensorPtr<T>& x_e, const TensorPtr<T>& x_c,
                  const ConvParams<T>* site_params) {
    if (mode == FusionMode::none) {
        return x_c;
    }
    if (!x_e) {
        throw contract_error("fuse: fusion mode requires EEN features but none were supplied");
    }
    if (!site_params) {
        throw contract_error("fuse: fusion mode requires site parameters");
    }
    switch (mode) {
        case FusionMode::attentive:
            return attentive_fuse(x_e, x_c, *site_params);
        case FusionMode::concat:
            return conv2d(concat_channels(x_c, x_e), site_params->weight, site_params->bias, 1, 0);
        case FusionMode::add:
            return add(x_c, conv2d(x_e, site_params->weight, site_params->bias, 1, 0));
        default:
            return x_c;
    }
}

namespace detail {

template <class T>
ConvParams<T> make_conv(int out_ch, int in_ch, int k, int stride, int padding,
                        std::mt19937_64& rng) {
    std::vector<T> w(static_cast<std::size_t>(out_ch) * in_ch * k * k);
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& v : w) {
        v = static_cast<T>(dist(rng));
    }
    ConvParams<T> conv;
    conv.weight = tensor_from<T>({out_ch, in_ch, k, k}, std::move(w), true);
    conv.bias = tensor_zeros<T>({out_ch}, true);
    conv.stride = stride;
    conv.padding = padding;
    return conv;
}

template <class T>
BranchParams<T> make_branch(const ModelConfig& cfg, int io_channels, int base, std::mt19937_64& rng) {
    const int L = cfg.levels;
    const int k = cfg.kernel_size;
    const int pad = (k - 1) / 2;
    BranchParams<T> br;
    br.enc_stages.resize(L);
    for (int lvl = 0; lvl < L; ++lvl) {
        const int w = base << lvl;
        for (int j = 0; j < cfg.convs_per_level; ++j) {
            const int in_ch = (j == 0 && lvl == 0) ? io_channels : w;
            br.enc_stages[lvl].push_back(make_conv<T>(w, in_ch, k, 1, pad, rng));
        }
        if (lvl < L - 1) {
            br.downs.push_back(make_conv<T>(base << (lvl + 1), w, k, 2, pad, rng));
        }
    }
    for (int d = 0; d < L - 1; ++d) {
        const int lvl = L - 2 - d; // target resolution level
        const int w = base << lvl;
        br.dec_reduce.push_back(make_conv<T>(w, base << (lvl + 1), k, 1, pad, rng));
        std::vector<ConvParams<T>> stage;
        for (int j = 0; j < cfg.convs_per_level; ++j) {
            const int in_ch = (j == 0) ? 2 * w : w; // skip concat doubles the input
            stage.push_back(make_conv<T>(w, in_ch, k, 1, pad, rng));
        }
        br.dec_stages.push_back(std::move(stage));
    }
    br.head = make_conv<T>(io_channels, base, k, 1, pad, rng);
    // The residual output starts near zero so the network opens at the
    // identity map instead of a large random perturbation of its input.
    for (T& v : br.head.weight->data) {
        v *= T(0.05);
    }
    return br;
}

template <class T>
void collect_branch(const BranchParams<T>& br, const std::string& prefix,
                    std::vector<TensorPtr<T>>* params, std::vector<std::string>* names) {
    auto emit = [&](const ConvParams<T>& c, const std::string& name) {
        if (params) {
            params->push_back(c.weight);
            params->push_back(c.bias);
        }
        if (names) {
            names->push_back(name + ".weight");
            names->push_back(name + ".bias");
        }
    };
    for (std::size_t lvl = 0; lvl < br.enc_stages.size(); ++lvl) {
        for (std::size_t j = 0; j < br.enc_stages[lvl].size(); ++j) {
            emit(br.enc_stages[lvl][j], prefix + ".enc" + std::to_string(lvl) + ".conv" + std::to_string(j));
        }
        if (lvl < br.downs.size()) {
            emit(br.downs[lvl], prefix + ".down" + std::to_string(lvl));
        }
    }
    for (std::size_t d = 0; d < br.dec_reduce.size(); ++d) {
        emit(br.dec_reduce[d], prefix + ".dec" + std::to_string(d) + ".reduce");
        for (std::size_t j = 0; j < br.dec_stages[d].size(); ++j) {
            emit(br.dec_stages[d][j], prefix + ".dec" + std::to_string(d) + ".conv" + std::to_string(j));
        }
    }
    emit(br.head, prefix + ".head");
}

// Runs one branch. site_hook(site_index, feature) fires after every decoder
// convolution activation, in execution order.
template <class T>
TensorPtr<T> branch_forward(const BranchParams<T>& br, const TensorPtr<T>& input,
                            const std::function<TensorPtr<T>(int, TensorPtr<T>)>& site_hook) {
    const int L = static_cast<int>(br.enc_stages.size());
    std::vector<TensorPtr<T>> skips;
    TensorPtr<T> x = input;
    for (int lvl = 0; lvl < L; ++lvl) {
        for (const ConvParams<T>& c : br.enc_stages[lvl]) {
            x = relu(conv2d(x, c.weight, c.bias, c.stride, c.padding));
        }
        if (lvl < L - 1) {
            skips.push_back(x);
            const ConvParams<T>& c = br.downs[lvl];
            x = relu(conv2d(x, c.weight, c.bias, c.stride, c.padding));
        }
    }
    int site = 0;
    for (int d = 0; d < L - 1; ++d) {
        const int lvl = L - 2 - d;
        x = upsample_nearest(x, 2);
        const ConvParams<T>& rc = br.dec_reduce[d];
        x = relu(conv2d(x, rc.weight, rc.bias, rc.stride, rc.padding));
        x = site_hook(site++, x);
        x = concat_channels(x, skips[lvl]);
        for (const ConvParams<T>& c : br.dec_stages[d]) {
            x = relu(conv2d(x, c.weight, c.bias, c.stride, c.padding));
            x = site_hook(site++, x);
        }
    }
    auto delta = conv2d(x, br.head.weight, br.head.bias, br.head.stride, br.head.padding);
    return clamp01(add(input, delta));
}

} // namespace detail

inline int fusion_site_count(const ModelConfig& cfg) {
    return (cfg.levels - 1) * (cfg.convs_per_level + 1);
}

// Builds the network with deterministic He-style initialization. CDN
// parameters are drawn first so every variant shares them for a given seed.
template <class T>
Network<T> build_model(const ModelConfig& config, unsigned long long seed) {
    config.validate();
    Network<T> net;
    net.config = config;
    std::mt19937_64 rng(seed);
    net.cdn = detail::make_branch<T>(config, 3, config.cdn_base_channels, rng);
    if (variant_has_een(config.variant)) {
        const int een_base = config.cdn_base_channels / config.een_channel_divisor;
        net.een = detail::make_branch<T>(config, 1, een_base, rng);
        const FusionMode mode = fusion_mode_of(config.variant);
        for (int s = 0; s < fusion_site_count(config); ++s) {
            const int d = s / (config.convs_per_level + 1);
            const int lvl = config.levels - 2 - d;
            const int cdn_w = config.cdn_width(lvl);
            const int een_w = config.een_width(lvl);
            switch (mode) {
                case FusionMode::attentive:
                    net.fusion.push_back(detail::make_conv<T>(1, een_w, 1, 1, 0, rng));
                    break;
                case FusionMode::concat:
                    net.fusion.push_back(detail::make_conv<T>(cdn_w, cdn_w + een_w, 1, 1, 0, rng));
                    break;
                case FusionMode::add:
                    net.fusion.push_back(detail::make_conv<T>(cdn_w, een_w, 1, 1, 0, rng));
                    break;
                default:
                    break;
            }
        }
    }
    return net;
}

// Full forward pass. EEN runs first; its post-activation decoder features gate
// the CDN decoder at every site. blurry_edges is ignored (and may be null)
// for variants without an EEN.
template <class T>
ForwardResult<T> forward(const Network<T>& net, const TensorPtr<T>& blurry,
                         const TensorPtr<T>& blurry_edges) {
    if (!blurry || blurry->shape.size() != 4 || blurry->shape[1] != 3) {
        throw dimension_error("forward: blurry input must be (batch, 3, height, width)");
    }
    const int divisor = net.config.spatial_divisor();
    if (blurry->shape[2] % divisor != 0 || blurry->shape[3] % divisor != 0) {
        throw dimension_error("forward: spatial extents " + std::to_string(blurry->shape[2]) + "x" +
                              std::to_string(blurry->shape[3]) + " must be divisible by " +
                              std::to_string(divisor));
    }

    ForwardResult<T> result;
    if (!net.een) {
        auto identity_hook = [](int, TensorPtr<T> x) { return x; };
        result.deblurred = detail::branch_forward<T>(net.cdn, blurry, identity_hook);
        return result;
    }

    if (!blurry_edges || blurry_edges->shape.size() != 4 || blurry_edges->shape[1] != 1) {
        throw dimension_error("forward: blurry edge map must be (batch, 1, height, width)");
    }
    if (blurry_edges->shape[0] != blurry->shape[0] || blurry_edges->shape[2] != blurry->shape[2] ||
        blurry_edges->shape[3] != blurry->shape[3]) {
        throw dimension_error("forward: edge map extents must match the blurry image");
    }

    std::vector<TensorPtr<T>> een_features(fusion_site_count(net.config));
    auto record_hook = [&](int site, TensorPtr<T> x) {
        een_features[site] = x;
        return x;
    };
    result.edge_enhanced = detail::branch_forward<T>(*net.een, blurry_edges, record_hook);

    const FusionMode mode = fusion_mode_of(net.config.variant);
    auto fuse_hook = [&](int site, TensorPtr<T> x) {
        return fuse<T>(mode, een_features[site], x, &net.fusion[site]);
    };
    result.deblurred = detail::branch_forward<T>(net.cdn, blurry, fuse_hook);
    return result;
}

template <class T>
std::vector<TensorPtr<T>> Network<T>::parameters() const {
    std::vector<TensorPtr<T>> params;
    detail::collect_branch(cdn, "cdn", &params, nullptr);
    if (een) {
        detail::collect_branch(*een, "een", &params, nullptr);
    }
    for (const ConvParams<T>& c : fusion) {
        params.push_back(c.weight);
        params.push_back(c.bias);
    }
    return params;
}

template <class T>
std::vector<std::string> Network<T>::parameter_names() const {
    std::vector<std::string> names;
    std::vector<TensorPtr<T>> unused;
    detail::collect_branch(cdn, "cdn", static_cast<std::vector<TensorPtr<T>>*>(nullptr), &names);
    if (een) {
        detail::collect_branch(*een, "een", static_cast<std::vector<TensorPtr<T>>*>(nullptr), &names);
    }
    for (std::size_t s = 0; s < fusion.size(); ++s) {
        names.push_back("fuse" + std::to_string(s) + ".weight");
        names.push_back("fuse" + std::to_string(s) + ".bias");
    }
    return names;
}

template <class T>
std::size_t Network<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) {
        n += p->numel();
    }
    return n;
}

template <class T>
std::size_t Network<T>::een_parameter_count() const {
    if (!een) {
        return 0;
    }
    std::vector<TensorPtr<T>> params;
    detail::collect_branch(*een, "een", &params, nullptr);
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p->numel();
    }
    return n;
}

template <class T>
void Network<T>::zero_grad() const {
    for (const auto& p : parameters()) {
        p->zero_grad();
    }
}

} // namespace epan
