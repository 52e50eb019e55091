#include "epan/model.hpp"

#include <json.hpp>

namespace epan {

FusionMode fusion_mode_of(Variant v) {
    switch (v) {
        case Variant::phi_cat: return FusionMode::concat;
        case Variant::phi_add: return FusionMode::add;
        case Variant::phi_att:
        case Variant::epan: return FusionMode::attentive;
        default: return FusionMode::none;
    }
}

bool variant_has_een(Variant v) {
    return v != Variant::phi && v != Variant::phi_eal;
}

bool variant_uses_edge_loss(Variant v) {
    return v == Variant::phi_eal || v == Variant::epan;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::phi: return "phi";
        case Variant::phi_cat: return "phi_cat";
        case Variant::phi_add: return "phi_add";
        case Variant::phi_att: return "phi_att";
        case Variant::phi_eal: return "phi_eal";
        case Variant::epan: return "epan";
    }
    return "epan";
}

Variant variant_from_name(const std::string& name) {
    if (name == "phi") return Variant::phi;
    if (name == "phi_cat") return Variant::phi_cat;
    if (name == "phi_add") return Variant::phi_add;
    if (name == "phi_att") return Variant::phi_att;
    if (name == "phi_eal") return Variant::phi_eal;
    if (name == "epan") return Variant::epan;
    throw config_error("unknown variant '" + name +
                       "'; expected one of phi, phi_cat, phi_add, phi_att, phi_eal, epan");
}

void ModelConfig::validate() const {
    if (levels < 2) {
        throw config_error("model: levels must be >= 2, got " + std::to_string(levels));
    }
    if (cdn_base_channels < 1) {
        throw config_error("model: cdn_base_channels must be positive");
    }
    if (convs_per_level < 1) {
        throw config_error("model: convs_per_level must be >= 1");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw config_error("model: kernel_size must be odd and positive, got " +
                           std::to_string(kernel_size));
    }
    if (een_channel_divisor != 4) {
        throw config_error("model: een_channel_divisor is fixed at 4");
    }
    if (variant_has_een(variant) && cdn_base_channels % een_channel_divisor != 0) {
        throw config_error("model: cdn_base_channels " + std::to_string(cdn_base_channels) +
                           " is not divisible by the EEN channel divisor " +
                           std::to_string(een_channel_divisor));
    }
}

std::string model_config_to_json(const ModelConfig& config) {
    nlohmann::json j;
    j["variant"] = variant_name(config.variant);
    j["levels"] = config.levels;
    j["cdn_base_channels"] = config.cdn_base_channels;
    j["een_channel_divisor"] = config.een_channel_divisor;
    j["convs_per_level"] = config.convs_per_level;
    j["kernel_size"] = config.kernel_size;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("model config: invalid JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        if (j.contains("variant")) cfg.variant = variant_from_name(j["variant"].get<std::string>());
        if (j.contains("levels")) cfg.levels = j["levels"].get<int>();
        if (j.contains("cdn_base_channels")) cfg.cdn_base_channels = j["cdn_base_channels"].get<int>();
        if (j.contains("een_channel_divisor")) cfg.een_channel_divisor = j["een_channel_divisor"].get<int>();
        if (j.contains("convs_per_level")) cfg.convs_per_level = j["convs_per_level"].get<int>();
        if (j.contains("kernel_size")) cfg.kernel_size = j["kernel_size"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("model config: bad field type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

} // namespace epan
