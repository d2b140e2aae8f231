#pragma once

/**
 * @file garmnet/config.hpp
 * @brief TrainConfig <-> YAML/JSON, with strict key checking and overrides.
 *
 * Example file (every key optional):
 *
 *     network:
 *       variant: garmnet-b
 *       spatial_constraint: true
 *       box_side: 70
 *       backbone: {kind: tiny, input_size: 128}
 *     batch_size: 8
 *     epochs: 200
 *     seeds: {data: 1, init: 2, sampling: 3}
 */

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "garmnet/checkpoint.hpp"
#include "garmnet/synthetic.hpp"
#include "garmnet/training.hpp"

namespace garmnet {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// YAML scalars become numbers/booleans when they parse as such.
inline nlohmann::json yaml_to_json(const YAML::Node& n) {
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return nullptr;
        case YAML::NodeType::Sequence: {
            auto a = nlohmann::json::array();
            for (const auto& x : n) a.push_back(yaml_to_json(x));
            return a;
        }
        case YAML::NodeType::Map: {
            auto o = nlohmann::json::object();
            for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
            return o;
        }
        case YAML::NodeType::Scalar: {
            const std::string s = n.Scalar();
            if (n.Tag() == "!") return s;  // quoted
            if (s == "true" || s == "True" || s == "on") return true;
            if (s == "false" || s == "False" || s == "off") return false;
            if (s == "null" || s == "~") return nullptr;
            try {
                std::size_t pos = 0;
                const long long i = std::stoll(s, &pos);
                if (pos == s.size()) return i;
            } catch (...) {
            }
            try {
                std::size_t pos = 0;
                const double d = std::stod(s, &pos);
                if (pos == s.size()) return d;
            } catch (...) {
            }
            return s;
        }
    }
    return nullptr;
}

inline YAML::Node json_to_yaml(const nlohmann::json& j) {
    YAML::Node n;
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) n[it.key()] = json_to_yaml(it.value());
    } else if (j.is_array()) {
        n = YAML::Node(YAML::NodeType::Sequence);
        for (const auto& x : j) n.push_back(json_to_yaml(x));
    } else if (j.is_boolean()) {
        n = j.get<bool>();
    } else if (j.is_number_unsigned()) {
        n = j.get<std::uint64_t>();
    } else if (j.is_number_integer()) {
        n = j.get<std::int64_t>();
    } else if (j.is_number_float()) {
        n = j.get<double>();
    } else if (j.is_string()) {
        n = j.get<std::string>();
    }
    return n;
}

/// Recursive object merge; values in `over` win.
inline void merge_json(nlohmann::json& base, const nlohmann::json& over) {
    if (!base.is_object() || !over.is_object()) {
        base = over;
        return;
    }
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            merge_json(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    const auto& w = c.loss_weights;
    return {{"network", network_config_to_json(c.network)},
            {"init", {{"kernel_std", c.init.kernel_std}, {"bias_value", c.init.bias_value}}},
            {"optimizer",
             {{"name", "adadelta"},
              {"learning_rate", c.optimizer.learning_rate},
              {"rho", c.optimizer.rho},
              {"epsilon", c.optimizer.epsilon}}},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"loss_weights",
             {{"landmark_reg", w.landmark_reg},
              {"landmark_cls", w.landmark_cls},
              {"garment_cls", w.garment_cls},
              {"garment_reg", w.garment_reg}}},
            {"targets",
             {{"pos_thresh", c.targets.pos_thresh},
              {"bg_thresh", c.targets.bg_thresh},
              {"n_background", c.targets.n_background}}},
            {"augmentation",
             {{"enabled", c.augmentation.enabled},
              {"gaussian_sigma", c.augmentation.gaussian_sigma},
              {"hue_delta_min", c.augmentation.hue_delta_min},
              {"hue_delta_max", c.augmentation.hue_delta_max}}},
            {"balance", c.balance},
            {"seeds", {{"data", c.data_seed}, {"init", c.init_seed}, {"sampling", c.sampling_seed}}},
            {"strict_determinism", c.strict_determinism},
            {"validate_every_epoch", c.validate_every_epoch},
            {"evaluation",
             {{"landmark_rule", c.match.kind == MatchKind::box_iou ? "box_iou" : "radius"},
              {"landmark_iou", c.match.landmark_iou},
              {"radius", c.match.radius},
              {"garment_iou", c.match.garment_iou}}}};
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected a mapping");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + it.key() + "'");
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + where + (where.empty() ? "" : ".") + key + "' has the wrong type");
    }
}

}  // namespace detail

inline void validate_train_config(const TrainConfig& c);

/// Apply the keys present in j on top of base.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
    using detail::read;
    detail::check_keys(j, "",
                       {"network", "init", "optimizer", "batch_size", "epochs", "loss_weights", "targets",
                        "augmentation", "balance", "seeds", "strict_determinism", "validate_every_epoch",
                        "evaluation"});
    try {
        if (j.contains("network")) {
            const auto& n = j["network"];
            detail::check_keys(n, "network",
                               {"variant", "backbone", "n_landmarks", "n_garments", "head_channels", "hidden_units",
                                "box_side", "stride", "normalize_offsets", "spatial_constraint",
                                "confidence_threshold", "box_codec"});
            auto& nc = c.network;
            if (n.contains("variant")) nc.variant = parse_variant(n["variant"].get<std::string>());
            if (n.contains("backbone")) {
                const auto& b = n["backbone"];
                detail::check_keys(b, "network.backbone",
                                   {"kind", "input_size", "tiny_channels", "pretrained_weights", "finetune", "mean",
                                    "std"});
                if (b.contains("kind")) {
                    const auto kind = parse_backbone_kind(b["kind"].get<std::string>());
                    if (kind != nc.backbone.kind) {
                        // Switching kind resets kind-specific defaults.
                        nc.backbone = kind == BackboneKind::resnet50_conv4x ? BackboneConfig::resnet50() : BackboneConfig{};
                    }
                }
                read(b, "input_size", nc.backbone.input_size, "network.backbone");
                read(b, "tiny_channels", nc.backbone.tiny_channels, "network.backbone");
                read(b, "finetune", nc.backbone.finetune, "network.backbone");
                read(b, "mean", nc.backbone.mean, "network.backbone");
                read(b, "std", nc.backbone.std, "network.backbone");
                if (b.contains("pretrained_weights")) {
                    if (b["pretrained_weights"].is_null())
                        nc.backbone.pretrained_weights.reset();
                    else
                        nc.backbone.pretrained_weights = b["pretrained_weights"].get<std::string>();
                }
            }
            read(n, "n_landmarks", nc.n_landmarks, "network");
            read(n, "n_garments", nc.n_garments, "network");
            read(n, "head_channels", nc.head_channels, "network");
            read(n, "hidden_units", nc.hidden_units, "network");
            read(n, "box_side", nc.box_side, "network");
            read(n, "stride", nc.stride, "network");
            read(n, "normalize_offsets", nc.normalize_offsets, "network");
            read(n, "spatial_constraint", nc.spatial_constraint, "network");
            read(n, "confidence_threshold", nc.confidence_threshold, "network");
            if (n.contains("box_codec") && n["box_codec"].get<std::string>() != BoxCodec::name())
                throw ConfigError("unsupported box_codec '" + n["box_codec"].get<std::string>() + "'");
        }
        if (j.contains("init")) {
            detail::check_keys(j["init"], "init", {"kernel_std", "bias_value"});
            read(j["init"], "kernel_std", c.init.kernel_std, "init");
            read(j["init"], "bias_value", c.init.bias_value, "init");
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            detail::check_keys(o, "optimizer", {"name", "learning_rate", "rho", "epsilon"});
            if (o.contains("name") && o["name"].get<std::string>() != "adadelta")
                throw ConfigError("only the adadelta optimizer is available");
            read(o, "learning_rate", c.optimizer.learning_rate, "optimizer");
            read(o, "rho", c.optimizer.rho, "optimizer");
            read(o, "epsilon", c.optimizer.epsilon, "optimizer");
        }
        read(j, "batch_size", c.batch_size, "");
        read(j, "epochs", c.epochs, "");
        if (j.contains("loss_weights")) {
            const auto& w = j["loss_weights"];
            detail::check_keys(w, "loss_weights", {"landmark_reg", "landmark_cls", "garment_cls", "garment_reg"});
            read(w, "landmark_reg", c.loss_weights.landmark_reg, "loss_weights");
            read(w, "landmark_cls", c.loss_weights.landmark_cls, "loss_weights");
            read(w, "garment_cls", c.loss_weights.garment_cls, "loss_weights");
            read(w, "garment_reg", c.loss_weights.garment_reg, "loss_weights");
        }
        if (j.contains("targets")) {
            const auto& t = j["targets"];
            detail::check_keys(t, "targets", {"pos_thresh", "bg_thresh", "n_background"});
            read(t, "pos_thresh", c.targets.pos_thresh, "targets");
            read(t, "bg_thresh", c.targets.bg_thresh, "targets");
            read(t, "n_background", c.targets.n_background, "targets");
        }
        if (j.contains("augmentation")) {
            const auto& a = j["augmentation"];
            detail::check_keys(a, "augmentation", {"enabled", "gaussian_sigma", "hue_delta_min", "hue_delta_max"});
            read(a, "enabled", c.augmentation.enabled, "augmentation");
            read(a, "gaussian_sigma", c.augmentation.gaussian_sigma, "augmentation");
            read(a, "hue_delta_min", c.augmentation.hue_delta_min, "augmentation");
            read(a, "hue_delta_max", c.augmentation.hue_delta_max, "augmentation");
        }
        read(j, "balance", c.balance, "");
        if (j.contains("seeds")) {
            const auto& s = j["seeds"];
            detail::check_keys(s, "seeds", {"data", "init", "sampling"});
            read(s, "data", c.data_seed, "seeds");
            read(s, "init", c.init_seed, "seeds");
            read(s, "sampling", c.sampling_seed, "seeds");
        }
        read(j, "strict_determinism", c.strict_determinism, "");
        read(j, "validate_every_epoch", c.validate_every_epoch, "");
        if (j.contains("evaluation")) {
            const auto& e = j["evaluation"];
            detail::check_keys(e, "evaluation", {"landmark_rule", "landmark_iou", "radius", "garment_iou"});
            if (e.contains("landmark_rule")) {
                const auto r = e["landmark_rule"].get<std::string>();
                if (r != "box_iou" && r != "radius") throw ConfigError("evaluation.landmark_rule must be box_iou or radius");
                c.match.kind = r == "box_iou" ? MatchKind::box_iou : MatchKind::radius;
            }
            read(e, "landmark_iou", c.match.landmark_iou, "evaluation");
            read(e, "radius", c.match.radius, "evaluation");
            read(e, "garment_iou", c.match.garment_iou, "evaluation");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    validate_train_config(c);
    c.match.box_side = c.network.box_side;
    return c;
}

inline void validate_train_config(const TrainConfig& c) {
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    for (double w : c.loss_weights.as_array())
        if (!(w >= 0)) throw ConfigError("loss weights must be non-negative");
    if (c.network.n_landmarks < 1 || c.network.n_garments < 1) throw ConfigError("class counts must be >= 1");
    if (c.network.box_side <= 0) throw ConfigError("network.box_side must be positive");
    if (c.network.backbone.input_size < 16) throw ConfigError("network.backbone.input_size must be >= 16");
    if (!(c.targets.bg_thresh <= c.targets.pos_thresh)) throw ConfigError("targets.bg_thresh must not exceed pos_thresh");
    if (c.optimizer.rho <= 0 || c.optimizer.rho >= 1) throw ConfigError("optimizer.rho must lie in (0, 1)");
    if (c.augmentation.gaussian_sigma < 0 || c.augmentation.hue_delta_min > c.augmentation.hue_delta_max)
        throw ConfigError("invalid augmentation parameters");
}

inline TrainConfig load_train_config(const std::filesystem::path& path, const TrainConfig& base = {}) {
    YAML::Node n;
    try {
        n = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    const auto j = yaml_to_json(n);
    return j.is_null() ? base : train_config_from_json(j, base);
}

inline std::string train_config_to_yaml(const TrainConfig& c) {
    YAML::Emitter out;
    out << json_to_yaml(train_config_to_json(c));
    return std::string(out.c_str()) + "\n";
}

/// Synthetic scene settings; same flat key names as SyntheticSceneConfig.
inline SyntheticSceneConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticSceneConfig c = {}) {
    if (j.is_null()) return c;
    detail::check_keys(j, "", {"n_examples", "image_size", "templates", "base_scale", "scale_min", "scale_max",
                               "rotation_deg", "jitter", "placement_min", "placement_max", "background_noise",
                               "deform", "seed"});
    detail::read(j, "n_examples", c.n_examples, "");
    detail::read(j, "image_size", c.image_size, "");
    detail::read(j, "templates", c.templates, "");
    detail::read(j, "base_scale", c.base_scale, "");
    detail::read(j, "scale_min", c.scale_min, "");
    detail::read(j, "scale_max", c.scale_max, "");
    detail::read(j, "rotation_deg", c.rotation_deg, "");
    detail::read(j, "jitter", c.jitter, "");
    detail::read(j, "placement_min", c.placement_min, "");
    detail::read(j, "placement_max", c.placement_max, "");
    detail::read(j, "background_noise", c.background_noise, "");
    detail::read(j, "deform", c.deform, "");
    detail::read(j, "seed", c.seed, "");
    if (c.n_examples == 0) throw ConfigError("n_examples must be >= 1");
    if (c.image_size < 16) throw ConfigError("image_size must be >= 16");
    if (c.scale_min > c.scale_max || c.placement_min >= c.placement_max) throw ConfigError("invalid synthetic ranges");
    return c;
}

inline nlohmann::json synthetic_config_to_json(const SyntheticSceneConfig& c) {
    return {{"n_examples", c.n_examples},       {"image_size", c.image_size},
            {"templates", c.templates},         {"base_scale", c.base_scale},
            {"scale_min", c.scale_min},         {"scale_max", c.scale_max},
            {"rotation_deg", c.rotation_deg},   {"jitter", c.jitter},
            {"placement_min", c.placement_min}, {"placement_max", c.placement_max},
            {"background_noise", c.background_noise}, {"deform", c.deform},
            {"seed", c.seed}};
}

}  // namespace garmnet
