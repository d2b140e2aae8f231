#pragma once

/**
 * @file garmnet/checkpoint.hpp
 * @brief Self-describing parameter container.
 *
 * Layout (little endian):
 *
 *     8 bytes   magic "GARMNETC"
 *     u32       container version
 *     u64       header length N
 *     N bytes   JSON header: {"meta": {...}, "tensors": [{"name", "shape", "offset"}]}
 *     ...       float64 payload; tensor k starts at element offset_k
 *
 * Checkpoints put the full network configuration and taxonomy under
 * meta.config; pretrained backbone files use the same container with
 * torchvision parameter names and no config.
 */

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/dataset.hpp"
#include "garmnet/network.hpp"
#include "garmnet/tensor.hpp"

namespace garmnet {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kContainerMagic[8] = {'G', 'A', 'R', 'M', 'N', 'E', 'T', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct TensorFile {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::string> order;
    std::map<std::string, Tensor<double>> tensors;

    void add(const std::string& name, Tensor<double> t) {
        if (!tensors.count(name)) order.push_back(name);
        tensors[name] = std::move(t);
    }
};

inline void write_tensor_file(const TensorFile& f, const std::filesystem::path& path) {
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& name : f.order) {
        const auto& t = f.tensors.at(name);
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size();
    }
    const std::string header = nlohmann::json{{"meta", f.meta}, {"tensors", index}}.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + path.string());
    os.write(kContainerMagic, sizeof(kContainerMagic));
    const std::uint32_t version = kContainerVersion;
    const std::uint64_t len = header.size();
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(header.data(), std::streamsize(header.size()));
    for (const auto& name : f.order) {
        const auto& t = f.tensors.at(name);
        os.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * sizeof(double)));
    }
    if (!os) throw CheckpointError("short write to " + path.string());
}

inline TensorFile read_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kContainerMagic, 8) != 0) throw CheckpointError(path.string() + ": not a container");
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is || version != kContainerVersion)
        throw CheckpointError(path.string() + ": unsupported container version " + std::to_string(version));
    std::string header(len, '\0');
    is.read(header.data(), std::streamsize(len));
    if (!is) throw CheckpointError(path.string() + ": truncated header");
    const auto j = nlohmann::json::parse(header);
    const auto data_start = is.tellg();

    TensorFile f;
    f.meta = j.at("meta");
    for (const auto& e : j.at("tensors")) {
        const std::string name = e.at("name");
        Tensor<double> t(e.at("shape").get<Shape>());
        is.seekg(data_start + std::streamoff(e.at("offset").get<std::uint64_t>() * sizeof(double)));
        is.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(double)));
        if (!is) throw CheckpointError(path.string() + ": truncated tensor " + name);
        f.add(name, std::move(t));
    }
    return f;
}

inline nlohmann::json network_config_to_json(const NetworkConfig& c) {
    const auto& b = c.backbone;
    nlohmann::json bj{{"kind", to_string(b.kind)},
                      {"input_size", b.input_size},
                      {"tiny_channels", b.tiny_channels},
                      {"finetune", b.finetune},
                      {"mean", b.mean},
                      {"std", b.std}};
    if (b.pretrained_weights) bj["pretrained_weights"] = *b.pretrained_weights;
    return {{"variant", to_string(c.variant)},
            {"backbone", bj},
            {"n_landmarks", c.n_landmarks},
            {"n_garments", c.n_garments},
            {"head_channels", c.head_channels},
            {"hidden_units", c.hidden_units},
            {"box_side", c.box_side},
            {"stride", c.stride},
            {"normalize_offsets", c.normalize_offsets},
            {"spatial_constraint", c.spatial_constraint},
            {"confidence_threshold", c.confidence_threshold},
            {"box_codec", BoxCodec::name()}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.variant = parse_variant(j.at("variant"));
    const auto& b = j.at("backbone");
    c.backbone.kind = parse_backbone_kind(b.at("kind"));
    c.backbone.input_size = b.at("input_size");
    c.backbone.tiny_channels = b.at("tiny_channels").get<std::vector<int>>();
    c.backbone.finetune = b.value("finetune", true);
    c.backbone.mean = b.at("mean").get<std::array<double, 3>>();
    c.backbone.std = b.at("std").get<std::array<double, 3>>();
    if (b.contains("pretrained_weights")) c.backbone.pretrained_weights = b.at("pretrained_weights").get<std::string>();
    c.n_landmarks = j.at("n_landmarks");
    c.n_garments = j.at("n_garments");
    c.head_channels = j.at("head_channels");
    c.hidden_units = j.at("hidden_units");
    c.box_side = j.at("box_side");
    c.stride = j.at("stride");
    c.normalize_offsets = j.at("normalize_offsets");
    c.spatial_constraint = j.at("spatial_constraint");
    c.confidence_threshold = j.at("confidence_threshold");
    if (j.value("box_codec", std::string{}) != BoxCodec::name())
        throw CheckpointError("checkpoint uses box codec '" + j.value("box_codec", std::string{"?"}) +
                              "', this build understands '" + BoxCodec::name() + "'");
    return c;
}

inline constexpr const char* kCheckpointFormat = "garmnet-checkpoint";
inline constexpr int kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const GarmNet<T>& model, const Taxonomy& tax, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object()) {
    TensorFile f;
    f.meta = {{"format", kCheckpointFormat},
              {"version", kCheckpointVersion},
              {"config", network_config_to_json(model.config())},
              {"taxonomy", tax.to_json()},
              {"extra", extra}};
    for (const Param<T>* p : model.parameters()) f.add(p->name, p->value.template cast<double>());
    write_tensor_file(f, path);
}

template <typename T>
struct LoadedCheckpoint {
    GarmNet<T> model;
    Taxonomy taxonomy;
    nlohmann::json extra;
};

/// Copy named tensors into matching parameters; every parameter must be present with the right shape.
template <typename T>
void load_parameters(GarmNet<T>& model, const TensorFile& f, const std::string& prefix_strip = {},
                     bool backbone_only = false) {
    for (Param<T>* p : model.parameters()) {
        if (backbone_only && p->name.rfind("backbone.", 0) != 0) continue;
        std::string key = p->name;
        if (!prefix_strip.empty() && key.rfind(prefix_strip, 0) == 0) key = key.substr(prefix_strip.size());
        auto it = f.tensors.find(key);
        if (it == f.tensors.end()) throw CheckpointError("parameter '" + key + "' missing from weights file");
        if (it->second.shape() != p->value.shape())
            throw CheckpointError("parameter '" + key + "' has shape " + shape_str(it->second.shape()) +
                                  ", the architecture expects " + shape_str(p->value.shape()));
        p->value = it->second.template cast<T>();
    }
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
    const TensorFile f = read_tensor_file(path);
    if (f.meta.value("format", std::string{}) != kCheckpointFormat)
        throw CheckpointError(path.string() + ": not a network checkpoint");
    if (f.meta.value("version", 0) != kCheckpointVersion)
        throw CheckpointError(path.string() + ": unsupported checkpoint version");
    LoadedCheckpoint<T> out{GarmNet<T>(network_config_from_json(f.meta.at("config"))),
                            Taxonomy::from_json(f.meta.at("taxonomy")), f.meta.value("extra", nlohmann::json::object())};
    if (out.taxonomy.n_landmarks() != out.model.config().n_landmarks ||
        out.taxonomy.n_garments() != out.model.config().n_garments)
        throw CheckpointError(path.string() + ": taxonomy does not match the network class counts");
    load_parameters(out.model, f);
    return out;
}

/// Overwrite the backbone with externally supplied weights (torchvision names, no "backbone." prefix).
template <typename T>
void load_backbone_weights(GarmNet<T>& model, const std::filesystem::path& path) {
    load_parameters(model, read_tensor_file(path), "backbone.", true);
}

}  // namespace garmnet
