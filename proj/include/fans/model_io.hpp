#pragma once
// JSON weight files for the model zoo.
//
//   {
//     "format": "fans-model",
//     "arch":   {"sizes": [d, h1, ..., K], "activations": ["tanh", ...]},
//     "head":   "softmax" | "sigmoid" | "identity",
//     "layers": [{"rows": r, "cols": c, "weights": [row-major r*c], "bias": [r]}, ...]
//   }
//
// Doubles are written as shortest round-trip decimals, so save/load
// reproduces weights (and therefore predictions) bit for bit.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fans/error.hpp"
#include "fans/model.hpp"

namespace fans {

inline nlohmann::ordered_json model_to_json(const Mlp& model) {
    nlohmann::ordered_json j;
    j["format"] = "fans-model";
    const Architecture arch = model.architecture();
    j["arch"]["sizes"] = arch.sizes;
    auto acts = nlohmann::ordered_json::array();
    for (Activation a : arch.activations) acts.push_back(std::string(to_string(a)));
    j["arch"]["activations"] = acts;
    j["head"] = std::string(to_string(arch.head));
    auto layers = nlohmann::ordered_json::array();
    for (const DenseLayer& l : model.layers()) {
        nlohmann::ordered_json lj;
        lj["rows"] = l.rows;
        lj["cols"] = l.cols;
        lj["weights"] = l.weights;
        lj["bias"] = l.bias;
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

namespace detail {

template <class T>
T model_field(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw ParseError("model file: missing field '" + path + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError("model file: field '" + path + key + "' has the wrong type");
    }
}

}  // namespace detail

inline Mlp model_from_json(const nlohmann::json& j) {
    using detail::model_field;
    if (!j.is_object()) throw ParseError("model file: top level is not an object");
    if (j.contains("format") && j["format"] != "fans-model") throw ParseError("model file: field 'format' is not 'fans-model'");
    const auto arch = j.contains("arch") ? j.at("arch") : throw ParseError("model file: missing field 'arch'");
    const auto sizes = model_field<std::vector<std::size_t>>(arch, "sizes", "arch.");
    const auto act_names = model_field<std::vector<std::string>>(arch, "activations", "arch.");
    const auto head_name = model_field<std::string>(j, "head", "");

    std::vector<Activation> acts;
    for (const auto& a : act_names) acts.push_back(parse_activation(a));
    const Head head = parse_head(head_name);

    if (!j.contains("layers") || !j["layers"].is_array()) throw ParseError("model file: missing field 'layers'");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < j["layers"].size(); ++l) {
        const auto& lj = j["layers"][l];
        const std::string path = "layers[" + std::to_string(l) + "].";
        DenseLayer layer;
        layer.rows = model_field<std::size_t>(lj, "rows", path);
        layer.cols = model_field<std::size_t>(lj, "cols", path);
        layer.weights = model_field<Vector>(lj, "weights", path);
        layer.bias = model_field<Vector>(lj, "bias", path);
        layers.push_back(std::move(layer));
    }
    if (sizes.size() != layers.size() + 1)
        throw ValidationError("model file: arch.sizes has " + std::to_string(sizes.size()) + " entries for " +
                              std::to_string(layers.size()) + " layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].cols != sizes[l] || layers[l].rows != sizes[l + 1])
            throw ValidationError("model file: layer " + std::to_string(l) + " shape " + std::to_string(layers[l].rows) +
                                  "x" + std::to_string(layers[l].cols) + " disagrees with arch.sizes");
    }
    return Mlp(std::move(layers), std::move(acts), head);
}

inline void save_model(const Mlp& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << model_to_json(model).dump(1) << '\n';
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline Mlp load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("model file '" + path + "': " + e.what());
    }
    return model_from_json(j);
}

}  // namespace fans
