#include "decreg/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace decreg {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'D', 'R', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kFormatVersion = 1;
}  // namespace

json scheme_to_json(const SchemePtr& scheme) {
    if (!scheme) return nullptr;
    json j;
    if (const auto* n = dynamic_cast<const NormalizedScheme*>(scheme.get())) {
        j["kind"] = "normalized";
        j["base"] = n->base();
        j["length"] = n->digits();
    } else if (const auto* u = dynamic_cast<const UnnormalizedScheme*>(scheme.get())) {
        j["kind"] = "unnormalized";
        j["base"] = u->base();
        j["exp_digits"] = u->exp_digits();
        j["mantissa_digits"] = u->mantissa_digits();
        j["dedicated_signs"] = u->dedicated_signs();
    } else if (const auto* h = dynamic_cast<const HammingScheme*>(scheme.get())) {
        j["kind"] = "hamming";
        j["bits"] = h->bits();
    } else if (const auto* r = dynamic_cast<const RepetitionScheme*>(scheme.get())) {
        j["kind"] = "repetition";
        j["repeats"] = r->repeats();
        j["inner"] = scheme_to_json(r->inner());
    } else {
        throw ConfigError("cannot serialize unknown scheme type");
    }
    return j;
}

SchemePtr scheme_from_json(const json& j) {
    if (j.is_null()) return nullptr;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "normalized")
        return std::make_shared<NormalizedScheme>(j.at("base").get<int>(), j.at("length").get<int>());
    if (kind == "unnormalized")
        return std::make_shared<UnnormalizedScheme>(j.at("base").get<int>(), j.at("exp_digits").get<int>(),
                                                    j.at("mantissa_digits").get<int>(),
                                                    j.value("dedicated_signs", true));
    if (kind == "hamming") return std::make_shared<HammingScheme>(j.at("bits").get<int>());
    if (kind == "repetition")
        return std::make_shared<RepetitionScheme>(scheme_from_json(j.at("inner")),
                                                  j.at("repeats").get<int>());
    throw ConfigError("unknown scheme kind '" + kind + "'");
}

json model_config_to_json(const ModelConfig& c) {
    json j;
    j["encoder"] = {{"input_dim", c.encoder.input_dim},
                    {"layers", c.encoder.layers},
                    {"hidden", c.encoder.hidden},
                    {"out_dim", c.encoder.out_dim}};
    j["head"] = head_kind_name(c.head);
    j["scheme"] = scheme_to_json(c.scheme);
    j["decoder"] = {{"layers", c.decoder.layers}, {"heads", c.decoder.heads}, {"width", c.decoder.width}};
    j["bins"] = c.bins;
    j["mixtures"] = c.mixtures;
    j["sigmoid_output"] = c.sigmoid_output;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    const auto& e = j.at("encoder");
    c.encoder.input_dim = e.at("input_dim").get<int64_t>();
    c.encoder.layers = e.at("layers").get<int>();
    c.encoder.hidden = e.at("hidden").get<int64_t>();
    c.encoder.out_dim = e.at("out_dim").get<int64_t>();
    c.head = head_kind_from_name(j.at("head").get<std::string>());
    c.scheme = scheme_from_json(j.value("scheme", json()));
    if (j.contains("decoder")) {
        const auto& d = j.at("decoder");
        c.decoder.layers = d.value("layers", 1);
        c.decoder.heads = d.value("heads", 1);
        c.decoder.width = d.value("width", int64_t{32});
    }
    c.bins = j.value("bins", int64_t{64});
    c.mixtures = j.value("mixtures", int64_t{5});
    c.sigmoid_output = j.value("sigmoid_output", true);
    return c;
}

json normalizer_to_json(const NormalizerStats& s) {
    return json{{"x_mean", s.x_mean},
                {"x_std", s.x_std},
                {"y_min", s.y_min},
                {"y_max", s.y_max},
                {"y_shift", s.y_shift}};
}

NormalizerStats normalizer_from_json(const json& j) {
    NormalizerStats s;
    s.x_mean = j.at("x_mean").get<std::vector<double>>();
    s.x_std = j.at("x_std").get<std::vector<double>>();
    s.y_min = j.at("y_min").get<double>();
    s.y_max = j.at("y_max").get<double>();
    s.y_shift = j.value("y_shift", 0.0);
    return s;
}

void save_checkpoint(const RegressionModel& model, const std::string& path) {
    json header;
    header["format"] = "decreg-checkpoint";
    header["version"] = kFormatVersion;
    header["byte_order"] = "little-endian";
    header["dtype"] = "float64";
    header["config"] = model_config_to_json(model.config());
    header["normalizer"] = model.normalizer() ? normalizer_to_json(*model.normalizer()) : json();
    json tensors = json::array();
    for (const auto& [name, t] : model.params().params())
        tensors.push_back({{"name", name}, {"shape", t.shape()}});
    header["tensors"] = tensors;

    const std::string head_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t len = head_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(head_str.data(), static_cast<std::streamsize>(head_str.size()));
    for (const auto& [name, t] : model.params().params())
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!out) throw DataError("failed while writing checkpoint: " + path);
}

RegressionModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a decreg checkpoint: " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string head_str(len, '\0');
    in.read(head_str.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("truncated checkpoint header: " + path);
    const json header = json::parse(head_str);
    if (header.value("version", 0) != kFormatVersion)
        throw DataError("unsupported checkpoint version");

    ModelConfig config = model_config_from_json(header.at("config"));
    std::mt19937_64 rng(0);
    RegressionModel model(config, rng);
    for (const auto& tj : header.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        const auto shape = tj.at("shape").get<std::vector<int64_t>>();
        Tensor& t = model.params().at(name);
        if (t.shape() != shape) throw DataError("checkpoint tensor shape mismatch for '" + name + "'");
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!in) throw DataError("truncated checkpoint data: " + path);
    if (!header.at("normalizer").is_null())
        model.set_normalizer(normalizer_from_json(header.at("normalizer")));
    return model;
}

}  // namespace decreg
