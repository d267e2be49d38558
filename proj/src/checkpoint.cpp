#include "glf/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "glf/errors.hpp"

namespace glf::ckpt {

namespace {

constexpr int kFormatVersion = 1;

using nlohmann::json;

json config_to_json(const model::ModelConfig& c) {
    return json{{"channels", c.channels}, {"seq_len", c.seq_len},
                {"t_f", c.t_f},           {"d_model", c.d_model},
                {"heads", c.heads},       {"kernel", c.kernel},
                {"enc_layers", c.enc_layers}, {"scale_dim", c.scale_dim},
                {"wq_init", c.wq_init},   {"init", c.init},
                {"bias", c.bias}};
}

model::ModelConfig config_from_json(const json& j) {
    model::ModelConfig c;
    c.channels = j.at("channels").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.t_f = j.at("t_f").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.enc_layers = j.at("enc_layers").get<std::size_t>();
    c.scale_dim = j.at("scale_dim").get<std::size_t>();
    c.wq_init = j.at("wq_init").get<double>();
    c.init = j.at("init").get<double>();
    c.bias = j.at("bias").get<bool>();
    return c;
}

json cnn_config_to_json(const baseline::CnnConfig& c) {
    return json{{"channels", c.channels}, {"seq_len", c.seq_len}, {"t_f", c.t_f},
                {"width", c.width},       {"depth", c.depth},     {"kernel", c.kernel},
                {"init", c.init}};
}

baseline::CnnConfig cnn_config_from_json(const json& j) {
    baseline::CnnConfig c;
    c.channels = j.at("channels").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.t_f = j.at("t_f").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.init = j.at("init").get<double>();
    return c;
}

const char* class_name(model::ParamClass cls) {
    return cls == model::ParamClass::Group ? "group" : "plain";
}

void write_doc(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << doc.dump(1) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

json read_doc(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError(path + ": not a valid checkpoint: " + e.what());
    }
    return doc;
}

std::string kind_of(const std::string& path, const json& doc) {
    try {
        if (doc.at("format_version").get<int>() != kFormatVersion)
            throw IoError(path + ": unsupported checkpoint format version");
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind != "attention" && kind != "cnn")
            throw IoError(path + ": unknown checkpoint kind '" + kind + "'");
        return kind;
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint: " + e.what());
    }
}

// Overwrites every enumerated tensor from doc["params"], enforcing exact
// name/size/label agreement in both directions.
void restore_params(const std::string& path, const json& doc,
                    const std::vector<model::ParamRef>& refs) {
    const json& values = doc.at("params");
    const json& labels = doc.at("labels");
    std::size_t consumed = 0;
    for (const model::ParamRef& r : refs) {
        if (!values.contains(r.name))
            throw IoError(path + ": missing parameter '" + r.name + "'");
        const auto stored = values.at(r.name).get<std::vector<double>>();
        if (stored.size() != r.tensor.size())
            throw IoError(path + ": parameter '" + r.name + "' has " +
                          std::to_string(stored.size()) + " values, expected " +
                          std::to_string(r.tensor.size()));
        if (!labels.contains(r.name) ||
            labels.at(r.name).get<std::string>() != class_name(r.cls))
            throw IoError(path + ": parameter '" + r.name + "' has a wrong or missing label");
        Tensor t = r.tensor;
        std::copy(stored.begin(), stored.end(), t.data().begin());
        ++consumed;
    }
    if (values.size() != consumed)
        throw IoError(path + ": checkpoint holds " + std::to_string(values.size()) +
                      " parameters, model expects " + std::to_string(consumed));
}

json params_to_json(const std::vector<model::ParamRef>& refs, json& labels) {
    json values = json::object();
    for (const model::ParamRef& r : refs) {
        check_finite(r.tensor, "checkpoint save");
        values[r.name] = r.tensor.data();
        labels[r.name] = class_name(r.cls);
    }
    return values;
}

}  // namespace

void save(const std::string& path, const model::ModelParams& params,
          std::uint64_t rng_state, bool pruned, double prune_threshold) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["kind"] = "attention";
    doc["config"] = config_to_json(params.cfg);
    doc["rng_state"] = rng_state;
    doc["pruned"] = pruned;
    if (std::isnan(prune_threshold))
        throw NumericError("prune threshold must not be NaN");
    // JSON has no infinity; an unbounded threshold round-trips as null
    doc["prune_threshold"] = prune_threshold;
    json labels = json::object();
    doc["params"] = params_to_json(model::enumerate(params), labels);
    doc["labels"] = std::move(labels);
    write_doc(path, doc);
}

Checkpoint load(const std::string& path) {
    const json doc = read_doc(path);
    if (kind_of(path, doc) != "attention")
        throw IoError(path + ": not an attention checkpoint (kind is 'cnn')");
    try {
        Checkpoint ck;
        const model::ModelConfig cfg = config_from_json(doc.at("config"));
        Rng scratch(0);  // shapes come from the config; values are overwritten
        ck.params = model::ModelParams::init(cfg, scratch);
        ck.rng_state = doc.at("rng_state").get<std::uint64_t>();
        ck.pruned = doc.at("pruned").get<bool>();
        const json& pt = doc.at("prune_threshold");
        ck.prune_threshold =
            pt.is_null() ? std::numeric_limits<double>::infinity() : pt.get<double>();
        restore_params(path, doc, model::enumerate(ck.params));
        return ck;
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint: " + e.what());
    }
}

void save_cnn(const std::string& path, const baseline::Cnn1dModel& m,
              std::uint64_t rng_state) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["kind"] = "cnn";
    doc["config"] = cnn_config_to_json(m.cfg);
    doc["rng_state"] = rng_state;
    json labels = json::object();
    doc["params"] = params_to_json(baseline::cnn_parameters(m), labels);
    doc["labels"] = std::move(labels);
    write_doc(path, doc);
}

CnnCheckpoint load_cnn(const std::string& path) {
    const json doc = read_doc(path);
    if (kind_of(path, doc) != "cnn")
        throw IoError(path + ": not a cnn checkpoint (kind is 'attention')");
    try {
        CnnCheckpoint ck;
        const baseline::CnnConfig cfg = cnn_config_from_json(doc.at("config"));
        Rng scratch(0);
        ck.model = baseline::Cnn1dModel::init(cfg, scratch);
        ck.rng_state = doc.at("rng_state").get<std::uint64_t>();
        restore_params(path, doc, baseline::cnn_parameters(ck.model));
        return ck;
    } catch (const json::exception& e) {
        throw IoError(path + ": malformed checkpoint: " + e.what());
    }
}

std::string peek_kind(const std::string& path) {
    const json doc = read_doc(path);
    return kind_of(path, doc);
}

}  // namespace glf::ckpt
