#include "trd/config.hpp"

#include <cstdlib>
#include <fstream>

namespace trd {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& scope) {
    if (!j.is_object()) throw ConfigError("config: " + (scope.empty() ? std::string("top level") : scope) + " must be an object");
    for (const auto& [key, val] : j.items()) {
        bool ok = false;
        for (const auto& k : known)
            if (k == key) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + (scope.empty() ? key : scope + "." + key) + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& scope) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value type for '" + scope + "." + key + "'");
    }
}

}  // namespace

RunConfig RunConfig::load(const std::string& config_path) {
    if (config_path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    std::ifstream f(config_path);
    if (!f) throw ConfigError("config file not found: " + config_path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + config_path + ": " + e.what());
    }
    return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    reject_unknown(j, {"seed", "backbone", "cf", "ca", "score", "metrics", "trainer", "data", "out_dir"}, "");
    read(j, "seed", cfg.seed, "");
    read(j, "out_dir", cfg.out_dir, "");

    if (j.contains("backbone")) {
        const json& b = j["backbone"];
        reject_unknown(b, {"profile", "weights_path", "seed"}, "backbone");
        read(b, "profile", cfg.backbone.profile, "backbone");
        read(b, "weights_path", cfg.backbone.weights_path, "backbone");
        if (b.contains("seed")) {
            read(b, "seed", cfg.backbone.seed, "backbone");
            cfg.backbone.seed_set = true;
        }
    }
    if (j.contains("cf")) {
        const json& c = j["cf"];
        reject_unknown(c, {"enabled", "bottleneck_size"}, "cf");
        read(c, "enabled", cfg.cf.enabled, "cf");
        read(c, "bottleneck_size", cfg.cf.bottleneck_size, "cf");
    }
    if (j.contains("ca")) {
        const json& c = j["ca"];
        reject_unknown(c, {"enabled", "expansion"}, "ca");
        read(c, "enabled", cfg.ca.enabled, "ca");
        read(c, "expansion", cfg.ca.expansion, "ca");
    }
    if (j.contains("score")) {
        const json& s = j["score"];
        reject_unknown(s, {"sigma", "fusion"}, "score");
        read(s, "sigma", cfg.score.sigma, "score");
        read(s, "fusion", cfg.score.fusion, "score");
    }
    if (j.contains("metrics")) {
        const json& m = j["metrics"];
        reject_unknown(m, {"pro_fpr_limit"}, "metrics");
        read(m, "pro_fpr_limit", cfg.metrics.pro_fpr_limit, "metrics");
    }
    if (j.contains("trainer")) {
        const json& t = j["trainer"];
        reject_unknown(t, {"epochs", "batch_size", "learning_rate", "block_output_to_decoder", "reproducible",
                           "resume_from"},
                       "trainer");
        read(t, "epochs", cfg.trainer.epochs, "trainer");
        read(t, "batch_size", cfg.trainer.batch_size, "trainer");
        read(t, "learning_rate", cfg.trainer.learning_rate, "trainer");
        read(t, "block_output_to_decoder", cfg.trainer.block_output_to_decoder, "trainer");
        read(t, "reproducible", cfg.trainer.reproducible, "trainer");
        read(t, "resume_from", cfg.trainer.resume_from, "trainer");
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown(d, {"source", "root", "category", "toy"}, "data");
        read(d, "source", cfg.data.source, "data");
        read(d, "root", cfg.data.root, "data");
        read(d, "category", cfg.data.category, "data");
        if (d.contains("toy")) {
            const json& t = d["toy"];
            reject_unknown(t,
                           {"resolution", "n_train", "n_val", "n_test", "anomaly_modality_mix", "anomaly_fraction",
                            "blob_radius_min", "blob_radius_max", "seed"},
                           "data.toy");
            read(t, "resolution", cfg.data.toy.resolution, "data.toy");
            read(t, "n_train", cfg.data.toy.n_train, "data.toy");
            read(t, "n_val", cfg.data.toy.n_val, "data.toy");
            read(t, "n_test", cfg.data.toy.n_test, "data.toy");
            read(t, "anomaly_modality_mix", cfg.data.toy.anomaly_modality_mix, "data.toy");
            read(t, "anomaly_fraction", cfg.data.toy.anomaly_fraction, "data.toy");
            read(t, "blob_radius_min", cfg.data.toy.blob_radius_min, "data.toy");
            read(t, "blob_radius_max", cfg.data.toy.blob_radius_max, "data.toy");
            if (t.contains("seed")) {
                read(t, "seed", cfg.data.toy.seed, "data.toy");
                cfg.data.toy_seed_set = true;
            }
        }
    }
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    if (backbone.profile != "toy" && backbone.profile != "full")
        throw ConfigError("config: unknown backbone.profile '" + backbone.profile + "' (expected toy or full)");
    if (ca.expansion != 1 && ca.expansion != 2 && ca.expansion != 4)
        throw ConfigError("config: ca.expansion must be one of {1, 2, 4}");
    if (cf.bottleneck_size < 0) throw ConfigError("config: cf.bottleneck_size must be positive");
    if (!(score.sigma > 0.0)) throw ConfigError("config: score.sigma must be positive");
    fusion_from_string(score.fusion);
    if (!(metrics.pro_fpr_limit > 0.0 && metrics.pro_fpr_limit <= 1.0))
        throw ConfigError("config: metrics.pro_fpr_limit must be in (0, 1]");
    if (trainer.epochs < 1 || trainer.batch_size < 1)
        throw ConfigError("config: trainer.epochs and trainer.batch_size must be >= 1");
    if (!(trainer.learning_rate > 0.0)) throw ConfigError("config: trainer.learning_rate must be positive");
    if (data.source != "toy" && data.source != "dir")
        throw ConfigError("config: data.source must be 'toy' or 'dir'");
    toy_config().validate();
}

int RunConfig::resolved_bottleneck() const {
    if (cf.bottleneck_size > 0) return cf.bottleneck_size;
    return backbone.profile == "toy" ? 4 : 8;
}

BackboneProfile RunConfig::backbone_profile() const {
    const std::uint64_t bseed = backbone.seed_set ? backbone.seed : seed;
    if (backbone.profile == "toy") return BackboneProfile::toy(bseed);
    if (!backbone.weights_path.empty()) return BackboneProfile::full(backbone.weights_path);
    return BackboneProfile::full_seeded(bseed);
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.profile = backbone_profile();
    m.cf_enabled = cf.enabled;
    m.cf_bottleneck = resolved_bottleneck();
    m.ca_enabled = ca.enabled;
    m.ca_expansion = ca.expansion;
    m.block_output_to_decoder = trainer.block_output_to_decoder;
    m.seed = seed;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs = trainer.epochs;
    t.batch_size = trainer.batch_size;
    t.learning_rate = trainer.learning_rate;
    t.seed = seed;
    t.reproducible = trainer.reproducible;
    t.score_sigma = score.sigma;
    return t;
}

EvalOptions RunConfig::eval_options() const {
    EvalOptions e;
    e.sigma = score.sigma;
    e.fusion = fusion_from_string(score.fusion);
    e.pro_fpr_limit = metrics.pro_fpr_limit;
    return e;
}

ToyConfig RunConfig::toy_config() const {
    ToyConfig t = data.toy;
    if (!data.toy_seed_set) t.seed = seed;
    return t;
}

Normalization RunConfig::normalization() const {
    return backbone.profile == "toy" ? toy_normalization() : imagenet_normalization();
}

nlohmann::json RunConfig::to_json() const {
    const ToyConfig t = toy_config();
    return {{"seed", seed},
            {"backbone",
             {{"profile", backbone.profile},
              {"weights_path", backbone.weights_path},
              {"seed", backbone.seed_set ? backbone.seed : seed}}},
            {"cf", {{"enabled", cf.enabled}, {"bottleneck_size", resolved_bottleneck()}}},
            {"ca", {{"enabled", ca.enabled}, {"expansion", ca.expansion}}},
            {"score", {{"sigma", score.sigma}, {"fusion", score.fusion}}},
            {"metrics", {{"pro_fpr_limit", metrics.pro_fpr_limit}}},
            {"trainer",
             {{"epochs", trainer.epochs},
              {"batch_size", trainer.batch_size},
              {"learning_rate", trainer.learning_rate},
              {"block_output_to_decoder", trainer.block_output_to_decoder},
              {"reproducible", trainer.reproducible},
              {"resume_from", trainer.resume_from}}},
            {"data",
             {{"source", data.source},
              {"root", data.root},
              {"category", data.category},
              {"toy",
               {{"resolution", t.resolution},
                {"n_train", t.n_train},
                {"n_val", t.n_val},
                {"n_test", t.n_test},
                {"anomaly_modality_mix", t.anomaly_modality_mix},
                {"anomaly_fraction", t.anomaly_fraction},
                {"blob_radius_min", t.blob_radius_min},
                {"blob_radius_max", t.blob_radius_max},
                {"seed", t.seed}}}}},
            {"out_dir", out_dir}};
}

std::string RunConfig::fingerprint() const {
    // out_dir only says where results land; it must not change the
    // computation's identity
    nlohmann::json j = to_json();
    j.erase("out_dir");
    const std::string dump = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : dump) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace trd
