#pragma once

#include <string>

#include <json.hpp>

#include "trd/datasets.hpp"
#include "trd/scoring.hpp"
#include "trd/trainer.hpp"
#include "trd/trd_model.hpp"

namespace trd {

// Resolved run configuration. Every knob has a default; unknown keys in the
// input are rejected; the fully materialized config is echoed at run start
// and fingerprinted into checkpoints and reports.
struct RunConfig {
    // master seed; backbone/toy/trainer seeds default to it
    std::uint64_t seed = 0;

    struct Backbone {
        std::string profile = "toy";  // {full, toy}
        std::string weights_path;
        std::uint64_t seed = 0;
        bool seed_set = false;
    } backbone;

    struct Cf {
        bool enabled = true;
        int bottleneck_size = 0;  // 0 -> profile default (full: 8, toy: 4)
    } cf;

    struct Ca {
        bool enabled = true;
        int expansion = 2;
    } ca;

    struct Score {
        double sigma = 4.0;
        std::string fusion = "norm_sum";
    } score;

    struct Metrics {
        double pro_fpr_limit = 0.3;
    } metrics;

    struct Trainer {
        int epochs = 200;
        int batch_size = 16;
        double learning_rate = 0.005;
        bool block_output_to_decoder = true;
        bool reproducible = true;
        std::string resume_from;
    } trainer;

    struct Data {
        std::string source = "toy";  // {toy, dir}
        std::string root;            // defaults to $TRD_DATA_ROOT
        std::string category = "toy";
        ToyConfig toy;
        bool toy_seed_set = false;
    } data;

    std::string out_dir = "runs/latest";

    // parse + validate + materialize defaults; path may be empty (defaults only)
    static RunConfig load(const std::string& config_path);
    static RunConfig from_json(const nlohmann::json& j);

    nlohmann::json to_json() const;  // resolved config
    std::string fingerprint() const;

    void validate() const;
    BackboneProfile backbone_profile() const;
    ModelConfig model_config() const;
    TrainConfig train_config() const;
    EvalOptions eval_options() const;
    ToyConfig toy_config() const;
    Normalization normalization() const;
    int resolved_bottleneck() const;
};

}  // namespace trd
