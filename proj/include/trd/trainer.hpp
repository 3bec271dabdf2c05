#pragma once

#include <memory>
#include <string>
#include <vector>

#include "trd/datasets.hpp"
#include "trd/metrics.hpp"
#include "trd/scoring.hpp"
#include "trd/trd_model.hpp"

namespace trd {

struct TrainConfig {
    int epochs = 200;
    int batch_size = 16;
    double learning_rate = 0.005;
    std::uint64_t seed = 0;
    bool reproducible = true;   // omit wall time from the persisted log
    double score_sigma = 4.0;   // used for post-training calibration
    bool verbose = false;       // epoch progress to stdout
};

class Adam {
public:
    Adam(std::vector<Var> params, double lr);

    void zero_grad();
    void step();
    size_t size() const { return params_.size(); }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_;
    std::int64_t t_ = 0;
};

struct TrainLog {
    std::vector<LossBreakdown> epochs;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    double wall_seconds = 0.0;

    // include_timing=false produces byte-stable output for reproducibility
    // comparisons
    std::string to_json(bool include_timing) const;
};

struct TrainResult {
    std::shared_ptr<TRDModel> model;
    TrainLog log;
};

// Builds the model from model_cfg and trains it: one Adam instance per
// parameter group per branch (decoder+ocbe / filter projection / amplifier),
// calibration on the validation normals after the final epoch.
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const std::vector<MultimodalSample>& train_data,
                        const std::vector<MultimodalSample>& val_data);
// resume variant: continues an existing model from model->trained_epochs
TrainResult train_model(std::shared_ptr<TRDModel> model, const TrainConfig& train_cfg,
                        const std::vector<MultimodalSample>& train_data,
                        const std::vector<MultimodalSample>& val_data);

struct EvalOptions {
    double sigma = 4.0;
    FusionStrategy fusion = FusionStrategy::kNormSum;
    double pro_fpr_limit = 0.3;
    std::string dump_dir;  // when set, per-sample float grids + heatmaps are written
};

struct EvalResult {
    MetricsReport report;
    std::vector<double> image_scores;  // per test sample, input order
    std::vector<int> labels;
    std::vector<Tensor> fused_maps;
};

EvalResult evaluate_model(const TRDModel& model, const std::vector<MultimodalSample>& test_data,
                          const EvalOptions& opts);

}  // namespace trd
