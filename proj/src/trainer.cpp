#include "trd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "trd/image_io.hpp"
#include "trd/random.hpp"

namespace trd {

Adam::Adam(std::vector<Var> params, double lr) : params_(std::move(params)), lr_(lr) {
    if (lr_ <= 0.0) throw ConfigError("adam: learning rate must be positive");
    for (const Var& p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::zero_grad() {
    for (const Var& p : params_) p->zero_grad();
}

void Adam::step() {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (p->grad.empty()) continue;  // no gradient reached this step
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t k = 0; k < p->value.size(); ++k) {
            const double g = p->grad[k];
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            p->value[k] -= lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
        }
    }
}

namespace {

struct Batch {
    Var img_2d, img_3d;
};

Batch make_batch(const std::vector<MultimodalSample>& data, const std::vector<int>& indices, size_t begin, size_t end) {
    const Tensor& first2d = data[static_cast<size_t>(indices[begin])].image_2d;
    const int n = static_cast<int>(end - begin);
    Tensor b2({n, first2d.dim(0), first2d.dim(1), first2d.dim(2)});
    Tensor b3({n, first2d.dim(0), first2d.dim(1), first2d.dim(2)});
    for (size_t k = begin; k < end; ++k) {
        const MultimodalSample& s = data[static_cast<size_t>(indices[k])];
        if (s.image_2d.empty() || s.image_3d.empty()) throw InputError("training sample is missing a modality");
        std::copy(s.image_2d.data(), s.image_2d.data() + s.image_2d.size(),
                  b2.data() + static_cast<std::int64_t>(k - begin) * s.image_2d.size());
        std::copy(s.image_3d.data(), s.image_3d.data() + s.image_3d.size(),
                  b3.data() + static_cast<std::int64_t>(k - begin) * s.image_3d.size());
    }
    return {make_var(std::move(b2), false), make_var(std::move(b3), false)};
}

void fisher_yates(std::vector<int>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double weight) {
    acc.d_2d += weight * b.d_2d;
    acc.cf_2d += weight * b.cf_2d;
    acc.ibp_2d += weight * b.ibp_2d;
    acc.output_2d += weight * b.output_2d;
    acc.ca_2d += weight * b.ca_2d;
    acc.d_3d += weight * b.d_3d;
    acc.cf_3d += weight * b.cf_3d;
    acc.ibp_3d += weight * b.ibp_3d;
    acc.output_3d += weight * b.output_3d;
    acc.ca_3d += weight * b.ca_3d;
    acc.total += weight * b.total;
}

}  // namespace

TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                        const std::vector<MultimodalSample>& train_data,
                        const std::vector<MultimodalSample>& val_data) {
    auto model = std::make_shared<TRDModel>(model_cfg);
    return train_model(std::move(model), train_cfg, train_data, val_data);
}

TrainResult train_model(std::shared_ptr<TRDModel> model, const TrainConfig& train_cfg,
                        const std::vector<MultimodalSample>& train_data,
                        const std::vector<MultimodalSample>& val_data) {
    if (train_cfg.epochs < 1 || train_cfg.batch_size < 1) throw ConfigError("trainer: epochs and batch size must be >= 1");
    if (train_data.empty()) throw DataError("trainer: training set is empty");
    for (const MultimodalSample& s : train_data)
        if (s.label != Label::kNormal)
            throw DataError("trainer: anomalous sample in training data (split=" + s.split +
                            ", index=" + std::to_string(s.index) + ")");
    for (const MultimodalSample& s : val_data)
        if (s.label != Label::kNormal)
            throw DataError("trainer: anomalous sample in validation data (index=" + std::to_string(s.index) + ")");

    // one optimizer per part per branch
    std::vector<Adam> optimizers;
    for (const Branch* br : {&model->branch_2d(), &model->branch_3d()}) {
        optimizers.emplace_back(br->decoder_group(), train_cfg.learning_rate);
        if (!br->filter_group().empty()) optimizers.emplace_back(br->filter_group(), train_cfg.learning_rate);
        if (!br->amplifier_group().empty()) optimizers.emplace_back(br->amplifier_group(), train_cfg.learning_rate);
    }

    TrainLog log;
    log.seed = train_cfg.seed;
    log.config_fingerprint = model->config_fingerprint;

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> indices(train_data.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);

    const int first_epoch = model->trained_epochs;
    for (int epoch = first_epoch; epoch < first_epoch + train_cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(train_cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        fisher_yates(indices, shuffle_rng);

        LossBreakdown epoch_mean;
        std::int64_t seen = 0;
        for (size_t begin = 0; begin < indices.size(); begin += static_cast<size_t>(train_cfg.batch_size)) {
            const size_t end = std::min(indices.size(), begin + static_cast<size_t>(train_cfg.batch_size));
            Batch batch = make_batch(train_data, indices, begin, end);
            TRDOutputs out = model->forward(batch.img_2d, batch.img_3d);
            LossBreakdown b;
            Var loss = model->loss_graph(out, &b);
            if (!b.all_finite())
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch + 1) + " (" + b.to_string() + ")");
            for (Adam& opt : optimizers) opt.zero_grad();
            backward(loss);
            for (Adam& opt : optimizers) opt.step();
            accumulate(epoch_mean, b, static_cast<double>(end - begin));
            seen += static_cast<std::int64_t>(end - begin);
        }
        const double inv = 1.0 / static_cast<double>(seen);
        LossBreakdown scaled;
        accumulate(scaled, epoch_mean, inv);
        log.epochs.push_back(scaled);
        if (train_cfg.verbose)
            std::printf("epoch %d/%d  %s\n", epoch + 1, first_epoch + train_cfg.epochs, scaled.to_string().c_str());
    }
    model->trained_epochs = first_epoch + train_cfg.epochs;

    if (!val_data.empty()) model->calibration = calibrate(*model, val_data, train_cfg.score_sigma);

    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(model), std::move(log)};
}

std::string TrainLog::to_json(bool include_timing) const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(12);
    os << "{\n  \"seed\": " << seed << ",\n  \"config_fingerprint\": \"" << config_fingerprint << "\",\n";
    if (include_timing) os << "  \"wall_seconds\": " << wall_seconds << ",\n";
    os << "  \"epochs\": [\n";
    for (size_t i = 0; i < epochs.size(); ++i) {
        const LossBreakdown& b = epochs[i];
        os << "    {\"epoch\": " << (i + 1) << ", \"total\": " << b.total << ", \"d_2d\": " << b.d_2d
           << ", \"cf_2d\": " << b.cf_2d << ", \"ibp_2d\": " << b.ibp_2d << ", \"output_2d\": " << b.output_2d
           << ", \"ca_2d\": " << b.ca_2d << ", \"d_3d\": " << b.d_3d << ", \"cf_3d\": " << b.cf_3d
           << ", \"ibp_3d\": " << b.ibp_3d << ", \"output_3d\": " << b.output_3d << ", \"ca_3d\": " << b.ca_3d << "}"
           << (i + 1 < epochs.size() ? ",\n" : "\n");
    }
    os << "  ]\n}\n";
    return os.str();
}

EvalResult evaluate_model(const TRDModel& model, const std::vector<MultimodalSample>& test_data,
                          const EvalOptions& opts) {
    if (!model.calibration)
        throw EvaluationError("evaluate: checkpoint has no calibration stats; run calibration (training computes it "
                              "on the validation set)");
    if (test_data.empty()) throw EvaluationError("evaluate: test set is empty");

    namespace fs = std::filesystem;
    if (!opts.dump_dir.empty()) fs::create_directories(opts.dump_dir);

    EvalResult result;
    ScoredSet image_set;
    PixelEval pixels;
    const int res = model.config().profile.resolution;
    std::string category = test_data.front().category;

    for (const MultimodalSample& s : test_data) {
        BranchMaps maps = sample_branch_maps(model, s, opts.sigma);
        AnomalyMap fused = fuse(maps.m2d, maps.m3d, *model.calibration, opts.fusion);
        const double score = image_score(fused);
        image_set.scores.push_back(score);
        image_set.labels.push_back(s.label == Label::kAnomalous ? 1 : 0);
        result.image_scores.push_back(score);
        result.labels.push_back(s.label == Label::kAnomalous ? 1 : 0);

        Tensor mask = s.mask.empty() ? Tensor({res, res}) : s.mask;
        pixels.maps.push_back(fused.data);
        pixels.masks.push_back(mask);

        if (!opts.dump_dir.empty()) {
            char stem[64];
            std::snprintf(stem, sizeof(stem), "%s_%03d", s.defect.c_str(), s.index);
            const fs::path base = fs::path(opts.dump_dir) / stem;
            save_float_grid(base.string() + "_fused.bin", fused.data);
            save_float_grid(base.string() + "_2d.bin", maps.m2d.data);
            save_float_grid(base.string() + "_3d.bin", maps.m3d.data);
            save_heatmap_png(base.string() + "_fused.png", fused.data, s.mask.empty() ? nullptr : &mask);
            save_heatmap_png(base.string() + "_2d.png", maps.m2d.data);
            save_heatmap_png(base.string() + "_3d.png", maps.m3d.data);
        }
        result.fused_maps.push_back(std::move(fused.data));
    }

    MetricsValues values = evaluate_all(image_set, pixels, opts.pro_fpr_limit);
    result.report.categories.emplace_back(category, values);
    result.report.config_fingerprint = model.config_fingerprint;
    return result;
}

}  // namespace trd
