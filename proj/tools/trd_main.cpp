#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "trd/config.hpp"
#include "trd/image_io.hpp"
#include "trd/trainer.hpp"

namespace fs = std::filesystem;
using namespace trd;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string profile;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON configuration file");
    cmd->add_option("--profile", flags.profile, "backbone profile override (toy|full)");
    cmd->add_option("--out", flags.out, "output directory override");
    cmd->add_option("--seed", flags.seed, "master seed override")->each([&flags](const std::string&) {
        flags.seed_set = true;
    });
}

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg = RunConfig::load(flags.config_path);
    if (flags.seed_set) cfg.seed = flags.seed;
    if (!flags.profile.empty()) cfg.backbone.profile = flags.profile;
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (cfg.data.root.empty()) {
        const char* env = std::getenv("TRD_DATA_ROOT");
        if (env) cfg.data.root = env;
    }
    cfg.validate();
    return cfg;
}

void echo_config(const RunConfig& cfg) {
    std::cout << "resolved config (fingerprint " << cfg.fingerprint() << "):\n" << cfg.to_json().dump(2) << "\n";
}

void check_toy_resolution(const RunConfig& cfg) {
    if (cfg.data.source == "toy" && cfg.toy_config().resolution != cfg.backbone_profile().resolution)
        throw ConfigError("config: data.toy.resolution must match the backbone profile resolution (" +
                          std::to_string(cfg.backbone_profile().resolution) + ")");
}

struct LoadedData {
    std::vector<MultimodalSample> train, val, test;
};

LoadedData load_data(const RunConfig& cfg) {
    LoadedData d;
    if (cfg.data.source == "toy") {
        check_toy_resolution(cfg);
        ToyDataset ds = generate_toy(cfg.toy_config());
        d.train = std::move(ds.train);
        d.val = std::move(ds.val);
        d.test = std::move(ds.test);
    } else {
        if (cfg.data.root.empty())
            throw ConfigError("config: data.root is required for data.source = dir (or set TRD_DATA_ROOT)");
        const int res = cfg.backbone_profile().resolution;
        const Normalization norm = cfg.normalization();
        d.train = load_samples(cfg.data.root, cfg.data.category, "train", res, norm);
        d.val = load_samples(cfg.data.root, cfg.data.category, "validation", res, norm);
        d.test = load_samples(cfg.data.root, cfg.data.category, "test", res, norm);
    }
    return d;
}

int cmd_make_toy(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    echo_config(cfg);
    const ToyConfig toy = cfg.toy_config();
    ToyDataset ds = generate_toy(toy);
    save_toy(ds, cfg.out_dir);
    std::cout << "toy dataset written to " << cfg.out_dir << " (seed " << toy.seed << ", train " << ds.train.size()
              << ", validation " << ds.val.size() << ", test " << ds.test.size() << ")\n";
    return 0;
}

int cmd_train(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    echo_config(cfg);
    std::cout << "training: epochs=" << cfg.trainer.epochs << " batch=" << cfg.trainer.batch_size
              << " lr=" << cfg.trainer.learning_rate << " sigma=" << cfg.score.sigma << "\n";
    LoadedData data = load_data(cfg);

    TrainConfig tc = cfg.train_config();
    tc.verbose = true;
    TrainResult result;
    if (!cfg.trainer.resume_from.empty()) {
        auto model = TRDModel::load_checkpoint(cfg.trainer.resume_from, cfg.backbone.profile);
        std::cout << "resuming from " << cfg.trainer.resume_from << " at epoch " << model->trained_epochs << "\n";
        const int remaining = cfg.trainer.epochs - model->trained_epochs;
        if (remaining < 1) {
            std::cout << "checkpoint already trained for " << model->trained_epochs << " epochs; nothing to do\n";
            return 0;
        }
        tc.epochs = remaining;
        model->config_fingerprint = cfg.fingerprint();
        result = train_model(std::move(model), tc, data.train, data.val);
    } else {
        ModelConfig mc = cfg.model_config();
        auto model = std::make_shared<TRDModel>(mc);
        model->config_fingerprint = cfg.fingerprint();
        result = train_model(std::move(model), tc, data.train, data.val);
    }

    fs::create_directories(cfg.out_dir);
    const std::string ckpt = (fs::path(cfg.out_dir) / "model.ckpt").string();
    result.model->save_checkpoint(ckpt);
    std::ofstream log_file(fs::path(cfg.out_dir) / "trainlog.json");
    log_file << result.log.to_json(!cfg.trainer.reproducible);
    std::ofstream cfg_file(fs::path(cfg.out_dir) / "config.json");
    cfg_file << cfg.to_json().dump(2) << "\n";
    std::cout << "checkpoint written to " << ckpt << " (wall " << result.log.wall_seconds << " s)\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, const std::string& fusion, bool dump_maps) {
    RunConfig cfg = resolve_config(flags);
    if (!fusion.empty()) cfg.score.fusion = fusion;
    cfg.validate();
    echo_config(cfg);

    auto model = TRDModel::load_checkpoint(checkpoint, flags.profile);
    LoadedData data = load_data(cfg);

    EvalOptions opts = cfg.eval_options();
    if (dump_maps) opts.dump_dir = (fs::path(cfg.out_dir) / "maps").string();
    EvalResult result = evaluate_model(*model, data.test, opts);

    fs::create_directories(cfg.out_dir);
    std::ofstream table(fs::path(cfg.out_dir) / "metrics.txt");
    table << result.report.table();
    std::ofstream kv(fs::path(cfg.out_dir) / "metrics.kv");
    kv << result.report.kv();
    std::cout << result.report.table();
    std::cout << "reports written to " << cfg.out_dir << "\n";
    return 0;
}

int cmd_infer(const CommonFlags& flags, const std::string& checkpoint, const std::string& rgb_path,
              const std::string& depth_path) {
    RunConfig cfg = resolve_config(flags);
    echo_config(cfg);

    auto model = TRDModel::load_checkpoint(checkpoint, flags.profile);
    if (!model->calibration)
        throw EvaluationError("infer: checkpoint has no calibration stats; train (which calibrates) first");
    const int res = model->config().profile.resolution;
    const Normalization norm =
        model->config().profile.name == "toy" ? toy_normalization() : imagenet_normalization();
    MultimodalSample sample = load_sample_pair(rgb_path, depth_path, res, norm);

    BranchMaps maps = sample_branch_maps(*model, sample, cfg.score.sigma);
    AnomalyMap fused = fuse(maps.m2d, maps.m3d, *model->calibration, fusion_from_string(cfg.score.fusion));
    const double score = image_score(fused);

    fs::create_directories(cfg.out_dir);
    save_heatmap_png((fs::path(cfg.out_dir) / "fused.png").string(), fused.data);
    save_heatmap_png((fs::path(cfg.out_dir) / "2d.png").string(), maps.m2d.data);
    save_heatmap_png((fs::path(cfg.out_dir) / "3d.png").string(), maps.m3d.data);
    std::ofstream score_file(fs::path(cfg.out_dir) / "score.txt");
    score_file.setf(std::ios::fixed);
    score_file.precision(9);
    score_file << score << "\n";
    std::cout.setf(std::ios::fixed);
    std::cout.precision(9);
    std::cout << "image score: " << score << "\n";
    std::cout << "maps written to " << cfg.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-branch reverse-distillation multimodal anomaly detection"};
    app.require_subcommand(1);

    CommonFlags make_toy_flags, train_flags, eval_flags, infer_flags;
    std::string eval_checkpoint, eval_fusion, infer_checkpoint, infer_rgb, infer_depth;
    bool dump_maps = false;

    CLI::App* make_toy = app.add_subcommand("make-toy", "generate and persist the synthetic toy dataset");
    add_common(make_toy, make_toy_flags);

    CLI::App* train = app.add_subcommand("train", "train a model and write checkpoint + training log");
    add_common(train, train_flags);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint and write metric reports");
    add_common(eval, eval_flags);
    eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval->add_option("--fusion", eval_fusion, "fusion strategy override (norm_sum|sum_raw|product)");
    eval->add_flag("--dump-maps", dump_maps, "write per-sample float grids and heatmaps");

    CLI::App* infer = app.add_subcommand("infer", "score a single sample pair");
    add_common(infer, infer_flags);
    infer->add_option("--checkpoint", infer_checkpoint, "model checkpoint")->required();
    infer->add_option("rgb", infer_rgb, "color image path")->required();
    infer->add_option("depth", infer_depth, "depth/companion image path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (make_toy->parsed()) return cmd_make_toy(make_toy_flags);
        if (train->parsed()) return cmd_train(train_flags);
        if (eval->parsed()) return cmd_eval(eval_flags, eval_checkpoint, eval_fusion, dump_maps);
        if (infer->parsed()) return cmd_infer(infer_flags, infer_checkpoint, infer_rgb, infer_depth);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IngestionError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
