#include "trd/trd_model.hpp"

#include <map>

#include "trd/serialize.hpp"

namespace trd {

namespace {

std::vector<Var> detach_pyramid(const std::vector<Var>& pyr) {
    std::vector<Var> out;
    out.reserve(pyr.size());
    for (const Var& v : pyr) out.push_back(detach(v));
    return out;
}

nlohmann::json profile_to_json(const BackboneProfile& p) {
    return {{"name", p.name},
            {"channels", p.channels},
            {"resolution", p.resolution},
            {"stem_channels", p.stem_channels},
            {"blocks", p.blocks},
            {"weight_source", p.weight_source == WeightSource::kPretrainedFile ? "pretrained-file" : "seeded-random"},
            {"weights_path", p.weights_path},
            {"seed", p.seed}};
}

BackboneProfile profile_from_json(const nlohmann::json& j) {
    BackboneProfile p;
    p.name = j.at("name").get<std::string>();
    p.channels = j.at("channels").get<std::array<int, 3>>();
    p.resolution = j.at("resolution").get<int>();
    p.stem_channels = j.at("stem_channels").get<int>();
    p.blocks = j.at("blocks").get<std::array<int, 3>>();
    p.weights_path = j.at("weights_path").get<std::string>();
    p.weight_source = j.at("weight_source").get<std::string>() == "pretrained-file" ? WeightSource::kPretrainedFile
                                                                                    : WeightSource::kSeeded;
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"profile", profile_to_json(c.profile)},
            {"cf_enabled", c.cf_enabled},
            {"cf_bottleneck", c.cf_bottleneck},
            {"ca_enabled", c.ca_enabled},
            {"ca_expansion", c.ca_expansion},
            {"block_output_to_decoder", c.block_output_to_decoder},
            {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.profile = profile_from_json(j.at("profile"));
    c.cf_enabled = j.at("cf_enabled").get<bool>();
    c.cf_bottleneck = j.at("cf_bottleneck").get<int>();
    c.ca_enabled = j.at("ca_enabled").get<bool>();
    c.ca_expansion = j.at("ca_expansion").get<int>();
    c.block_output_to_decoder = j.at("block_output_to_decoder").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

Branch::Branch(const ModelConfig& cfg) {
    decoder = std::make_unique<StudentDecoder>(cfg.profile, cfg.seed);
    ocbe = std::make_unique<ModifiedOCBE>(cfg.profile, cfg.cf_enabled, derive_seed(cfg.seed, "ocbe"));
    if (cfg.cf_enabled)
        bp = std::make_unique<BottleneckProjection>(cfg.profile, cfg.cf_bottleneck, derive_seed(cfg.seed, "bp"));
    if (cfg.ca_enabled) {
        ibp = std::make_unique<InvertedBottleneckProjection>(cfg.profile, cfg.ca_expansion, derive_seed(cfg.seed, "ibp"));
        fusion = std::make_unique<FusionWeights>();
    }
}

void Branch::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    decoder->collect_params(prefix + "decoder/", out);
    ocbe->collect_params(prefix + "ocbe/", out);
    if (bp) bp->collect_params(prefix + "bp/", out);
    if (ibp) ibp->collect_params(prefix + "ibp/", out);
    if (fusion) fusion->collect_params(prefix + "fusion/", out);
}

std::vector<Var> Branch::decoder_group() const {
    std::vector<Var> out = decoder->params();
    for (const Var& v : ocbe->params()) out.push_back(v);
    return out;
}

std::vector<Var> Branch::filter_group() const { return bp ? bp->params() : std::vector<Var>{}; }

std::vector<Var> Branch::amplifier_group() const {
    std::vector<Var> out;
    if (ibp)
        for (const Var& v : ibp->params()) out.push_back(v);
    if (fusion)
        for (const Var& v : fusion->params()) out.push_back(v);
    return out;
}

TRDModel::TRDModel(const ModelConfig& cfg) : cfg_(cfg) {
    teacher_ = build_teacher(cfg_.profile);
    branch_2d_ = std::make_unique<Branch>(cfg_);
    branch_3d_ = std::make_unique<Branch>(cfg_);
}

TRDOutputs TRDModel::forward(const Var& img_2d, const Var& img_3d) const {
    if (img_2d->value.ndim() != 4 || img_3d->value.ndim() != 4 || img_2d->value.dim(0) != img_3d->value.dim(0))
        throw InputError("forward: both modality batches are required with matching sample counts");

    // one encoder pass per modality, reused by both branches
    std::vector<Var> e2d = teacher_->encode(img_2d);
    std::vector<Var> e3d = teacher_->encode(img_3d);

    auto run_branch = [this](const Branch& br, const std::vector<Var>& own, const std::vector<Var>& other) {
        BranchOutputs out;
        out.f_e_own = own;
        out.f_e_other = other;
        if (cfg_.cf_enabled) {
            out.f_bp_other = br.bp->project(other);
            // the filter alignment loss alone drives the projection
            out.emb = br.ocbe->fuse(own, detach_pyramid(out.f_bp_other));
        } else {
            out.emb = br.ocbe->compress(own);
        }
        out.f_d = br.decoder->decode(out.emb);
        if (cfg_.ca_enabled) {
            out.f_ibp_other = br.ibp->project(other);
            const std::vector<Var>& decoded = cfg_.block_output_to_decoder ? detach_pyramid(out.f_d) : out.f_d;
            out.f_ca = amplify(decoded, out.f_ibp_other, *br.fusion);
        } else {
            out.f_ca = out.f_d;
        }
        return out;
    };

    TRDOutputs out;
    out.branch_2d = run_branch(*branch_2d_, e2d, e3d);
    out.branch_3d = run_branch(*branch_3d_, e3d, e2d);
    return out;
}

Var TRDModel::loss_graph(const TRDOutputs& out, LossBreakdown* breakdown) const {
    std::vector<Var> terms;
    LossBreakdown b;

    auto branch_terms = [&](const BranchOutputs& br, double& d, double& cf, double& ibp_l, double& output_l,
                            double& ca) {
        Var l_d = loss_distill(br.f_e_own, br.f_d);
        d = l_d->value[0];
        terms.push_back(l_d);
        if (cfg_.cf_enabled) {
            Var l_cf = loss_filter(br.f_e_own, br.f_bp_other);
            cf = l_cf->value[0];
            terms.push_back(l_cf);
        }
        if (cfg_.ca_enabled) {
            AmplifierLosses l_ca = loss_amplifier(br.f_e_own, br.f_ibp_other, br.f_ca);
            ibp_l = l_ca.mapping->value[0];
            output_l = l_ca.output->value[0];
            ca = l_ca.total->value[0];
            terms.push_back(l_ca.total);
        }
    };

    branch_terms(out.branch_2d, b.d_2d, b.cf_2d, b.ibp_2d, b.output_2d, b.ca_2d);
    branch_terms(out.branch_3d, b.d_3d, b.cf_3d, b.ibp_3d, b.output_3d, b.ca_3d);

    Var total = ops::add_scalars(terms);
    b.total = total->value[0];
    if (breakdown) *breakdown = b;
    return total;
}

std::vector<nn::NamedParam> TRDModel::named_params() const {
    std::vector<nn::NamedParam> out;
    teacher_->collect_params("teacher/", out);
    branch_2d_->collect_params("branch2d/", out);
    branch_3d_->collect_params("branch3d/", out);
    return out;
}

std::vector<nn::NamedParam> TRDModel::trainable_params() const {
    std::vector<nn::NamedParam> out;
    branch_2d_->collect_params("branch2d/", out);
    branch_3d_->collect_params("branch3d/", out);
    return out;
}

void TRDModel::save_checkpoint(const std::string& path) const {
    TensorArchive a;
    a.meta["format_version"] = 1;
    a.meta["kind"] = "checkpoint";
    a.meta["config"] = model_config_to_json(cfg_);
    a.meta["config_fingerprint"] = config_fingerprint;
    a.meta["trained_epochs"] = trained_epochs;
    if (calibration) {
        a.meta["calibration"] = {{"mu_2d", calibration->mu_2d},
                                 {"sigma_2d", calibration->sigma_2d},
                                 {"mu_3d", calibration->mu_3d},
                                 {"sigma_3d", calibration->sigma_3d}};
    } else {
        a.meta["calibration"] = nullptr;
    }
    for (const auto& p : named_params()) a.tensors.emplace_back(p.name, p.var->value);
    a.save(path);
}

std::shared_ptr<TRDModel> TRDModel::load_checkpoint(const std::string& path, const std::string& expected_profile) {
    TensorArchive a = TensorArchive::load(path);
    if (!a.meta.contains("kind") || a.meta["kind"] != "checkpoint")
        throw CheckpointError("not a model checkpoint: " + path);
    if (a.meta.value("format_version", 0) != 1)
        throw CheckpointError("unsupported checkpoint version in " + path);
    ModelConfig cfg;
    try {
        cfg = model_config_from_json(a.meta.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
    }
    if (!expected_profile.empty() && cfg.profile.name != expected_profile)
        throw CheckpointError("checkpoint profile '" + cfg.profile.name + "' does not match requested profile '" +
                              expected_profile + "'");
    // parameters come from the archive; never require the original weight file
    cfg.profile.weight_source = WeightSource::kSeeded;

    auto model = std::make_shared<TRDModel>(cfg);
    std::map<std::string, Tensor*> by_name;
    auto params = model->named_params();
    for (auto& p : params) by_name[p.name] = &p.var->value;
    size_t assigned = 0;
    for (auto& [name, t] : a.tensors) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint has unknown tensor '" + name + "'");
        if (!(it->second->shape() == t.shape()))
            throw CheckpointError("checkpoint shape mismatch for '" + name + "'");
        *it->second = std::move(t);
        ++assigned;
    }
    if (assigned != by_name.size()) throw CheckpointError("checkpoint is missing tensors: " + path);

    model->config_fingerprint = a.meta.value("config_fingerprint", "");
    model->trained_epochs = a.meta.value("trained_epochs", 0);
    if (a.meta.contains("calibration") && !a.meta["calibration"].is_null()) {
        CalibrationStats stats;
        stats.mu_2d = a.meta["calibration"].at("mu_2d").get<double>();
        stats.sigma_2d = a.meta["calibration"].at("sigma_2d").get<double>();
        stats.mu_3d = a.meta["calibration"].at("mu_3d").get<double>();
        stats.sigma_3d = a.meta["calibration"].at("sigma_3d").get<double>();
        model->calibration = stats;
    }
    return model;
}

}  // namespace trd
