#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trd/calibration.hpp"
#include "trd/crossmodal_amplifier.hpp"
#include "trd/crossmodal_filter.hpp"
#include "trd/networks.hpp"
#include "trd/objectives.hpp"

namespace trd {

struct ModelConfig {
    BackboneProfile profile;
    bool cf_enabled = true;
    int cf_bottleneck = 8;
    bool ca_enabled = true;
    int ca_expansion = 2;
    // When true, the output-consistency loss does not reach the student
    // decoder through the fusion: the decoder is driven by the distillation
    // loss alone.
    bool block_output_to_decoder = true;
    std::uint64_t seed = 0;
};

struct BranchOutputs {
    std::vector<Var> f_e_own, f_e_other;
    std::vector<Var> f_bp_other;   // empty when the filter is disabled
    Var emb;
    std::vector<Var> f_d;
    std::vector<Var> f_ibp_other;  // empty when the amplifier is disabled
    std::vector<Var> f_ca;         // == f_d when the amplifier is disabled
};

struct TRDOutputs {
    BranchOutputs branch_2d, branch_3d;
};

// One modality branch's trainables. Module init seeds are derived without
// the branch tag, so freshly built branches start identical; training
// decorrelates them.
struct Branch {
    Branch(const ModelConfig& cfg);

    std::unique_ptr<StudentDecoder> decoder;
    std::unique_ptr<ModifiedOCBE> ocbe;
    std::unique_ptr<BottleneckProjection> bp;          // null when cf disabled
    std::unique_ptr<InvertedBottleneckProjection> ibp; // null when ca disabled
    std::unique_ptr<FusionWeights> fusion;             // null when ca disabled

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const;
    // optimizer groups
    std::vector<Var> decoder_group() const;    // decoder + ocbe
    std::vector<Var> filter_group() const;     // bp
    std::vector<Var> amplifier_group() const;  // ibp + fusion weights
};

class TRDModel {
public:
    explicit TRDModel(const ModelConfig& cfg);

    // img tensors: N x 3 x res x res, same N. Exactly two encoder passes.
    TRDOutputs forward(const Var& img_2d, const Var& img_3d) const;

    // total-loss graph node for one backward pass (gradients land partitioned
    // by construction: each parameter group is reached by exactly its loss)
    Var loss_graph(const TRDOutputs& out, LossBreakdown* breakdown = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    const std::shared_ptr<TeacherEncoder>& teacher() const { return teacher_; }
    Branch& branch_2d() { return *branch_2d_; }
    Branch& branch_3d() { return *branch_3d_; }
    const Branch& branch_2d() const { return *branch_2d_; }
    const Branch& branch_3d() const { return *branch_3d_; }

    std::vector<nn::NamedParam> named_params() const;     // teacher + both branches
    std::vector<nn::NamedParam> trainable_params() const;

    void save_checkpoint(const std::string& path) const;
    // expected_profile: when non-empty, a stored profile name mismatch is a
    // checkpoint error
    static std::shared_ptr<TRDModel> load_checkpoint(const std::string& path,
                                                     const std::string& expected_profile = "");

    std::optional<CalibrationStats> calibration;
    int trained_epochs = 0;
    std::string config_fingerprint;

private:
    ModelConfig cfg_;
    std::shared_ptr<TeacherEncoder> teacher_;
    std::unique_ptr<Branch> branch_2d_, branch_3d_;
};

}  // namespace trd
