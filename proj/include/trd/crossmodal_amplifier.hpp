#pragma once

#include <memory>
#include <vector>

#include "trd/networks.hpp"

namespace trd {

// Expand-then-compress crossmodal mapping: per level 1x1 conv to
// expansion * C_i channels, ReLU, 3x3 conv, ReLU, 1x1 conv back to C_i.
// Spatial resolution is untouched.
class InvertedBottleneckProjection : public nn::Module {
public:
    InvertedBottleneckProjection(const BackboneProfile& profile, int expansion, std::uint64_t seed);

    std::vector<Var> project(const std::vector<Var>& other) const;

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
    int expansion() const { return expansion_; }
    int internal_channels(int level) const { return expansion_ * profile_.level_channels(level); }

private:
    BackboneProfile profile_;
    int expansion_;
    struct LevelPath {
        std::unique_ptr<nn::Conv2d> expand, mid, compress;
    };
    std::array<LevelPath, 3> paths_;
};

// Per-level scalar fusion weights of the learned softmax blend, initialized
// to 1.0.
class FusionWeights : public nn::Module {
public:
    FusionWeights();

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;

    std::array<Var, 3> w1, w2;
};

// Softmax-weighted convex blend per level:
//   out_i = (exp(w1_i) * f_d_i + exp(w2_i) * f_ibp_i) / (exp(w1_i) + exp(w2_i))
std::vector<Var> amplify(const std::vector<Var>& f_d, const std::vector<Var>& f_ibp, const FusionWeights& w);

}  // namespace trd
