#pragma once

#include <memory>
#include <vector>

#include "trd/networks.hpp"

namespace trd {

// Compress-then-restore mapping of the other modality's feature pyramid into
// this modality's feature space. Each level runs its own path: stride-2
// convolutions down to the configured spatial bottleneck, mirrored stride-2
// deconvolutions back up, and a final 3x3 refinement.
class BottleneckProjection : public nn::Module {
public:
    BottleneckProjection(const BackboneProfile& profile, int bottleneck_size, std::uint64_t seed);

    std::vector<Var> project(const std::vector<Var>& other) const;

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
    int bottleneck_size() const { return bottleneck_size_; }
    // smallest spatial extent reached inside level i's path
    int internal_min_size(int level) const;

private:
    BackboneProfile profile_;
    int bottleneck_size_;
    struct LevelPath {
        std::vector<std::unique_ptr<nn::ConvGnRelu>> down;  // stride 2 each; one stride-1 conv when already at size
        std::vector<std::unique_ptr<nn::UpConvGnRelu>> up;
        std::unique_ptr<nn::ConvGnRelu> refine;
    };
    std::array<LevelPath, 3> paths_;
};

// OCBE variant feeding the student decoder: channel-preserving stride-2
// chains bring every level to half the deepest level's resolution, the
// chains' outputs are concatenated and one residual block projects to the
// embedding width. In crossmodal mode each level's input is the
// concatenation of own and projected features (doubled width).
class ModifiedOCBE : public nn::Module {
public:
    ModifiedOCBE(const BackboneProfile& profile, bool crossmodal, std::uint64_t seed);

    // crossmodal mode: own and projected must be shape-identical pyramids
    Var fuse(const std::vector<Var>& own, const std::vector<Var>& projected) const;
    // single-modality mode (crossmodal = false)
    Var compress(const std::vector<Var>& own) const;

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
    bool crossmodal() const { return crossmodal_; }

private:
    Var run(const std::vector<Var>& inputs) const;

    BackboneProfile profile_;
    bool crossmodal_;
    std::array<std::vector<std::unique_ptr<nn::ConvGnRelu>>, 3> chains_;
    std::unique_ptr<nn::ResidualBlock> fuse_block_;
};

}  // namespace trd
