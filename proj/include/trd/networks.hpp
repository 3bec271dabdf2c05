#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "trd/nn.hpp"

namespace trd {

enum class WeightSource { kSeeded, kPretrainedFile };

// Geometry and weight provenance of the shared encoder. Levels sit at 1/4,
// 1/8 and 1/16 of the input resolution; the bottleneck embedding at 1/32.
struct BackboneProfile {
    std::string name;
    std::array<int, 3> channels{};
    int resolution = 0;
    int stem_channels = 0;
    std::array<int, 3> blocks{};
    WeightSource weight_source = WeightSource::kSeeded;
    std::string weights_path;
    std::uint64_t seed = 0;

    int level_channels(int i) const { return channels[static_cast<size_t>(i)]; }
    int level_size(int i) const { return resolution >> (i + 2); }
    int embedding_channels() const { return channels[2]; }
    int embedding_size() const { return resolution >> 5; }

    void validate() const;

    static BackboneProfile toy(std::uint64_t seed);
    static BackboneProfile full(const std::string& weights_path);
    // seeded-random variant of the full geometry (used to exercise shapes
    // without a weight file, and to produce weight files for tests)
    static BackboneProfile full_seeded(std::uint64_t seed);
};

// Frozen hierarchical encoder shared by both modality branches.
class TeacherEncoder : public nn::Module {
public:
    explicit TeacherEncoder(const BackboneProfile& profile);

    // img: N x 3 x res x res -> 3 levels (C_i x res/2^(i+2))
    std::vector<Var> encode(const Var& img) const;

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;
    const BackboneProfile& profile() const { return profile_; }
    std::uint64_t param_hash() const;

private:
    BackboneProfile profile_;
    std::unique_ptr<nn::ConvGnRelu> stem_;
    struct Stage {
        std::unique_ptr<nn::ConvGnRelu> down;
        std::vector<std::unique_ptr<nn::ResidualBlock>> blocks;
    };
    std::array<Stage, 3> stages_;
};

// Validates the profile, builds the encoder, loads pretrained weights when
// configured and freezes every parameter.
std::shared_ptr<TeacherEncoder> build_teacher(const BackboneProfile& profile);

// Trainable decoder mirroring the encoder: per level one 2x upsampling step
// followed by a residual block, deepest level first.
class StudentDecoder : public nn::Module {
public:
    StudentDecoder(const BackboneProfile& profile, std::uint64_t seed);

    // emb: N x C3 x res/32 -> levels ordered (level1, level2, level3)
    std::vector<Var> decode(const Var& emb) const;

    void collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const override;

private:
    BackboneProfile profile_;
    struct UpStage {
        std::unique_ptr<nn::UpConvGnRelu> up;
        std::unique_ptr<nn::ResidualBlock> block;
    };
    std::array<UpStage, 3> stages_;  // index 0 emits level3, index 2 emits level1
};

std::uint64_t hash_params(const std::vector<nn::NamedParam>& params);

}  // namespace trd
