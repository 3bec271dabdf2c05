#include "trd/networks.hpp"

#include <cstring>
#include <filesystem>
#include <map>

#include "trd/serialize.hpp"

namespace trd {

void BackboneProfile::validate() const {
    if (!(channels[0] < channels[1] && channels[1] < channels[2]))
        throw ConfigError("backbone profile '" + name + "': channel counts must be strictly increasing");
    if (resolution < 32 || resolution % 32 != 0)
        throw ConfigError("backbone profile '" + name + "': resolution must be a positive multiple of 32");
    if (stem_channels <= 0) throw ConfigError("backbone profile '" + name + "': stem_channels must be positive");
    for (int b : blocks)
        if (b < 1) throw ConfigError("backbone profile '" + name + "': each stage needs at least one block");
}

BackboneProfile BackboneProfile::toy(std::uint64_t seed) {
    BackboneProfile p;
    p.name = "toy";
    p.channels = {16, 32, 64};
    p.resolution = 64;
    p.stem_channels = 16;
    p.blocks = {1, 1, 1};
    p.weight_source = WeightSource::kSeeded;
    p.seed = seed;
    return p;
}

BackboneProfile BackboneProfile::full(const std::string& weights_path) {
    BackboneProfile p = full_seeded(0);
    p.weight_source = WeightSource::kPretrainedFile;
    p.weights_path = weights_path;
    return p;
}

BackboneProfile BackboneProfile::full_seeded(std::uint64_t seed) {
    BackboneProfile p;
    p.name = "full";
    p.channels = {256, 512, 1024};
    p.resolution = 256;
    p.stem_channels = 64;
    p.blocks = {2, 2, 2};
    p.weight_source = WeightSource::kSeeded;
    p.seed = seed;
    return p;
}

TeacherEncoder::TeacherEncoder(const BackboneProfile& profile) : profile_(profile) {
    profile_.validate();
    Rng rng(derive_seed(profile_.seed, "teacher"));
    stem_ = std::make_unique<nn::ConvGnRelu>(3, profile_.stem_channels, 3, 2, 1, rng);
    int in_ch = profile_.stem_channels;
    for (int s = 0; s < 3; ++s) {
        const int out_ch = profile_.channels[static_cast<size_t>(s)];
        stages_[static_cast<size_t>(s)].down = std::make_unique<nn::ConvGnRelu>(in_ch, out_ch, 3, 2, 1, rng);
        for (int b = 0; b < profile_.blocks[static_cast<size_t>(s)]; ++b)
            stages_[static_cast<size_t>(s)].blocks.push_back(std::make_unique<nn::ResidualBlock>(out_ch, out_ch, rng));
        in_ch = out_ch;
    }
}

std::vector<Var> TeacherEncoder::encode(const Var& img) const {
    const Tensor& x = img->value;
    if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != profile_.resolution || x.dim(3) != profile_.resolution)
        throw DimensionError("encode: expected N x 3 x " + std::to_string(profile_.resolution) + " x " +
                             std::to_string(profile_.resolution) + ", got " + shape_str(x.shape()));
    Var h = stem_->forward(img);
    std::vector<Var> levels;
    for (const auto& stage : stages_) {
        h = stage.down->forward(h);
        for (const auto& block : stage.blocks) h = block->forward(h);
        levels.push_back(h);
    }
    return levels;
}

void TeacherEncoder::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    stem_->collect_params(prefix + "stem/", out);
    for (size_t s = 0; s < stages_.size(); ++s) {
        const std::string sp = prefix + "stage" + std::to_string(s + 1) + "/";
        stages_[s].down->collect_params(sp + "down/", out);
        for (size_t b = 0; b < stages_[s].blocks.size(); ++b)
            stages_[s].blocks[b]->collect_params(sp + "block" + std::to_string(b) + "/", out);
    }
}

std::uint64_t hash_params(const std::vector<nn::NamedParam>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params) {
        mix(p.name.data(), p.name.size());
        mix(p.var->value.data(), static_cast<size_t>(p.var->value.size()) * sizeof(double));
    }
    return h;
}

std::uint64_t TeacherEncoder::param_hash() const { return hash_params(named_params()); }

std::shared_ptr<TeacherEncoder> build_teacher(const BackboneProfile& profile) {
    profile.validate();
    auto enc = std::make_shared<TeacherEncoder>(profile);
    if (profile.weight_source == WeightSource::kPretrainedFile) {
        if (!std::filesystem::exists(profile.weights_path))
            throw CheckpointError("backbone weight file not found: " + profile.weights_path);
        TensorArchive archive = TensorArchive::load(profile.weights_path);
        std::map<std::string, Tensor*> by_name;
        auto params = enc->named_params();
        for (auto& p : params) by_name[p.name] = &p.var->value;
        size_t assigned = 0;
        for (auto& [name, t] : archive.tensors) {
            auto it = by_name.find(name);
            if (it == by_name.end())
                throw CheckpointError("weight file has unknown tensor '" + name + "': " + profile.weights_path);
            if (!(it->second->shape() == t.shape()))
                throw CheckpointError("weight shape mismatch for '" + name + "': file " + shape_str(t.shape()) +
                                      " vs model " + shape_str(it->second->shape()));
            *it->second = std::move(t);
            ++assigned;
        }
        if (assigned != by_name.size())
            throw CheckpointError("weight file is missing tensors (" + std::to_string(assigned) + "/" +
                                  std::to_string(by_name.size()) + "): " + profile.weights_path);
    }
    enc->set_trainable(false);
    return enc;
}

StudentDecoder::StudentDecoder(const BackboneProfile& profile, std::uint64_t seed) : profile_(profile) {
    profile_.validate();
    Rng rng(derive_seed(seed, "decoder"));
    const int c1 = profile_.channels[0], c2 = profile_.channels[1], c3 = profile_.channels[2];
    const int cb = profile_.embedding_channels();
    const std::array<std::pair<int, int>, 3> io = {{{cb, c3}, {c3, c2}, {c2, c1}}};
    for (size_t s = 0; s < 3; ++s) {
        stages_[s].up = std::make_unique<nn::UpConvGnRelu>(io[s].first, io[s].second, rng);
        stages_[s].block = std::make_unique<nn::ResidualBlock>(io[s].second, io[s].second, rng);
    }
}

std::vector<Var> StudentDecoder::decode(const Var& emb) const {
    const Tensor& x = emb->value;
    const int cb = profile_.embedding_channels(), es = profile_.embedding_size();
    if (x.ndim() != 4 || x.dim(1) != cb || x.dim(2) != es || x.dim(3) != es)
        throw DimensionError("decode: expected N x " + std::to_string(cb) + " x " + std::to_string(es) + " x " +
                             std::to_string(es) + ", got " + shape_str(x.shape()));
    Var h = emb;
    std::vector<Var> levels(3);
    for (size_t s = 0; s < 3; ++s) {
        h = stages_[s].up->forward(h);
        h = stages_[s].block->forward(h);
        levels[2 - s] = h;  // deepest first, returned in (level1, level2, level3) order
    }
    return levels;
}

void StudentDecoder::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    for (size_t s = 0; s < 3; ++s) {
        const std::string sp = prefix + "up" + std::to_string(3 - s) + "/";
        stages_[s].up->collect_params(sp + "deconv/", out);
        stages_[s].block->collect_params(sp + "block/", out);
    }
}

}  // namespace trd
