#include "trd/crossmodal_filter.hpp"

namespace trd {

namespace {
void check_pyramid(const std::vector<Var>& pyr, const BackboneProfile& p, const char* where) {
    if (pyr.size() != 3) throw DimensionError(std::string(where) + ": expected a 3-level pyramid");
    for (int i = 0; i < 3; ++i) {
        const Tensor& t = pyr[static_cast<size_t>(i)]->value;
        if (t.ndim() != 4 || t.dim(1) != p.level_channels(i) || t.dim(2) != p.level_size(i) ||
            t.dim(3) != p.level_size(i))
            throw DimensionError(std::string(where) + ": level " + std::to_string(i + 1) + " has shape " +
                                 shape_str(t.shape()));
    }
}
}  // namespace

BottleneckProjection::BottleneckProjection(const BackboneProfile& profile, int bottleneck_size, std::uint64_t seed)
    : profile_(profile), bottleneck_size_(bottleneck_size) {
    if (bottleneck_size < 1) throw ConfigError("bottleneck projection: bottleneck size must be positive");
    for (int i = 0; i < 3; ++i) {
        const int size = profile_.level_size(i);
        if (size < bottleneck_size)
            throw ConfigError("bottleneck projection: level " + std::to_string(i + 1) + " spatial size " +
                              std::to_string(size) + " is smaller than bottleneck " + std::to_string(bottleneck_size));
        int steps = 0;
        for (int s = size; s > bottleneck_size; s /= 2) {
            if (s % 2 != 0)
                throw ConfigError("bottleneck projection: level size " + std::to_string(size) +
                                  " cannot be halved down to " + std::to_string(bottleneck_size));
            ++steps;
        }
        Rng rng(derive_seed(seed, "bp_level", static_cast<std::uint64_t>(i)));
        const int c = profile_.level_channels(i);
        LevelPath& path = paths_[static_cast<size_t>(i)];
        if (steps == 0) {
            path.down.push_back(std::make_unique<nn::ConvGnRelu>(c, c, 3, 1, 1, rng));
        } else {
            for (int s = 0; s < steps; ++s) path.down.push_back(std::make_unique<nn::ConvGnRelu>(c, c, 3, 2, 1, rng));
            for (int s = 0; s < steps; ++s) path.up.push_back(std::make_unique<nn::UpConvGnRelu>(c, c, rng));
        }
        path.refine = std::make_unique<nn::ConvGnRelu>(c, c, 3, 1, 1, rng);
    }
}

int BottleneckProjection::internal_min_size(int level) const {
    const int size = profile_.level_size(level);
    return paths_[static_cast<size_t>(level)].up.empty() ? size : bottleneck_size_;
}

std::vector<Var> BottleneckProjection::project(const std::vector<Var>& other) const {
    check_pyramid(other, profile_, "bottleneck_project");
    std::vector<Var> out;
    for (int i = 0; i < 3; ++i) {
        Var h = other[static_cast<size_t>(i)];
        const LevelPath& path = paths_[static_cast<size_t>(i)];
        for (const auto& d : path.down) h = d->forward(h);
        for (const auto& u : path.up) h = u->forward(h);
        h = path.refine->forward(h);
        out.push_back(h);
    }
    return out;
}

void BottleneckProjection::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    for (size_t i = 0; i < 3; ++i) {
        const std::string lp = prefix + "level" + std::to_string(i + 1) + "/";
        const LevelPath& path = paths_[i];
        for (size_t s = 0; s < path.down.size(); ++s) path.down[s]->collect_params(lp + "down" + std::to_string(s) + "/", out);
        for (size_t s = 0; s < path.up.size(); ++s) path.up[s]->collect_params(lp + "up" + std::to_string(s) + "/", out);
        path.refine->collect_params(lp + "refine/", out);
    }
}

ModifiedOCBE::ModifiedOCBE(const BackboneProfile& profile, bool crossmodal, std::uint64_t seed)
    : profile_(profile), crossmodal_(crossmodal) {
    const int mult = crossmodal_ ? 2 : 1;
    int total = 0;
    for (int i = 0; i < 3; ++i) {
        Rng rng(derive_seed(seed, "ocbe_chain", static_cast<std::uint64_t>(i)));
        const int c = mult * profile_.level_channels(i);
        const int steps = 3 - i;  // level i sits at res/2^(i+2); target is res/32
        for (int s = 0; s < steps; ++s)
            chains_[static_cast<size_t>(i)].push_back(std::make_unique<nn::ConvGnRelu>(c, c, 3, 2, 1, rng));
        total += c;
    }
    Rng rng(derive_seed(seed, "ocbe_fuse"));
    fuse_block_ = std::make_unique<nn::ResidualBlock>(total, profile_.embedding_channels(), rng);
}

Var ModifiedOCBE::run(const std::vector<Var>& inputs) const {
    std::vector<Var> compressed;
    for (int i = 0; i < 3; ++i) {
        Var h = inputs[static_cast<size_t>(i)];
        for (const auto& conv : chains_[static_cast<size_t>(i)]) h = conv->forward(h);
        compressed.push_back(h);
    }
    return fuse_block_->forward(ops::concat_channels(compressed));
}

Var ModifiedOCBE::fuse(const std::vector<Var>& own, const std::vector<Var>& projected) const {
    if (!crossmodal_) throw ConfigError("ocbe: fuse() requires crossmodal mode");
    check_pyramid(own, profile_, "ocbe_fuse(own)");
    if (projected.size() != own.size()) throw DimensionError("ocbe_fuse: pyramid level count mismatch");
    for (size_t i = 0; i < own.size(); ++i)
        check_same_shape(own[i]->value, projected[i]->value, "ocbe_fuse");
    std::vector<Var> joined;
    for (size_t i = 0; i < 3; ++i)
        joined.push_back(ops::concat_channels({own[i], projected[i]}));
    return run(joined);
}

Var ModifiedOCBE::compress(const std::vector<Var>& own) const {
    if (crossmodal_) throw ConfigError("ocbe: compress() requires single-modality mode");
    check_pyramid(own, profile_, "ocbe_compress");
    return run(own);
}

void ModifiedOCBE::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    for (size_t i = 0; i < 3; ++i) {
        const std::string lp = prefix + "chain" + std::to_string(i + 1) + "/";
        for (size_t s = 0; s < chains_[i].size(); ++s)
            chains_[i][s]->collect_params(lp + "down" + std::to_string(s) + "/", out);
    }
    fuse_block_->collect_params(prefix + "fuse/", out);
}

}  // namespace trd
