#include "trd/crossmodal_amplifier.hpp"

namespace trd {

InvertedBottleneckProjection::InvertedBottleneckProjection(const BackboneProfile& profile, int expansion,
                                                           std::uint64_t seed)
    : profile_(profile), expansion_(expansion) {
    if (expansion < 1) throw ConfigError("inverted bottleneck projection: expansion must be >= 1");
    for (int i = 0; i < 3; ++i) {
        Rng rng(derive_seed(seed, "ibp_level", static_cast<std::uint64_t>(i)));
        const int c = profile_.level_channels(i);
        const int e = expansion_ * c;
        LevelPath& path = paths_[static_cast<size_t>(i)];
        path.expand = std::make_unique<nn::Conv2d>(c, e, 1, 1, 0, rng);
        path.mid = std::make_unique<nn::Conv2d>(e, e, 3, 1, 1, rng);
        path.compress = std::make_unique<nn::Conv2d>(e, c, 1, 1, 0, rng);
    }
}

std::vector<Var> InvertedBottleneckProjection::project(const std::vector<Var>& other) const {
    if (other.size() != 3) throw DimensionError("ibp_project: expected a 3-level pyramid");
    std::vector<Var> out;
    for (int i = 0; i < 3; ++i) {
        const Tensor& t = other[static_cast<size_t>(i)]->value;
        if (t.ndim() != 4 || t.dim(1) != profile_.level_channels(i))
            throw DimensionError("ibp_project: level " + std::to_string(i + 1) + " has shape " + shape_str(t.shape()));
        const LevelPath& path = paths_[static_cast<size_t>(i)];
        Var h = ops::relu(path.expand->forward(other[static_cast<size_t>(i)]));
        h = ops::relu(path.mid->forward(h));
        out.push_back(path.compress->forward(h));
    }
    return out;
}

void InvertedBottleneckProjection::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    for (size_t i = 0; i < 3; ++i) {
        const std::string lp = prefix + "level" + std::to_string(i + 1) + "/";
        paths_[i].expand->collect_params(lp + "expand/", out);
        paths_[i].mid->collect_params(lp + "mid/", out);
        paths_[i].compress->collect_params(lp + "compress/", out);
    }
}

FusionWeights::FusionWeights() {
    for (int i = 0; i < 3; ++i) {
        w1[static_cast<size_t>(i)] = make_var(Tensor::scalar(1.0), true);
        w2[static_cast<size_t>(i)] = make_var(Tensor::scalar(1.0), true);
    }
}

void FusionWeights::collect_params(const std::string& prefix, std::vector<nn::NamedParam>& out) const {
    for (size_t i = 0; i < 3; ++i) {
        out.push_back({prefix + "w1_" + std::to_string(i + 1), w1[i]});
        out.push_back({prefix + "w2_" + std::to_string(i + 1), w2[i]});
    }
}

std::vector<Var> amplify(const std::vector<Var>& f_d, const std::vector<Var>& f_ibp, const FusionWeights& w) {
    if (f_d.size() != f_ibp.size()) throw DimensionError("amplify: pyramid level count mismatch");
    if (f_d.size() != 3) throw DimensionError("amplify: expected 3-level pyramids");
    std::vector<Var> out;
    for (size_t i = 0; i < 3; ++i) {
        check_same_shape(f_d[i]->value, f_ibp[i]->value, "amplify");
        out.push_back(ops::softmax_blend(f_d[i], f_ibp[i], w.w1[i], w.w2[i]));
    }
    return out;
}

}  // namespace trd
