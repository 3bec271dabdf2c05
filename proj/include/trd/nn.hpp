#pragma once

#include <memory>
#include <string>
#include <vector>

#include "trd/ops.hpp"
#include "trd/random.hpp"

namespace trd {
namespace nn {

struct NamedParam {
    std::string name;
    Var var;
};

class Module {
public:
    virtual ~Module() = default;
    // Deterministic registration order; names are slash-joined paths.
    virtual void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const = 0;

    std::vector<NamedParam> named_params(const std::string& prefix = "") const {
        std::vector<NamedParam> out;
        collect_params(prefix, out);
        return out;
    }
    std::vector<Var> params() const {
        std::vector<Var> out;
        for (const auto& p : named_params()) out.push_back(p.var);
        return out;
    }
    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& p : named_params()) n += p.var->value.size();
        return n;
    }
    void set_trainable(bool trainable) {
        for (const auto& p : named_params()) p.var->requires_grad = trainable;
    }
};

// largest of {8,4,2,1} dividing C
int group_count(int channels);

class Conv2d : public Module {
public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Var forward(const Var& x) const { return ops::conv2d(x, w, b, stride_, pad_); }
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

    Var w, b;

private:
    int stride_, pad_;
};

class ConvTranspose2d : public Module {
public:
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Var forward(const Var& x) const { return ops::conv_transpose2d(x, w, b, stride_, pad_); }
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

    Var w, b;

private:
    int stride_, pad_;
};

class GroupNorm : public Module {
public:
    explicit GroupNorm(int channels);
    Var forward(const Var& x) const { return ops::group_norm(x, gamma, beta, groups_); }
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

    Var gamma, beta;

private:
    int groups_;
};

// conv3x3 -> GN -> ReLU -> conv3x3 -> GN, plus identity (or 1x1 projection
// when channel counts differ), ReLU after the sum. Stride 1 throughout.
class ResidualBlock : public Module {
public:
    ResidualBlock(int in_ch, int out_ch, Rng& rng);
    Var forward(const Var& x) const;
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

private:
    std::unique_ptr<Conv2d> conv1_, conv2_, proj_;
    std::unique_ptr<GroupNorm> gn1_, gn2_;
};

// conv3x3(stride) -> GN -> ReLU
class ConvGnRelu : public Module {
public:
    ConvGnRelu(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);
    Var forward(const Var& x) const { return ops::relu(gn_->forward(conv_->forward(x))); }
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

private:
    std::unique_ptr<Conv2d> conv_;
    std::unique_ptr<GroupNorm> gn_;
};

// deconv(k2,s2) -> GN -> ReLU: doubles spatial size
class UpConvGnRelu : public Module {
public:
    UpConvGnRelu(int in_ch, int out_ch, Rng& rng);
    Var forward(const Var& x) const { return ops::relu(gn_->forward(deconv_->forward(x))); }
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const override;

private:
    std::unique_ptr<ConvTranspose2d> deconv_;
    std::unique_ptr<GroupNorm> gn_;
};

}  // namespace nn
}  // namespace trd
