#include "trd/nn.hpp"

#include <cmath>

namespace trd {
namespace nn {

int group_count(int channels) {
    for (int g : {8, 4, 2})
        if (channels % g == 0) return g;
    return 1;
}

namespace {
Var kaiming_conv_weight(Shape shape, int fan_in, Rng& rng) {
    Tensor w(std::move(shape));
    const double std = std::sqrt(2.0 / fan_in);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return make_var(std::move(w), true);
}
}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng) : stride_(stride), pad_(pad) {
    w = kaiming_conv_weight({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng);
    b = make_var(Tensor({out_ch}), true);
}

void Conv2d::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "w", w});
    out.push_back({prefix + "b", b});
}

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng)
    : stride_(stride), pad_(pad) {
    w = kaiming_conv_weight({in_ch, out_ch, kernel, kernel}, in_ch * kernel * kernel, rng);
    b = make_var(Tensor({out_ch}), true);
}

void ConvTranspose2d::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "w", w});
    out.push_back({prefix + "b", b});
}

GroupNorm::GroupNorm(int channels) : groups_(group_count(channels)) {
    gamma = make_var(Tensor({channels}, 1.0), true);
    beta = make_var(Tensor({channels}), true);
}

void GroupNorm::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + "gamma", gamma});
    out.push_back({prefix + "beta", beta});
}

ResidualBlock::ResidualBlock(int in_ch, int out_ch, Rng& rng) {
    conv1_ = std::make_unique<Conv2d>(in_ch, out_ch, 3, 1, 1, rng);
    gn1_ = std::make_unique<GroupNorm>(out_ch);
    conv2_ = std::make_unique<Conv2d>(out_ch, out_ch, 3, 1, 1, rng);
    gn2_ = std::make_unique<GroupNorm>(out_ch);
    if (in_ch != out_ch) proj_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, 1, 0, rng);
}

Var ResidualBlock::forward(const Var& x) const {
    Var h = ops::relu(gn1_->forward(conv1_->forward(x)));
    h = gn2_->forward(conv2_->forward(h));
    Var skip = proj_ ? proj_->forward(x) : x;
    return ops::relu(ops::add(h, skip));
}

void ResidualBlock::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    conv1_->collect_params(prefix + "conv1/", out);
    gn1_->collect_params(prefix + "gn1/", out);
    conv2_->collect_params(prefix + "conv2/", out);
    gn2_->collect_params(prefix + "gn2/", out);
    if (proj_) proj_->collect_params(prefix + "proj/", out);
}

ConvGnRelu::ConvGnRelu(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng) {
    conv_ = std::make_unique<Conv2d>(in_ch, out_ch, kernel, stride, pad, rng);
    gn_ = std::make_unique<GroupNorm>(out_ch);
}

void ConvGnRelu::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    conv_->collect_params(prefix + "conv/", out);
    gn_->collect_params(prefix + "gn/", out);
}

UpConvGnRelu::UpConvGnRelu(int in_ch, int out_ch, Rng& rng) {
    deconv_ = std::make_unique<ConvTranspose2d>(in_ch, out_ch, 2, 2, 0, rng);
    gn_ = std::make_unique<GroupNorm>(out_ch);
}

void UpConvGnRelu::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    deconv_->collect_params(prefix + "deconv/", out);
    gn_->collect_params(prefix + "gn/", out);
}

}  // namespace nn
}  // namespace trd
