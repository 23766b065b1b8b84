#include "fsr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fsr {

Tensor& ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    value.set_requires_grad(trainable);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(value), trainable});
    return entries_.back().value;
}

Tensor& ParamStore::add_param(const std::string& name, Tensor value) { return add(name, std::move(value), true); }
Tensor& ParamStore::add_buffer(const std::string& name, Tensor value) { return add(name, std::move(value), false); }

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].value;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].value;
}

std::vector<Tensor> ParamStore::trainable() const {
    std::vector<Tensor> out;
    for (const auto& e : entries_)
        if (e.trainable) out.push_back(e.value);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.value.zero_grad();
}

ParamStore ParamStore::clone() const {
    ParamStore copy;
    for (const auto& e : entries_) copy.add(e.name, e.value.detach(), e.trainable);
    return copy;
}

Tensor he_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    return Tensor(shape, std::move(values));
}

namespace {

void init_conv(ParamStore& params, const std::string& prefix, const ConvSpec& s, bool two_d, Rng& rng) {
    Shape kshape = two_d ? Shape{s.out_channels, s.in_channels, s.kernel, s.kernel}
                         : Shape{s.out_channels, s.in_channels, s.kernel};
    const std::size_t fan_in = s.in_channels * s.kernel * (two_d ? s.kernel : 1);
    params.add_param(prefix + ".weight", he_uniform(kshape, fan_in, rng));
    params.add_param(prefix + ".bias", Tensor::zeros({s.out_channels}));
}

void init_bn(ParamStore& params, const std::string& prefix, std::size_t channels) {
    params.add_param(prefix + ".bn.gamma", Tensor::ones({channels}));
    params.add_param(prefix + ".bn.beta", Tensor::zeros({channels}));
    params.add_buffer(prefix + ".bn.running_mean", Tensor::zeros({channels}));
    params.add_buffer(prefix + ".bn.running_var", Tensor::ones({channels}));
}

Tensor apply_bn(const Tensor& x, ParamStore& params, const std::string& prefix, Mode mode) {
    BatchNormState state{params.get(prefix + ".bn.running_mean"), params.get(prefix + ".bn.running_var")};
    return batchnorm(x, params.get(prefix + ".bn.gamma"), params.get(prefix + ".bn.beta"), state, mode);
}

}  // namespace

void ConvBnRelu2d::init(ParamStore& params, Rng& rng) const {
    init_conv(params, prefix_, spec_, true, rng);
    init_bn(params, prefix_, spec_.out_channels);
}

Tensor ConvBnRelu2d::operator()(const Tensor& x, ParamStore& params, Mode mode) const {
    Tensor y = conv2d(x, params.get(prefix_ + ".weight"), params.get(prefix_ + ".bias"), spec_.stride,
                      spec_.padding);
    return relu(apply_bn(y, params, prefix_, mode));
}

void ConvSigmoid2d::init(ParamStore& params, Rng& rng) const { init_conv(params, prefix_, spec_, true, rng); }

Tensor ConvSigmoid2d::operator()(const Tensor& x, const ParamStore& params) const {
    return sigmoid(conv2d(x, params.get(prefix_ + ".weight"), params.get(prefix_ + ".bias"), spec_.stride,
                          spec_.padding));
}

void ConvBnRelu1d::init(ParamStore& params, Rng& rng) const {
    init_conv(params, prefix_, spec_, false, rng);
    init_bn(params, prefix_, spec_.out_channels);
}

Tensor ConvBnRelu1d::operator()(const Tensor& x, ParamStore& params, Mode mode) const {
    Tensor y = conv1d(x, params.get(prefix_ + ".weight"), params.get(prefix_ + ".bias"), spec_.stride,
                      spec_.padding);
    return relu(apply_bn(y, params, prefix_, mode));
}

void ConvSoftmax1d::init(ParamStore& params, Rng& rng) const { init_conv(params, prefix_, spec_, false, rng); }

Tensor ConvSoftmax1d::operator()(const Tensor& x, const ParamStore& params) const {
    Tensor y = conv1d(x, params.get(prefix_ + ".weight"), params.get(prefix_ + ".bias"), spec_.stride,
                      spec_.padding);
    return softmax(y, 2);
}

void BatchNorm1d::init(ParamStore& params) const { init_bn(params, prefix_, channels_); }

Tensor BatchNorm1d::operator()(const Tensor& x, ParamStore& params, Mode mode) const {
    return apply_bn(x, params, prefix_, mode);
}

void Classifier::init(ParamStore& params, Rng& rng) const {
    params.add_param(prefix_ + ".weight", he_uniform({in_, classes_}, in_, rng));
    params.add_param(prefix_ + ".bias", Tensor::zeros({classes_}));
}

Classification Classifier::operator()(const Tensor& embedding, const ParamStore& params) const {
    if (embedding.rank() != 2 || embedding.dim(1) != in_)
        throw ShapeError("classifier expects N×" + std::to_string(in_) + " input, got " +
                         shape_str(embedding.shape()));
    Tensor logits = add(matmul(embedding, params.get(prefix_ + ".weight")), params.get(prefix_ + ".bias"));
    Tensor probs = softmax(logits, 1);
    return {logits, probs};
}

std::vector<std::size_t> argmax_rows(const Tensor& m) {
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    std::vector<std::size_t> out(rows, 0);
    auto v = m.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 1; c < cols; ++c)
            if (v[r * cols + c] > v[r * cols + out[r]]) out[r] = c;
    return out;
}

}  // namespace fsr
