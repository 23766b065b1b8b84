#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsr/ops.hpp"
#include "fsr/rng.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

/// Named model parameters. Trainable entries carry requires_grad; buffers
/// (batchnorm running statistics) do not and are skipped by the optimizer.
class ParamStore {
   public:
    struct Entry {
        std::string name;
        Tensor value;
        bool trainable;
    };

    Tensor& add_param(const std::string& name, Tensor value);
    Tensor& add_buffer(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Tensor> trainable() const;
    void zero_grad();

    /// Deep copy; the returned store shares no storage with this one.
    ParamStore clone() const;

   private:
    Tensor& add(const std::string& name, Tensor value, bool trainable);
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Zero-mean uniform with bound sqrt(6 / fan_in).
Tensor he_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

struct ConvSpec {
    std::size_t in_channels;
    std::size_t out_channels;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 1;
};

/// conv2d → batchnorm → relu.
class ConvBnRelu2d {
   public:
    ConvBnRelu2d(std::string prefix, ConvSpec spec) : prefix_(std::move(prefix)), spec_(spec) {}
    void init(ParamStore& params, Rng& rng) const;
    Tensor operator()(const Tensor& x, ParamStore& params, Mode mode) const;
    const ConvSpec& spec() const { return spec_; }

   private:
    std::string prefix_;
    ConvSpec spec_;
};

/// conv2d → sigmoid.
class ConvSigmoid2d {
   public:
    ConvSigmoid2d(std::string prefix, ConvSpec spec) : prefix_(std::move(prefix)), spec_(spec) {}
    void init(ParamStore& params, Rng& rng) const;
    Tensor operator()(const Tensor& x, const ParamStore& params) const;

   private:
    std::string prefix_;
    ConvSpec spec_;
};

/// conv1d → batchnorm → relu over N×C×L.
class ConvBnRelu1d {
   public:
    ConvBnRelu1d(std::string prefix, ConvSpec spec) : prefix_(std::move(prefix)), spec_(spec) {}
    void init(ParamStore& params, Rng& rng) const;
    Tensor operator()(const Tensor& x, ParamStore& params, Mode mode) const;

   private:
    std::string prefix_;
    ConvSpec spec_;
};

/// conv1d → softmax along the length axis.
class ConvSoftmax1d {
   public:
    ConvSoftmax1d(std::string prefix, ConvSpec spec) : prefix_(std::move(prefix)), spec_(spec) {}
    void init(ParamStore& params, Rng& rng) const;
    Tensor operator()(const Tensor& x, const ParamStore& params) const;

   private:
    std::string prefix_;
    ConvSpec spec_;
};

/// Batchnorm over N×C feature vectors.
class BatchNorm1d {
   public:
    BatchNorm1d(std::string prefix, std::size_t channels) : prefix_(std::move(prefix)), channels_(channels) {}
    void init(ParamStore& params) const;
    Tensor operator()(const Tensor& x, ParamStore& params, Mode mode) const;

   private:
    std::string prefix_;
    std::size_t channels_;
};

struct Classification {
    Tensor logits;
    Tensor probs;
};

/// Linear layer followed by a row softmax.
class Classifier {
   public:
    Classifier(std::string prefix, std::size_t in_features, std::size_t classes)
        : prefix_(std::move(prefix)), in_(in_features), classes_(classes) {}
    void init(ParamStore& params, Rng& rng) const;
    Classification operator()(const Tensor& embedding, const ParamStore& params) const;
    std::size_t classes() const { return classes_; }

   private:
    std::string prefix_;
    std::size_t in_;
    std::size_t classes_;
};

std::vector<std::size_t> argmax_rows(const Tensor& m);

}  // namespace fsr
