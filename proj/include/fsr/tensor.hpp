#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

struct TensorImpl;

/// Gradient routine recorded for one op. Receives the gradient of the op's
/// output and accumulates into the inputs it captured.
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

/// Dense row-major float64 tensor with an optional gradient slot.
///
/// Copies share storage (handle semantics). Ops that touch a tensor with
/// requires_grad() record a node on the calling thread's tape.
class Tensor {
   public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vec(std::initializer_list<double> v);
    static Tensor mat(std::initializer_list<std::initializer_list<double>> rows);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Direct write access, for leaves (parameters, buffers, inputs).
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;
    double operator[](std::size_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    Tensor grad_tensor() const;
    void zero_grad();

    /// Same values, no tape linkage, independent storage.
    Tensor detach() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    /// Reverse-mode pass from this scalar; clears the thread's tape afterwards.
    void backward() const;

    // Used by op implementations.
    static Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                              const char* op, BackwardFn backward);
    static void accumulate_grad(const Tensor& t, std::span<const double> g);
    static void accumulate_grad_at(const Tensor& t, std::size_t flat, double g);

   private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
    friend class Tape;
};

/// Per-thread append-only record of differentiable ops.
class Tape {
   public:
    struct NodeInfo {
        std::string op;
        std::size_t index;
        std::vector<long> input_nodes;  // -1 for leaves
    };

    static Tape& current();

    std::size_t size() const { return nodes_.size(); }
    std::vector<NodeInfo> describe() const;
    void clear();

    // Nodes visited by the most recent backward pass.
    std::size_t last_backward_visits() const { return last_visits_; }

   private:
    struct Node;
    std::vector<std::shared_ptr<Node>> nodes_;
    std::size_t last_visits_ = 0;

    std::size_t record(const std::shared_ptr<TensorImpl>& out, std::vector<Tensor> inputs,
                       const char* op, BackwardFn fn);
    void run_backward(const std::shared_ptr<TensorImpl>& loss);

    friend class Tensor;
};

/// Disables recording for the lifetime of the guard (this thread only).
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

bool grad_enabled();

}  // namespace fsr
