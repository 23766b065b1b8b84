#include "fsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fsr {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty means absent
    bool requires_grad = false;
    long node = -1;
};

struct Tape::Node {
    std::string op;
    std::weak_ptr<TensorImpl> output;
    std::vector<Tensor> inputs;
    std::vector<long> input_nodes;
    BackwardFn fn;
};

namespace {

thread_local bool t_grad_enabled = true;

#ifndef NDEBUG
bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
#endif

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    if (shape_numel(shape) != data.size())
        throw ShapeError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::vec(std::initializer_list<double> v) {
    return Tensor(Shape{v.size()}, std::vector<double>(v));
}

Tensor Tensor::mat(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> flat;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != cols) throw ShapeError("ragged matrix literal");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(flat));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= impl_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
        flat = flat * impl_->shape[axis] + i;
        ++axis;
    }
    return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

Tensor Tensor::grad_tensor() const {
    if (!has_grad()) return Tensor::zeros(shape());
    return Tensor(shape(), impl_->grad);
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data); }

void Tensor::accumulate_grad(const Tensor& t, std::span<const double> g) {
    auto& impl = *t.impl_;
    if (!impl.requires_grad) return;
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) impl.grad[i] += g[i];
}

void Tensor::accumulate_grad_at(const Tensor& t, std::size_t flat, double g) {
    auto& impl = *t.impl_;
    if (!impl.requires_grad) return;
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
    impl.grad[flat] += g;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                           const char* op, BackwardFn backward) {
    std::erase_if(inputs, [](const Tensor& t) { return !t.defined(); });
#ifndef NDEBUG
    bool inputs_finite = true;
    for (const auto& in : inputs) inputs_finite = inputs_finite && all_finite(in.data());
    if (inputs_finite && !all_finite(data))
        throw DomainError(std::string(op) + " produced a non-finite value from finite inputs");
#endif
    Tensor out(std::move(shape), std::move(data));
    if (!t_grad_enabled) return out;
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (!any) return out;
    out.impl_->requires_grad = true;
    Tape::current().record(out.impl_, std::move(inputs), op, std::move(backward));
    return out;
}

void Tensor::backward() const {
    if (numel() != 1)
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
    if (impl_->node < 0) throw std::logic_error("backward() on a tensor that is not on the tape");
    Tape::current().run_backward(impl_);
}

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

std::size_t Tape::record(const std::shared_ptr<TensorImpl>& out, std::vector<Tensor> inputs,
                         const char* op, BackwardFn fn) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->output = out;
    for (const auto& in : inputs) node->input_nodes.push_back(in.impl_->node);
    node->inputs = std::move(inputs);
    node->fn = std::move(fn);
    std::size_t index = nodes_.size();
    out->node = static_cast<long>(index);
    nodes_.push_back(std::move(node));
    return index;
}

void Tape::run_backward(const std::shared_ptr<TensorImpl>& loss) {
    if (loss->grad.empty()) loss->grad.assign(1, 0.0);
    loss->grad[0] += 1.0;
    last_visits_ = 0;
    for (long i = loss->node; i >= 0; --i) {
        auto& node = *nodes_[static_cast<std::size_t>(i)];
        auto out = node.output.lock();
        if (!out || out->grad.empty()) continue;
        ++last_visits_;
        node.fn(out->grad);
    }
    clear();
}

std::vector<Tape::NodeInfo> Tape::describe() const {
    std::vector<NodeInfo> info;
    info.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        info.push_back({nodes_[i]->op, i, nodes_[i]->input_nodes});
    return info;
}

void Tape::clear() {
    for (auto& node : nodes_)
        if (auto out = node->output.lock()) out->node = -1;
    nodes_.clear();
}

}  // namespace fsr
