#include "focusflow/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "focusflow/error.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (int d : shape) {
        if (d < 1) throw ShapeError("nonpositive dimension in shape " + shape_to_string(shape));
    }
}

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor Tensor::create(Shape shape, const Init& init) {
    check_shape(shape);
    auto node = std::make_shared<detail::Node>();
    const std::size_t n = shape_numel(shape);
    node->shape = std::move(shape);
    node->id = g_next_id++;
    std::visit(Overloaded{
                   [&](const init::Zeros&) { node->value.assign(n, 0.0); },
                   [&](const init::Ones&) { node->value.assign(n, 1.0); },
                   [&](const init::Uniform& u) {
                       Rng rng(u.seed);
                       node->value.resize(n);
                       for (auto& v : node->value) v = rng.uniform(u.low, u.high);
                   },
                   [&](const init::Normal& g) {
                       Rng rng(g.seed);
                       node->value.resize(n);
                       for (auto& v : node->value) v = rng.normal(g.mean, g.stddev);
                   },
                   [&](const init::Values& vals) {
                       if (vals.values.size() != n) {
                           throw ShapeError("explicit values have " + std::to_string(vals.values.size()) +
                                            " elements but shape " + shape_to_string(node->shape) +
                                            " needs " + std::to_string(n));
                       }
                       node->value = vals.values;
                   },
               },
               init);
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.node_->value) v = value;
    return t;
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
    if (node->id == 0) node->id = g_next_id++;
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
    if (!node_) throw Error("use of an undefined tensor");
    return node_->shape;
}

int Tensor::dim(int axis) const {
    const Shape& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("axis out of range");
    return s[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
    if (!node_) throw Error("use of an undefined tensor");
    return node_->value;
}

double Tensor::at(int c, int y, int x) const {
    const Shape& s = shape();
    if (s.size() != 3) throw ShapeError("at(c,y,x) needs a rank-3 tensor, got " + shape_to_string(s));
    return node_->value[(static_cast<std::size_t>(c) * s[1] + y) * s[2] + x];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!node_) throw Error("use of an undefined tensor");
    if (!node_->leaf) throw Error("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

std::span<double> Tensor::mutable_values() {
    if (!node_) throw Error("use of an undefined tensor");
    if (!node_->leaf) throw Error("only leaf tensors can be modified in place");
    return node_->value;
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor Tensor::reshaped(Shape new_shape) const {
    check_shape(new_shape);
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_to_string(shape()) + " to " + shape_to_string(new_shape));
    }
    return from(std::move(new_shape), node_->value);
}

Tensor Gradients::get(const Tensor& param) const {
    auto it = grads_.find(param.id());
    if (it != grads_.end()) return it->second;
    return Tensor::zeros(param.shape());
}

void Gradients::scale(double factor) {
    for (auto& [id, g] : grads_) {
        for (auto& v : g.mutable_values()) v *= factor;
    }
}

Gradients backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward on an undefined tensor");
    if (loss.numel() != 1) {
        throw ShapeError("backward needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    Gradients out;
    detail::Node* root = loss.node().get();
    if (!root->requires_grad) return out;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order) n->grad.assign(n->value.size(), 0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->leaf) continue;
        if (n->backward) n->backward(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
    for (detail::Node* n : order) {
        if (!n->leaf) continue;
        out.insert(n->id, Tensor::from(n->shape, std::move(n->grad)));
        n->grad.clear();
    }
    return out;
}

}  // namespace focusflow
