#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace focusflow {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace init {
struct Zeros {};
struct Ones {};
struct Uniform {
    double low = 0.0;
    double high = 1.0;
    std::uint64_t seed = 0;
};
struct Normal {
    double mean = 0.0;
    double stddev = 1.0;
    std::uint64_t seed = 0;
};
struct Values {
    std::vector<double> values;
};
}  // namespace init

using Init = std::variant<init::Zeros, init::Ones, init::Uniform, init::Normal, init::Values>;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense row-major array of doubles that can take part in a reverse-mode
/// differentiation graph.
///
/// Tensor is a shared handle: copies alias the same storage and graph node,
/// like framework tensors. Values of non-leaf tensors never change after
/// construction; leaves may be updated in place through mutable_values()
/// (this is how optimizers write parameters).
class Tensor {
public:
    Tensor() = default;

    static Tensor create(Shape shape, const Init& init = init::Zeros{});
    static Tensor zeros(Shape shape) { return create(std::move(shape), init::Zeros{}); }
    static Tensor ones(Shape shape) { return create(std::move(shape), init::Ones{}); }
    static Tensor from(Shape shape, std::vector<double> values) {
        return create(std::move(shape), init::Values{std::move(values)});
    }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return from({1}, {value}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    int dim(int axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    double operator[](std::size_t i) const { return values()[i]; }
    // Element of a rank-3 tensor.
    double at(int c, int y, int x) const;
    // Value of a single-element tensor.
    double item() const;

    bool requires_grad() const;
    // Marks a leaf as a tracked parameter/input. Throws for non-leaves.
    Tensor& set_requires_grad(bool on = true);
    bool is_leaf() const;
    std::uint64_t id() const;

    // In-place access for leaves only.
    std::span<double> mutable_values();

    // Fresh leaf with a copy of the values and no graph history.
    Tensor detach() const;
    // Same storage viewed with a new shape of equal element count (leaf copy,
    // no graph history).
    Tensor reshaped(Shape shape) const;

    // Implementation access for op kernels.
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<detail::Node> node);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node);
    std::shared_ptr<detail::Node> node_;
};

/// dL/dparam for every tracked leaf reachable from a loss.
class Gradients {
public:
    bool contains(const Tensor& param) const { return grads_.count(param.id()) != 0; }
    // Gradient of param; zeros of the parameter's shape when it did not
    // influence the loss.
    Tensor get(const Tensor& param) const;
    std::size_t size() const { return grads_.size(); }

    void insert(std::uint64_t id, Tensor grad) { grads_[id] = std::move(grad); }
    void scale(double factor);

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    std::unordered_map<std::uint64_t, Tensor> grads_;
};

/// Reverse-mode sweep from a single-element loss.
Gradients backward(const Tensor& loss);

}  // namespace focusflow
