#pragma once

// Dense double-precision tensors with a dynamic reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Operations in ops.hpp build
// new nodes and, when any input requires a gradient, record a closure that
// propagates the output gradient back to the inputs. Calling backward() on a
// scalar runs those closures in reverse topological order and then releases
// the intermediate graph.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mail {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Populates grad() of every tensor on
  /// the tape that requires a gradient, then clears the tape.
  void backward() const;

  /// New leaf sharing no graph history, holding a copy of the values.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

namespace detail {

/// Creates an op result. `backward` is only retained when grad mode is on and
/// at least one parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> parents,
                   std::function<void(Node&)> backward);
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace mail
