#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace bootplace::diff {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;

// Handle to a node in the computation graph. Value semantics on the handle,
// shared state underneath; ops return fresh nodes that keep their inputs
// alive, so dropping the final handle releases the whole graph except the
// leaves held elsewhere (parameters).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  int rank() const;
  int64_t numel() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double value_at(int64_t i) const { return values()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool v);
  // Gradient buffer; allocated (zero-filled) on first access.
  std::vector<double>& grad();
  bool has_grad() const;
  void zero_grad();

  // Scalar helpers.
  double item() const;

  // Reverse-mode sweep from this node, which must be scalar. Accumulates
  // into the grad buffers of all reachable nodes with requires_grad set.
  void backward() const;

  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

// While a guard is alive, ops do not record the graph; forward values are
// still computed. Used for inference and for finite-difference probes.
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

}  // namespace bootplace::diff
