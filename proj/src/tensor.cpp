#include "bootplace/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace bootplace::diff {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->values.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("Tensor::from_values: " + shape_str(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::dim(int i) const { return impl_->shape[i]; }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }
int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->values.size()); }

std::vector<double>& Tensor::values() { return impl_->values; }
const std::vector<double>& Tensor::values() const { return impl_->values; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }

std::vector<double>& Tensor::grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_->grad.size() == impl_->values.size(); }

void Tensor::zero_grad() {
  impl_->grad.assign(impl_->values.size(), 0.0);
}

double Tensor::item() const {
  if (impl_->values.size() != 1) {
    throw std::invalid_argument("Tensor::item: tensor has " +
                                std::to_string(impl_->values.size()) + " elements");
  }
  return impl_->values[0];
}

void Tensor::backward() const {
  if (!impl_ || impl_->values.size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  // Topological order via iterative DFS, then reverse sweep.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  struct Frame {
    TensorImpl* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({impl_.get(), 0});
  seen.insert(impl_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn && node->grad.size() == node->values.size()) {
      node->backward_fn(*node);
    }
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace bootplace::diff
