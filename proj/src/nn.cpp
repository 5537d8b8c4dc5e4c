#include "bootplace/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace bootplace::nn {

Tensor ParameterStore::register_tensor(const std::string& name, Tensor t) {
  t.set_requires_grad(true);
  auto [it, inserted] = entries_.emplace(name, std::move(t));
  if (!inserted) {
    throw std::logic_error("parameter name already registered: " + name);
  }
  return it->second;
}

Tensor ParameterStore::create(const std::string& name, Shape shape, double fill) {
  return register_tensor(name, Tensor::full(std::move(shape), fill));
}

Tensor ParameterStore::create_xavier(const std::string& name, Shape shape, int fan_in,
                                     int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(diff::shape_numel(shape));
  for (double& v : values) v = rng.uniform(-limit, limit);
  return register_tensor(name, Tensor::from_values(std::move(shape), std::move(values)));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("no parameter named " + name);
  }
  return it->second;
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(t);
  return out;
}

std::vector<Tensor> ParameterStore::tensors_with_prefix(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : entries_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(t);
  }
  return out;
}

std::vector<Tensor> ParameterStore::tensors_without_prefix(const std::string& prefix) const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : entries_) {
    if (name.rfind(prefix, 0) != 0) out.push_back(t);
  }
  return out;
}

int64_t ParameterStore::total_parameters() const {
  int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

Linear Linear::create(ParameterStore& store, const std::string& prefix, int in, int out,
                      Rng& rng) {
  Linear l;
  l.weight = store.create_xavier(prefix + ".weight", {in, out}, in, out, rng);
  l.bias = store.create(prefix + ".bias", {out});
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  return diff::add_row_vector(diff::matmul(x, weight), bias);
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& prefix, int dim) {
  LayerNorm n;
  n.gain = store.create(prefix + ".gain", {dim}, 1.0);
  n.bias = store.create(prefix + ".bias", {dim});
  return n;
}

Tensor LayerNorm::forward(const Tensor& x) const {
  return diff::add_row_vector(diff::mul_row_vector(diff::layer_norm(x), gain), bias);
}

Conv Conv::create(ParameterStore& store, const std::string& prefix, int in, int out, int kernel,
                  int stride, int padding, diff::PadMode pad_mode, Rng& rng) {
  Conv c;
  const int fan_in = in * kernel * kernel;
  const int fan_out = out * kernel * kernel;
  c.weight = store.create_xavier(prefix + ".weight", {out, in, kernel, kernel}, fan_in, fan_out,
                                 rng);
  c.bias = store.create(prefix + ".bias", {out});
  c.stride = stride;
  c.padding = padding;
  c.pad_mode = pad_mode;
  return c;
}

Tensor Conv::forward(const Tensor& x) const {
  return diff::conv2d(x, weight, bias, stride, padding, pad_mode);
}

}  // namespace bootplace::nn
