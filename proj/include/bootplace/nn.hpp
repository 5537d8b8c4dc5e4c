#pragma once

#include <map>
#include <string>
#include <vector>

#include "bootplace/ops.hpp"
#include "bootplace/rng.hpp"
#include "bootplace/tensor.hpp"

namespace bootplace::nn {

using diff::Shape;
using diff::Tensor;

// Registry of trainable tensors. Names are unique; iteration is in
// lexicographic name order, which fixes the checkpoint layout.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Shape shape, double fill = 0.0);
  // Uniform Xavier initialization with limit sqrt(6 / (fan_in + fan_out)).
  Tensor create_xavier(const std::string& name, Shape shape, int fan_in, int fan_out, Rng& rng);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  // All tensors in name order.
  std::vector<Tensor> tensors() const;
  // Tensors whose name starts with prefix / does not start with prefix.
  std::vector<Tensor> tensors_with_prefix(const std::string& prefix) const;
  std::vector<Tensor> tensors_without_prefix(const std::string& prefix) const;

  int64_t total_parameters() const;

 private:
  Tensor register_tensor(const std::string& name, Tensor t);
  std::map<std::string, Tensor> entries_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(ParameterStore& store, const std::string& prefix, int in, int out,
                       Rng& rng);
  Tensor forward(const Tensor& x) const;  // x: [rows, in]
};

struct LayerNorm {
  Tensor gain;  // [d]
  Tensor bias;  // [d]

  static LayerNorm create(ParameterStore& store, const std::string& prefix, int dim);
  Tensor forward(const Tensor& x) const;
};

struct Conv {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  int stride = 1;
  int padding = 0;
  diff::PadMode pad_mode = diff::PadMode::kZero;

  static Conv create(ParameterStore& store, const std::string& prefix, int in, int out,
                     int kernel, int stride, int padding, diff::PadMode pad_mode, Rng& rng);
  Tensor forward(const Tensor& x) const;  // x: [in, H, W]
};

}  // namespace bootplace::nn
