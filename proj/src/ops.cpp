#include "bootplace/ops.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

namespace bootplace::diff {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
  throw std::invalid_argument(op + ": " + msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, int rank) {
  if (t.rank() != rank) {
    fail(op, "expected rank-" + std::to_string(rank) + " tensor, got " + shape_str(t.shape()));
  }
}

bool track(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor node(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

void attach(Tensor& out, bool needs_grad, std::vector<ImplPtr> parents,
            std::function<void(TensorImpl&)> backward) {
  if (!needs_grad) return;
  TensorImpl& impl = *out.impl_ptr();
  impl.requires_grad = true;
  impl.parents = std::move(parents);
  impl.backward_fn = std::move(backward);
}

// Shared pattern for binary elementwise ops: forward map plus the two local
// partial derivatives evaluated from saved input values.
template <typename Fwd, typename DGa, typename DGb>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DGa dga,
                          DGb dgb) {
  require_same_shape(name, a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  Tensor result = node(a.shape(), std::move(out));
  bool ng = track({&a, &b});
  ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr();
  attach(result, ng, {ai, bi}, [ai, bi, dga, dgb](TensorImpl& self) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        ai->grad[i] += self.grad[i] * dga(ai->values[i], bi->values[i], self.values[i]);
      }
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        bi->grad[i] += self.grad[i] * dgb(ai->values[i], bi->values[i], self.values[i]);
      }
    }
  });
  return result;
}

template <typename Fwd, typename Dg>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Dg dg) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  Tensor result = node(a.shape(), std::move(out));
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai, dg](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      ai->grad[i] += self.grad[i] * dg(ai->values[i], self.values[i]);
    }
  });
  return result;
}

struct SliceIter {
  int64_t base;
  int64_t step;
  int64_t count;
};

// Enumerates the 1-D slices of a rank-1 or rank-2 tensor along `axis`.
std::vector<SliceIter> slices_along(const char* op, const Tensor& t, int axis) {
  if (t.rank() == 1) {
    if (axis != 0 && axis != -1) fail(op, "axis out of range for " + shape_str(t.shape()));
    return {{0, 1, t.dim(0)}};
  }
  if (t.rank() == 2) {
    int64_t r = t.dim(0), c = t.dim(1);
    if (axis == -1) axis = 1;
    std::vector<SliceIter> out;
    if (axis == 1) {
      out.reserve(r);
      for (int64_t i = 0; i < r; ++i) out.push_back({i * c, 1, c});
    } else if (axis == 0) {
      out.reserve(c);
      for (int64_t j = 0; j < c; ++j) out.push_back({j, c, r});
    } else {
      fail(op, "axis out of range for " + shape_str(t.shape()));
    }
    return out;
  }
  fail(op, "rank-1 or rank-2 input required, got " + shape_str(t.shape()));
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor elt_min(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "elt_min", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor elt_max(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "elt_max", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor add_const(const Tensor& a, double c) {
  return unary_elementwise(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_const(const Tensor& a, double c) {
  return unary_elementwise(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_const(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs_val(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log_clamped(const Tensor& a, double eps) {
  return unary_elementwise(
      a, [eps](double x) { return std::log(x < eps ? eps : x); },
      [eps](double x, double) { return x < eps ? 0.0 : 1.0 / x; });
}

Tensor add_row_vector(const Tensor& mat, const Tensor& vec) {
  require_rank("add_row_vector", mat, 2);
  require_rank("add_row_vector", vec, 1);
  int64_t r = mat.dim(0), c = mat.dim(1);
  if (vec.dim(0) != c) {
    fail("add_row_vector", "vector " + shape_str(vec.shape()) + " does not match matrix columns " +
                               shape_str(mat.shape()));
  }
  std::vector<double> out(mat.values());
  const auto& vv = vec.values();
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) out[i * c + j] += vv[j];
  }
  Tensor result = node(mat.shape(), std::move(out));
  bool ng = track({&mat, &vec});
  ImplPtr mi = mat.impl_ptr(), vi = vec.impl_ptr();
  attach(result, ng, {mi, vi}, [mi, vi, r, c](TensorImpl& self) {
    if (mi->requires_grad) {
      mi->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) mi->grad[i] += self.grad[i];
    }
    if (vi->requires_grad) {
      vi->ensure_grad();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) vi->grad[j] += self.grad[i * c + j];
      }
    }
  });
  return result;
}

Tensor mul_row_vector(const Tensor& mat, const Tensor& vec) {
  require_rank("mul_row_vector", mat, 2);
  require_rank("mul_row_vector", vec, 1);
  int64_t r = mat.dim(0), c = mat.dim(1);
  if (vec.dim(0) != c) {
    fail("mul_row_vector", "vector " + shape_str(vec.shape()) + " does not match matrix columns " +
                               shape_str(mat.shape()));
  }
  std::vector<double> out(mat.values());
  const auto& vv = vec.values();
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) out[i * c + j] *= vv[j];
  }
  Tensor result = node(mat.shape(), std::move(out));
  bool ng = track({&mat, &vec});
  ImplPtr mi = mat.impl_ptr(), vi = vec.impl_ptr();
  attach(result, ng, {mi, vi}, [mi, vi, r, c](TensorImpl& self) {
    if (mi->requires_grad) {
      mi->ensure_grad();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) mi->grad[i * c + j] += self.grad[i * c + j] * vi->values[j];
      }
    }
    if (vi->requires_grad) {
      vi->ensure_grad();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) vi->grad[j] += self.grad[i * c + j] * mi->values[i * c + j];
      }
    }
  });
  return result;
}

Tensor add_col_vector(const Tensor& mat, const Tensor& vec) {
  require_rank("add_col_vector", mat, 2);
  require_rank("add_col_vector", vec, 1);
  int64_t r = mat.dim(0), c = mat.dim(1);
  if (vec.dim(0) != r) {
    fail("add_col_vector", "vector " + shape_str(vec.shape()) + " does not match matrix rows " +
                               shape_str(mat.shape()));
  }
  std::vector<double> out(mat.values());
  const auto& vv = vec.values();
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) out[i * c + j] += vv[i];
  }
  Tensor result = node(mat.shape(), std::move(out));
  bool ng = track({&mat, &vec});
  ImplPtr mi = mat.impl_ptr(), vi = vec.impl_ptr();
  attach(result, ng, {mi, vi}, [mi, vi, r, c](TensorImpl& self) {
    if (mi->requires_grad) {
      mi->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) mi->grad[i] += self.grad[i];
    }
    if (vi->requires_grad) {
      vi->ensure_grad();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) vi->grad[i] += self.grad[i * c + j];
      }
    }
  });
  return result;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor result = node({}, {s});
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    double g = self.grad[0];
    for (double& v : ai->grad) v += g;
  });
  return result;
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) fail("mean_all", "empty tensor");
  return mul_const(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    fail("reshape", shape_str(a.shape()) + " cannot be viewed as " + shape_str(new_shape));
  }
  Tensor result = node(std::move(new_shape), a.values());
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i];
  });
  return result;
}

Tensor transpose(const Tensor& mat) {
  require_rank("transpose", mat, 2);
  int64_t r = mat.dim(0), c = mat.dim(1);
  std::vector<double> out(static_cast<size_t>(r * c));
  const auto& mv = mat.values();
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = mv[i * c + j];
  }
  Tensor result = node({static_cast<int>(c), static_cast<int>(r)}, std::move(out));
  bool ng = track({&mat});
  ImplPtr mi = mat.impl_ptr();
  attach(result, ng, {mi}, [mi, r, c](TensorImpl& self) {
    if (!mi->requires_grad) return;
    mi->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t j = 0; j < c; ++j) mi->grad[i * c + j] += self.grad[j * r + i];
    }
  });
  return result;
}

Tensor slice_rows(const Tensor& mat, int start, int count) {
  require_rank("slice_rows", mat, 2);
  int64_t r = mat.dim(0), c = mat.dim(1);
  if (start < 0 || count < 0 || start + count > r) {
    fail("slice_rows", "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                           ") out of bounds for " + shape_str(mat.shape()));
  }
  std::vector<double> out(mat.values().begin() + start * c,
                          mat.values().begin() + (start + count) * c);
  Tensor result = node({count, static_cast<int>(c)}, std::move(out));
  bool ng = track({&mat});
  ImplPtr mi = mat.impl_ptr();
  attach(result, ng, {mi}, [mi, start, c](TensorImpl& self) {
    if (!mi->requires_grad) return;
    mi->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) mi->grad[start * c + i] += self.grad[i];
  });
  return result;
}

Tensor slice_cols(const Tensor& mat, int start, int count) {
  require_rank("slice_cols", mat, 2);
  int64_t r = mat.dim(0), c = mat.dim(1);
  if (start < 0 || count < 0 || start + count > c) {
    fail("slice_cols", "range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                           ") out of bounds for " + shape_str(mat.shape()));
  }
  std::vector<double> out(static_cast<size_t>(r) * count);
  const auto& mv = mat.values();
  for (int64_t i = 0; i < r; ++i) {
    for (int j = 0; j < count; ++j) out[i * count + j] = mv[i * c + start + j];
  }
  Tensor result = node({static_cast<int>(r), count}, std::move(out));
  bool ng = track({&mat});
  ImplPtr mi = mat.impl_ptr();
  attach(result, ng, {mi}, [mi, r, c, start, count](TensorImpl& self) {
    if (!mi->requires_grad) return;
    mi->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      for (int j = 0; j < count; ++j) mi->grad[i * c + start + j] += self.grad[i * count + j];
    }
  });
  return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_rows", "no parts");
  int64_t c = -1, total_rows = 0;
  for (const Tensor& p : parts) {
    require_rank("concat_rows", p, 2);
    if (c < 0) c = p.dim(1);
    if (p.dim(1) != c) {
      fail("concat_rows", "column mismatch " + shape_str(parts.front().shape()) + " vs " +
                              shape_str(p.shape()));
    }
    total_rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total_rows * c));
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor result = node({static_cast<int>(total_rows), static_cast<int>(c)}, std::move(out));
  bool ng = false;
  for (const Tensor& p : parts) ng = ng || track({&p});
  std::vector<ImplPtr> parents;
  parents.reserve(parts.size());
  for (const Tensor& p : parts) parents.push_back(p.impl_ptr());
  std::vector<ImplPtr> saved = parents;
  attach(result, ng, std::move(parents), [saved](TensorImpl& self) {
    size_t offset = 0;
    for (const ImplPtr& p : saved) {
      size_t n = p->values.size();
      if (p->requires_grad) {
        p->ensure_grad();
        for (size_t i = 0; i < n; ++i) p->grad[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
  return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_cols", "no parts");
  int64_t r = -1, total_cols = 0;
  for (const Tensor& p : parts) {
    require_rank("concat_cols", p, 2);
    if (r < 0) r = p.dim(0);
    if (p.dim(0) != r) {
      fail("concat_cols",
           "row mismatch " + shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    }
    total_cols += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(r * total_cols));
  int64_t col_offset = 0;
  for (const Tensor& p : parts) {
    int64_t pc = p.dim(1);
    const auto& pv = p.values();
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t j = 0; j < pc; ++j) out[i * total_cols + col_offset + j] = pv[i * pc + j];
    }
    col_offset += pc;
  }
  Tensor result = node({static_cast<int>(r), static_cast<int>(total_cols)}, std::move(out));
  bool ng = false;
  for (const Tensor& p : parts) ng = ng || track({&p});
  std::vector<ImplPtr> parents;
  parents.reserve(parts.size());
  for (const Tensor& p : parts) parents.push_back(p.impl_ptr());
  std::vector<ImplPtr> saved = parents;
  attach(result, ng, std::move(parents), [saved, r, total_cols](TensorImpl& self) {
    int64_t col_offset = 0;
    for (const ImplPtr& p : saved) {
      int64_t pc = p->shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t i = 0; i < r; ++i) {
          for (int64_t j = 0; j < pc; ++j) {
            p->grad[i * pc + j] += self.grad[i * total_cols + col_offset + j];
          }
        }
      }
      col_offset += pc;
    }
  });
  return result;
}

Tensor gather_rows(const Tensor& mat, const std::vector<int>& row_indices) {
  require_rank("gather_rows", mat, 2);
  int64_t r = mat.dim(0), c = mat.dim(1);
  for (int idx : row_indices) {
    if (idx < 0 || idx >= r) {
      fail("gather_rows", "row " + std::to_string(idx) + " out of bounds for " +
                              shape_str(mat.shape()));
    }
  }
  std::vector<double> out(row_indices.size() * static_cast<size_t>(c));
  const auto& mv = mat.values();
  for (size_t k = 0; k < row_indices.size(); ++k) {
    for (int64_t j = 0; j < c; ++j) out[k * c + j] = mv[row_indices[k] * c + j];
  }
  Tensor result = node({static_cast<int>(row_indices.size()), static_cast<int>(c)},
                       std::move(out));
  bool ng = track({&mat});
  ImplPtr mi = mat.impl_ptr();
  std::vector<int> idx = row_indices;
  attach(result, ng, {mi}, [mi, idx, c](TensorImpl& self) {
    if (!mi->requires_grad) return;
    mi->ensure_grad();
    for (size_t k = 0; k < idx.size(); ++k) {
      for (int64_t j = 0; j < c; ++j) mi->grad[idx[k] * c + j] += self.grad[k * c + j];
    }
  });
  return result;
}

Tensor select_entries(const Tensor& mat, const std::vector<std::pair<int, int>>& entries) {
  require_rank("select_entries", mat, 2);
  int64_t r = mat.dim(0), c = mat.dim(1);
  std::vector<double> out(entries.size());
  const auto& mv = mat.values();
  for (size_t k = 0; k < entries.size(); ++k) {
    auto [i, j] = entries[k];
    if (i < 0 || i >= r || j < 0 || j >= c) {
      fail("select_entries", "entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                 ") out of bounds for " + shape_str(mat.shape()));
    }
    out[k] = mv[static_cast<int64_t>(i) * c + j];
  }
  Tensor result = node({static_cast<int>(entries.size())}, std::move(out));
  bool ng = track({&mat});
  ImplPtr mi = mat.impl_ptr();
  std::vector<std::pair<int, int>> saved = entries;
  attach(result, ng, {mi}, [mi, saved, c](TensorImpl& self) {
    if (!mi->requires_grad) return;
    mi->ensure_grad();
    for (size_t k = 0; k < saved.size(); ++k) {
      mi->grad[static_cast<int64_t>(saved[k].first) * c + saved[k].second] += self.grad[k];
    }
  });
  return result;
}

Tensor select(const Tensor& a, int64_t flat_index) {
  if (flat_index < 0 || flat_index >= a.numel()) {
    fail("select", "index " + std::to_string(flat_index) + " out of bounds for " +
                       shape_str(a.shape()));
  }
  Tensor result = node({}, {a.values()[flat_index]});
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai, flat_index](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    ai->grad[flat_index] += self.grad[0];
  });
  return result;
}

Tensor at(const Tensor& mat, int row, int col) {
  require_rank("at", mat, 2);
  if (row < 0 || row >= mat.dim(0) || col < 0 || col >= mat.dim(1)) {
    fail("at", "entry (" + std::to_string(row) + ", " + std::to_string(col) +
                   ") out of bounds for " + shape_str(mat.shape()));
  }
  return select(mat, static_cast<int64_t>(row) * mat.dim(1) + col);
}

Tensor softmax(const Tensor& a, int axis) {
  auto slices = slices_along("softmax", a, axis);
  std::vector<double> out(a.values());
  for (const SliceIter& s : slices) {
    double mx = out[s.base];
    for (int64_t i = 1; i < s.count; ++i) mx = std::max(mx, out[s.base + i * s.step]);
    double sum = 0.0;
    for (int64_t i = 0; i < s.count; ++i) {
      double e = std::exp(out[s.base + i * s.step] - mx);
      out[s.base + i * s.step] = e;
      sum += e;
    }
    for (int64_t i = 0; i < s.count; ++i) out[s.base + i * s.step] /= sum;
  }
  Tensor result = node(a.shape(), std::move(out));
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai, slices](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (const SliceIter& s : slices) {
      double dot = 0.0;
      for (int64_t i = 0; i < s.count; ++i) {
        int64_t idx = s.base + i * s.step;
        dot += self.grad[idx] * self.values[idx];
      }
      for (int64_t i = 0; i < s.count; ++i) {
        int64_t idx = s.base + i * s.step;
        ai->grad[idx] += self.values[idx] * (self.grad[idx] - dot);
      }
    }
  });
  return result;
}

Tensor layer_norm(const Tensor& a, double eps) {
  auto slices = slices_along("layer_norm", a, -1);
  std::vector<double> out(a.values());
  std::vector<double> inv_std(slices.size());
  for (size_t si = 0; si < slices.size(); ++si) {
    const SliceIter& s = slices[si];
    double mean = 0.0;
    for (int64_t i = 0; i < s.count; ++i) mean += out[s.base + i * s.step];
    mean /= static_cast<double>(s.count);
    double var = 0.0;
    for (int64_t i = 0; i < s.count; ++i) {
      double d = out[s.base + i * s.step] - mean;
      var += d * d;
    }
    var /= static_cast<double>(s.count);
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[si] = inv;
    for (int64_t i = 0; i < s.count; ++i) {
      int64_t idx = s.base + i * s.step;
      out[idx] = (out[idx] - mean) * inv;
    }
  }
  Tensor result = node(a.shape(), std::move(out));
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai, slices, inv_std](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t si = 0; si < slices.size(); ++si) {
      const SliceIter& s = slices[si];
      double mean_dy = 0.0, mean_dyy = 0.0;
      for (int64_t i = 0; i < s.count; ++i) {
        int64_t idx = s.base + i * s.step;
        mean_dy += self.grad[idx];
        mean_dyy += self.grad[idx] * self.values[idx];
      }
      mean_dy /= static_cast<double>(s.count);
      mean_dyy /= static_cast<double>(s.count);
      for (int64_t i = 0; i < s.count; ++i) {
        int64_t idx = s.base + i * s.step;
        ai->grad[idx] +=
            inv_std[si] * (self.grad[idx] - mean_dy - self.values[idx] * mean_dyy);
      }
    }
  });
  return result;
}

Tensor l2_normalize_rows(const Tensor& mat, double eps) {
  require_rank("l2_normalize_rows", mat, 2);
  int64_t r = mat.dim(0), c = mat.dim(1);
  std::vector<double> out(mat.values());
  std::vector<double> inv_norm(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    double sq = eps * eps;
    for (int64_t j = 0; j < c; ++j) sq += out[i * c + j] * out[i * c + j];
    double inv = 1.0 / std::sqrt(sq);
    inv_norm[i] = inv;
    for (int64_t j = 0; j < c; ++j) out[i * c + j] *= inv;
  }
  Tensor result = node(mat.shape(), std::move(out));
  bool ng = track({&mat});
  ImplPtr mi = mat.impl_ptr();
  attach(result, ng, {mi}, [mi, r, c, inv_norm](TensorImpl& self) {
    if (!mi->requires_grad) return;
    mi->ensure_grad();
    for (int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.values[i * c + j];
      for (int64_t j = 0; j < c; ++j) {
        mi->grad[i * c + j] +=
            inv_norm[i] * (self.grad[i * c + j] - self.values[i * c + j] * dot);
      }
    }
  });
  return result;
}

Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    fail("dropout", "rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (!training || rate == 0.0) return a;
  double keep = 1.0 - rate;
  double scale = 1.0 / keep;
  std::vector<double> mask(a.values().size());
  for (double& m : mask) m = rng.bernoulli(keep) ? scale : 0.0;
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Tensor result = node(a.shape(), std::move(out));
  bool ng = track({&a});
  ImplPtr ai = a.impl_ptr();
  attach(result, ng, {ai}, [ai, mask](TensorImpl& self) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] * mask[i];
  });
  return result;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    fail("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  detail::matmul_raw(a.values().data(), b.values().data(), out.data(), static_cast<int>(m),
                     static_cast<int>(k), static_cast<int>(n));
  Tensor result = node({static_cast<int>(m), static_cast<int>(n)}, std::move(out));
  bool ng = track({&a, &b});
  ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr();
  attach(result, ng, {ai, bi}, [ai, bi, m, k, n](TensorImpl& self) {
    if (ai->requires_grad) {
      ai->ensure_grad();
      detail::matmul_nt_raw(self.grad.data(), bi->values.data(), ai->grad.data(),
                            static_cast<int>(m), static_cast<int>(n), static_cast<int>(k));
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      detail::matmul_tn_raw(ai->values.data(), self.grad.data(), bi->grad.data(),
                            static_cast<int>(k), static_cast<int>(m), static_cast<int>(n));
    }
  });
  return result;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, PadMode pad_mode) {
  require_rank("conv2d", input, 3);
  if (weight.rank() != 4) {
    fail("conv2d", "expected [out,in,kh,kw] weight, got " + shape_str(weight.shape()));
  }
  if (stride < 1) fail("conv2d", "stride must be positive");
  if (padding < 0) fail("conv2d", "padding must be nonnegative");
  int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  int cout = weight.dim(0), kcin = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (kcin != cin) {
    fail("conv2d", "input channels " + shape_str(input.shape()) + " do not match weight " +
                       shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    fail("conv2d", "bias " + shape_str(bias.shape()) + " does not match " +
                       std::to_string(cout) + " output channels");
  }
  int hout = (h + 2 * padding - kh) / stride + 1;
  int wout = (w + 2 * padding - kw) / stride + 1;
  if (hout < 1 || wout < 1) {
    fail("conv2d", "kernel " + shape_str(weight.shape()) + " does not fit input " +
                       shape_str(input.shape()));
  }
  int64_t kdim = static_cast<int64_t>(cin) * kh * kw;
  int64_t pixels = static_cast<int64_t>(hout) * wout;

  const bool replicate = pad_mode == PadMode::kReplicate;
  auto clamp_to = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };

  auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(kdim * pixels), 0.0);
  const auto& iv = input.values();
  for (int c = 0; c < cin; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        int64_t row = (static_cast<int64_t>(c) * kh + ki) * kw + kj;
        for (int oy = 0; oy < hout; ++oy) {
          int y = oy * stride + ki - padding;
          if (replicate) {
            y = clamp_to(y, h);
          } else if (y < 0 || y >= h) {
            continue;
          }
          for (int ox = 0; ox < wout; ++ox) {
            int x = ox * stride + kj - padding;
            if (replicate) {
              x = clamp_to(x, w);
            } else if (x < 0 || x >= w) {
              continue;
            }
            (*cols)[row * pixels + oy * wout + ox] =
                iv[(static_cast<int64_t>(c) * h + y) * w + x];
          }
        }
      }
    }
  }

  std::vector<double> out(static_cast<size_t>(cout) * pixels, 0.0);
  detail::matmul_raw(weight.values().data(), cols->data(), out.data(), cout,
                     static_cast<int>(kdim), static_cast<int>(pixels));
  if (bias.defined()) {
    const auto& bv = bias.values();
    for (int c = 0; c < cout; ++c) {
      for (int64_t p = 0; p < pixels; ++p) out[c * pixels + p] += bv[c];
    }
  }
  Tensor result = node({cout, hout, wout}, std::move(out));
  bool ng = bias.defined() ? track({&input, &weight, &bias}) : track({&input, &weight});
  ImplPtr ii = input.impl_ptr(), wi = weight.impl_ptr();
  ImplPtr bi = bias.defined() ? bias.impl_ptr() : nullptr;
  std::vector<ImplPtr> parents{ii, wi};
  if (bi) parents.push_back(bi);
  attach(result, ng, std::move(parents),
         [ii, wi, bi, cols, cin, h, w, cout, kh, kw, stride, padding, hout, wout, kdim, pixels,
          replicate](TensorImpl& self) {
           if (wi->requires_grad) {
             wi->ensure_grad();
             detail::matmul_nt_raw(self.grad.data(), cols->data(), wi->grad.data(), cout,
                                   static_cast<int>(pixels), static_cast<int>(kdim));
           }
           if (bi && bi->requires_grad) {
             bi->ensure_grad();
             for (int c = 0; c < cout; ++c) {
               double s = 0.0;
               for (int64_t p = 0; p < pixels; ++p) s += self.grad[c * pixels + p];
               bi->grad[c] += s;
             }
           }
           if (ii->requires_grad) {
             ii->ensure_grad();
             std::vector<double> dcols(static_cast<size_t>(kdim * pixels), 0.0);
             detail::matmul_tn_raw(wi->values.data(), self.grad.data(), dcols.data(),
                                   static_cast<int>(kdim), cout, static_cast<int>(pixels));
             auto clamp_to = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
             for (int c = 0; c < cin; ++c) {
               for (int ki = 0; ki < kh; ++ki) {
                 for (int kj = 0; kj < kw; ++kj) {
                   int64_t row = (static_cast<int64_t>(c) * kh + ki) * kw + kj;
                   for (int oy = 0; oy < hout; ++oy) {
                     int y = oy * stride + ki - padding;
                     if (replicate) {
                       y = clamp_to(y, h);
                     } else if (y < 0 || y >= h) {
                       continue;
                     }
                     for (int ox = 0; ox < wout; ++ox) {
                       int x = ox * stride + kj - padding;
                       if (replicate) {
                         x = clamp_to(x, w);
                       } else if (x < 0 || x >= w) {
                         continue;
                       }
                       ii->grad[(static_cast<int64_t>(c) * h + y) * w + x] +=
                           dcols[row * pixels + oy * wout + ox];
                     }
                   }
                 }
               }
             }
           }
         });
  return result;
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int num_heads, AttentionCapture* capture) {
  require_rank("multi_head_attention", queries, 2);
  require_rank("multi_head_attention", keys, 2);
  require_rank("multi_head_attention", values, 2);
  int d = queries.dim(1);
  if (keys.dim(1) != d || values.dim(1) != d) {
    fail("multi_head_attention", "width mismatch: " + shape_str(queries.shape()) + ", " +
                                     shape_str(keys.shape()) + ", " + shape_str(values.shape()));
  }
  if (keys.dim(0) != values.dim(0)) {
    fail("multi_head_attention", "keys " + shape_str(keys.shape()) + " and values " +
                                     shape_str(values.shape()) + " disagree on sequence length");
  }
  if (num_heads < 1 || d % num_heads != 0) {
    fail("multi_head_attention", "width " + std::to_string(d) + " not divisible by " +
                                     std::to_string(num_heads) + " heads");
  }
  int dh = d / num_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (int hix = 0; hix < num_heads; ++hix) {
    Tensor qh = slice_cols(queries, hix * dh, dh);
    Tensor kh = slice_cols(keys, hix * dh, dh);
    Tensor vh = slice_cols(values, hix * dh, dh);
    Tensor attn = softmax(mul_const(matmul(qh, transpose(kh)), scale), -1);
    if (capture) capture->head_weights.push_back(attn);
    heads.push_back(matmul(attn, vh));
  }
  return num_heads == 1 ? heads[0] : concat_cols(heads);
}

namespace detail {

void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_raw(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

void matmul_tn_raw(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<size_t>(p) * m;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

}  // namespace bootplace::diff
