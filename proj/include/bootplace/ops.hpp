#pragma once

#include <utility>
#include <vector>

#include "bootplace/rng.hpp"
#include "bootplace/tensor.hpp"

namespace bootplace::diff {

// Elementwise binary ops; both operands must share a shape exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor elt_min(const Tensor& a, const Tensor& b);
Tensor elt_max(const Tensor& a, const Tensor& b);

// Scalar-constant variants (the constant is not a graph node).
Tensor add_const(const Tensor& a, double c);
Tensor mul_const(const Tensor& a, double c);
Tensor neg(const Tensor& a);

// Elementwise unary ops.
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs_val(const Tensor& a);
// log(max(x, eps)); entries at or below eps get zero gradient.
Tensor log_clamped(const Tensor& a, double eps = 1e-12);

// Row/column broadcasts over a [R,C] matrix.
Tensor add_row_vector(const Tensor& mat, const Tensor& vec);  // vec: [C], added to every row
Tensor mul_row_vector(const Tensor& mat, const Tensor& vec);  // vec: [C], scales every row
Tensor add_col_vector(const Tensor& mat, const Tensor& vec);  // vec: [R], added to every column

// Reductions to a scalar tensor.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Shape manipulation. All produce copies; gradients flow back to the source.
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& mat);
Tensor slice_rows(const Tensor& mat, int start, int count);
Tensor slice_cols(const Tensor& mat, int start, int count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Picks whole rows; duplicate indices are allowed and accumulate gradient.
Tensor gather_rows(const Tensor& mat, const std::vector<int>& row_indices);
// Picks individual (row, col) entries into a vector, in argument order.
Tensor select_entries(const Tensor& mat, const std::vector<std::pair<int, int>>& entries);
// Single-element views as scalar tensors.
Tensor select(const Tensor& a, int64_t flat_index);
Tensor at(const Tensor& mat, int row, int col);

// softmax along `axis` (-1 = last). Supports rank-1 and rank-2 inputs.
Tensor softmax(const Tensor& a, int axis = -1);
// Normalizes each slice along the last axis to mean 0, variance 1. Affine
// scale/shift is left to the caller (see add_row_vector / mul_row_vector).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
// Scales each row of a [R,C] matrix to unit Euclidean norm.
Tensor l2_normalize_rows(const Tensor& mat, double eps = 1e-12);

// Inverted dropout: keep probability 1-rate, kept entries scaled by 1/(1-rate).
// Identity when training is false or rate is 0. The mask is drawn from rng.
Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng);

Tensor matmul(const Tensor& a, const Tensor& b);

enum class PadMode {
  kZero,       // out-of-bounds taps read 0
  kReplicate,  // out-of-bounds taps read the nearest edge pixel
};

// input: [Cin,H,W]; weight: [Cout,Cin,kh,kw]; bias: [Cout] or undefined.
// Output: [Cout,Hout,Wout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, PadMode pad_mode = PadMode::kZero);

struct AttentionCapture {
  // One [Tq,Tk] weight matrix per head, post-softmax.
  std::vector<Tensor> head_weights;
};

// Scaled dot-product attention over num_heads splits of the model width.
// queries: [Tq,d], keys/values: [Tk,d]; d must divide evenly by num_heads.
// Input/output projections are the caller's responsibility.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            int num_heads, AttentionCapture* capture = nullptr);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_const(a, c); }
inline Tensor operator+(double c, const Tensor& a) { return add_const(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_const(a, -c); }
inline Tensor operator-(double c, const Tensor& a) { return add_const(neg(a), c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_const(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_const(a, c); }
inline Tensor operator/(const Tensor& a, double c) { return mul_const(a, 1.0 / c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

namespace detail {
// c[m,n] += a[m,k] * b[k,n]
void matmul_raw(const double* a, const double* b, double* c, int m, int k, int n);
// c[m,n] += a[m,k] * b[n,k]^T
void matmul_nt_raw(const double* a, const double* b, double* c, int m, int k, int n);
// c[m,n] += a[k,m]^T * b[k,n]
void matmul_tn_raw(const double* a, const double* b, double* c, int m, int k, int n);
}  // namespace detail

}  // namespace bootplace::diff
