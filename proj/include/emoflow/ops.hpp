#pragma once

#include <vector>

#include "emoflow/tensor.hpp"

namespace emoflow {

// Elementwise (shapes must match exactly; no implicit broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
// Multiply by a learnable one-element tensor (gradients flow into both).
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor log_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double c);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor mean_over_rows(const Tensor& a);  // {T,D} -> {D}

// Structure.
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);
Tensor row(const Tensor& a, int r);                      // {T,D} -> {D}
Tensor stack_rows(const std::vector<Tensor>& rows);      // N x {D} -> {N,D}
Tensor concat_cols(const Tensor& a, const Tensor& b);    // {T,A},{T,B} -> {T,A+B}
Tensor slice_cols(const Tensor& a, int c0, int c1);      // columns [c0,c1)
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);      // x{T,in}·w{in,out} + b{out}
Tensor linear_vec(const Tensor& v, const Tensor& w, const Tensor& b);  // {in} -> {out}

// Row-wise broadcasting against a length-D vector.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);

// Neural primitives.
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x);       // per-row standardization, no affine
Tensor l2_normalize_rows(const Tensor& x);
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);
// Same-padded 1-D convolution over rows (frames): x{T,Cin}, w{Cout,Cin,3}, b{Cout}.
Tensor conv1d_same3(const Tensor& x, const Tensor& w, const Tensor& b);

struct MhaParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    static MhaParams init(int d, Rng rng);
};
// Scaled dot-product self-attention over rows of x{T,D}; D % heads == 0.
Tensor multi_head_attention(const Tensor& x, const MhaParams& p, int heads);

// PE(pos,2i)=sin(pos/10000^(2i/D)), PE(pos,2i+1)=cos(same). D must be even.
// `pos_offset` admits fractional positions (continuous-time embeddings).
Tensor sinusoidal_pe(int t_len, int d, double pos_scale = 1.0);
std::vector<double> sinusoidal_features(double pos, int d);

// KL(S||M) = sum S*log(S/M) with 0*log0 := 0. Throws data_error where
// S > 0 but M <= 0; callers guard denominators before getting here.
Tensor kl_div(const Tensor& s, const Tensor& m);

}  // namespace emoflow
