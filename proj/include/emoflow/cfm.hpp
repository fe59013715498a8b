#pragma once

#include <string>
#include <vector>

#include "emoflow/container.hpp"
#include "emoflow/ops.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/tensor.hpp"

namespace emoflow {

// psi_t = t·x1 + (1 − (1−sigma_min)·t)·x0 — the optimal-transport path from
// noise (t=0) to data (t=1, up to sigma_min·x0).
Tensor ot_path(const Tensor& x0, const Tensor& x1, double t, double sigma_min);

// x1 − (1−sigma_min)·x0: the regression target, equal to d/dt psi_t for all t.
Tensor cfm_target(const Tensor& x0, const Tensor& x1, double sigma_min);

// FiLM conditioner: x' = scale(cond) ⊙ x + shift(cond). Zero-initialized
// weights with scale-bias 1 / shift-bias 0 make it the identity at start.
struct FilmParams {
    Tensor ws, bs, wb, bb;
    static FilmParams init(int d_cond, int d);
};
Tensor film(const Tensor& x, const Tensor& cond, const FilmParams& p);

// One decoder block: additive timestep fusion, ResNet pair of kernel-3
// convolutions, self-attention residual, then FiLM on the emotion embedding.
// Second conv and attention output projections start at zero, so a fresh
// block is the identity plus FiLM.
struct CfmBlockParams {
    Tensor cw1, cb1, cw2, cb2;  // conv {width, width, 3}
    MhaParams attn;
    FilmParams film;
    static CfmBlockParams init(int d_cond, int width, Rng rng);
};

struct CfmParams {
    int d_mel = 0, d_fused = 0, d_cond = 0, width = 0, heads = 0, time_dim = 0;
    double sigma_min = 1e-4;
    Tensor in_w, in_b;          // {d_mel + d_fused} → width
    Tensor tw1, tb1, tw2, tb2;  // time embedding MLP: time_dim → width
    std::vector<CfmBlockParams> blocks;
    Tensor out_w, out_b;        // width → d_mel, zero-initialized

    static CfmParams init(int d_mel, int d_fused, int d_cond, int width, int heads, int time_dim,
                          int blocks, double sigma_min, Rng rng);
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> params() const;

    void write_to(Container& c, const std::string& prefix) const;
    static CfmParams read_from(const Container& c, const std::string& prefix);
};

// Sinusoidal features of t (scaled so the sampler grid spreads across
// frequencies) through a 2-layer GELU MLP; returns a {width} vector.
Tensor time_embedding(double t, const CfmParams& p);

// v(x_t, t | f, h): input projection of concat(x_t, f) per frame, then the
// block stack, then output projection back to the Mel surrogate width.
Tensor vector_field(const Tensor& x_t, double t, const Tensor& fused, const Tensor& h,
                    const CfmParams& p);

struct CfmBatchItem {
    Tensor x1;     // {T, d_mel}
    Tensor fused;  // {T, d_fused}
    Tensor h;      // {d_cond}
};

// Per item: t ~ U[0,1], x0 ~ N(0,I) from the given stream; squared error of
// the field against cfm_target on psi_t, averaged over elements, then over
// items. p_uncond zeroes h with that probability (guidance training).
Tensor cfm_loss(const std::vector<CfmBatchItem>& batch, const CfmParams& p, Rng rng,
                double p_uncond = 0.0);

struct SamplerConfig {
    int steps = 25;
    double guidance_scale = 1.0;
};

// Explicit Euler integration of the learned field from seeded Gaussian
// noise. guidance_scale s != 1 blends v_unc + s·(v_cond − v_unc) with the
// unconditional field (h = 0); s == 1 runs the pure conditional path.
Tensor euler_sample(const Tensor& fused, const Tensor& h, const CfmParams& p,
                    const SamplerConfig& cfg, Rng rng);

}  // namespace emoflow
