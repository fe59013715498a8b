#pragma once

#include <string>
#include <vector>

#include "emoflow/container.hpp"
#include "emoflow/ops.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/tensor.hpp"

namespace emoflow {

// Conditioner of one emotion-adaptive layer norm: per-feature scale and
// shift predicted linearly from the gated emotion embedding. Weights start
// at zero with scale-bias 1 / shift-bias 0, so an untrained block applies a
// plain layer norm.
struct EmoAdaLnParams {
    Tensor wg, bg, wb, bb;  // gamma = h·wg + bg, beta = h·wb + bb
    static EmoAdaLnParams init(int d_cond, int d);
};
Tensor emo_ada_layer_norm(const Tensor& x, const Tensor& h_gated, const EmoAdaLnParams& p);

// Pre-norm residual block: emoAdaLN → self-attention → add, then
// emoAdaLN → FFN → add.
struct FusionBlockParams {
    EmoAdaLnParams ln1, ln2;
    MhaParams attn;
    Tensor fw1, fb1, fw2, fb2;  // position-wise FFN, hidden = 2·d
    static FusionBlockParams init(int d_cond, int d, Rng rng);
};
Tensor fusion_block(const Tensor& x, const Tensor& h_gated, const FusionBlockParams& p, int heads);

struct FuEncoderParams {
    int d_content = 0, d = 0, heads = 0;
    double dropout = 0.5;
    Tensor pw1, pb1, pw2, pb2;  // PreNet: 2 × (linear → ReLU → dropout)
    Tensor log_gate;            // AIG scalar g = exp(log_gate), init g = 1
    std::vector<FusionBlockParams> blocks;
    Tensor ow, ob;              // output projection d → d

    static FuEncoderParams init(int d_content, int d, int blocks, int heads, double dropout, Rng rng);
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> params() const;

    void write_to(Container& c, const std::string& prefix) const;
    static FuEncoderParams read_from(const Container& c, const std::string& prefix);
};

// PreNet alone (exposed for tests): 2 × (linear → ReLU → dropout(p)).
Tensor prenet(const Tensor& content, const FuEncoderParams& p, bool training, Rng rng);

// lambda·g·h — the adaptive intensity gate. lambda must lie in [0,2].
Tensor adaptive_intensity_gate(const Tensor& h, const Tensor& log_gate, double lambda);

// PreNet → +positional encoding → K fusion blocks conditioned on the gated
// emotion embedding → output projection. With use_aig=false the embedding
// enters ungated (no g, no lambda). One sequence in, one sequence out;
// batches are loops over this (items never mix).
Tensor fuencoder_forward(const Tensor& content, const Tensor& h, double lambda,
                         const FuEncoderParams& p, bool training, Rng rng, bool use_aig = true);

}  // namespace emoflow
