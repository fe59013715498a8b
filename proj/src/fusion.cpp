#include "emoflow/fusion.hpp"

#include <cmath>
#include <cstdio>

#include "emoflow/error.hpp"

namespace emoflow {

namespace {

Tensor init_weight(int in, int out, Rng& rng) {
    Tensor w = Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    w.set_requires_grad();
    return w;
}

Tensor init_const(Shape shape, double v) {
    Tensor t = Tensor::full(shape, v);
    t.set_requires_grad();
    return t;
}

}  // namespace

EmoAdaLnParams EmoAdaLnParams::init(int d_cond, int d) {
    EmoAdaLnParams p;
    p.wg = init_const({d_cond, d}, 0.0);
    p.bg = init_const({d}, 1.0);
    p.wb = init_const({d_cond, d}, 0.0);
    p.bb = init_const({d}, 0.0);
    return p;
}

Tensor emo_ada_layer_norm(const Tensor& x, const Tensor& h_gated, const EmoAdaLnParams& p) {
    Tensor gamma = linear_vec(h_gated, p.wg, p.bg);
    Tensor beta = linear_vec(h_gated, p.wb, p.bb);
    return add_rowvec(mul_rowvec(layer_norm_rows(x), gamma), beta);
}

FusionBlockParams FusionBlockParams::init(int d_cond, int d, Rng rng) {
    FusionBlockParams p;
    p.ln1 = EmoAdaLnParams::init(d_cond, d);
    p.ln2 = EmoAdaLnParams::init(d_cond, d);
    p.attn = MhaParams::init(d, rng.split("attn"));
    for (Tensor* t : {&p.attn.wq, &p.attn.bq, &p.attn.wk, &p.attn.bk, &p.attn.wv, &p.attn.bv,
                      &p.attn.wo, &p.attn.bo})
        t->set_requires_grad();
    Rng fr = rng.split("ffn");
    p.fw1 = init_weight(d, 2 * d, fr);
    p.fb1 = init_const({2 * d}, 0.0);
    p.fw2 = init_weight(2 * d, d, fr);
    p.fb2 = init_const({d}, 0.0);
    return p;
}

Tensor fusion_block(const Tensor& x, const Tensor& h_gated, const FusionBlockParams& p, int heads) {
    Tensor a = add(x, multi_head_attention(emo_ada_layer_norm(x, h_gated, p.ln1), p.attn, heads));
    Tensor f = linear(gelu(linear(emo_ada_layer_norm(a, h_gated, p.ln2), p.fw1, p.fb1)), p.fw2, p.fb2);
    return add(a, f);
}

FuEncoderParams FuEncoderParams::init(int d_content, int d, int blocks, int heads, double dropout,
                                      Rng rng) {
    if (blocks < 1) throw config_error("fuencoder: need at least one fusion block");
    if (d % heads != 0) throw config_error("fuencoder: width must be divisible by heads");
    if (d % 2 != 0) throw config_error("fuencoder: width must be even for positional encoding");
    if (dropout < 0 || dropout >= 1) throw config_error("fuencoder: dropout must lie in [0,1)");
    FuEncoderParams p;
    p.d_content = d_content;
    p.d = d;
    p.heads = heads;
    p.dropout = dropout;
    Rng pr = rng.split("prenet");
    p.pw1 = init_weight(d_content, d, pr);
    p.pb1 = init_const({d}, 0.0);
    p.pw2 = init_weight(d, d, pr);
    p.pb2 = init_const({d}, 0.0);
    p.log_gate = init_const({1}, 0.0);  // g = exp(0) = 1
    for (int b = 0; b < blocks; ++b)
        p.blocks.push_back(FusionBlockParams::init(d, d, rng.split("block", static_cast<uint64_t>(b))));
    Rng orr = rng.split("out");
    p.ow = init_weight(d, d, orr);
    p.ob = init_const({d}, 0.0);
    return p;
}

std::vector<std::pair<std::string, Tensor>> FuEncoderParams::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out = {
        {"pw1", pw1}, {"pb1", pb1}, {"pw2", pw2}, {"pb2", pb2}, {"log_gate", log_gate}};
    for (size_t b = 0; b < blocks.size(); ++b) {
        const std::string k = "b" + std::to_string(b) + ".";
        const FusionBlockParams& bp = blocks[b];
        out.emplace_back(k + "ln1.wg", bp.ln1.wg);
        out.emplace_back(k + "ln1.bg", bp.ln1.bg);
        out.emplace_back(k + "ln1.wb", bp.ln1.wb);
        out.emplace_back(k + "ln1.bb", bp.ln1.bb);
        out.emplace_back(k + "ln2.wg", bp.ln2.wg);
        out.emplace_back(k + "ln2.bg", bp.ln2.bg);
        out.emplace_back(k + "ln2.wb", bp.ln2.wb);
        out.emplace_back(k + "ln2.bb", bp.ln2.bb);
        out.emplace_back(k + "attn.wq", bp.attn.wq);
        out.emplace_back(k + "attn.bq", bp.attn.bq);
        out.emplace_back(k + "attn.wk", bp.attn.wk);
        out.emplace_back(k + "attn.bk", bp.attn.bk);
        out.emplace_back(k + "attn.wv", bp.attn.wv);
        out.emplace_back(k + "attn.bv", bp.attn.bv);
        out.emplace_back(k + "attn.wo", bp.attn.wo);
        out.emplace_back(k + "attn.bo", bp.attn.bo);
        out.emplace_back(k + "fw1", bp.fw1);
        out.emplace_back(k + "fb1", bp.fb1);
        out.emplace_back(k + "fw2", bp.fw2);
        out.emplace_back(k + "fb2", bp.fb2);
    }
    out.emplace_back("ow", ow);
    out.emplace_back("ob", ob);
    return out;
}

std::vector<Tensor> FuEncoderParams::params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

void FuEncoderParams::write_to(Container& c, const std::string& prefix) const {
    c.meta[prefix + "d_content"] = std::to_string(d_content);
    c.meta[prefix + "d"] = std::to_string(d);
    c.meta[prefix + "heads"] = std::to_string(heads);
    c.meta[prefix + "blocks"] = std::to_string(blocks.size());
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", dropout);
    c.meta[prefix + "dropout"] = buf;
    for (auto& [name, t] : named_params()) c.add(prefix + name, t);
}

FuEncoderParams FuEncoderParams::read_from(const Container& c, const std::string& prefix) {
    FuEncoderParams p = FuEncoderParams::init(std::stoi(c.meta.at(prefix + "d_content")),
                                              std::stoi(c.meta.at(prefix + "d")),
                                              std::stoi(c.meta.at(prefix + "blocks")),
                                              std::stoi(c.meta.at(prefix + "heads")),
                                              std::stod(c.meta.at(prefix + "dropout")), Rng(0));
    for (auto& [name, t] : p.named_params()) {
        Tensor loaded = c.tensor(prefix + name);
        if (!same_shape(loaded.shape(), t.shape()))
            throw data_error("fuencoder: checkpoint shape mismatch for '" + prefix + name + "'");
        t.values() = loaded.values();
    }
    return p;
}

Tensor prenet(const Tensor& content, const FuEncoderParams& p, bool training, Rng rng) {
    Rng d1 = rng.split("drop1");
    Rng d2 = rng.split("drop2");
    Tensor h = dropout(relu(linear(content, p.pw1, p.pb1)), p.dropout, training, d1);
    return dropout(relu(linear(h, p.pw2, p.pb2)), p.dropout, training, d2);
}

Tensor adaptive_intensity_gate(const Tensor& h, const Tensor& log_gate, double lambda) {
    if (lambda < 0.0 || lambda > 2.0)
        throw config_error("adaptive_intensity_gate: lambda must lie in [0,2]");
    return scale(scale_by(h, exp_op(log_gate)), lambda);
}

Tensor fuencoder_forward(const Tensor& content, const Tensor& h, double lambda,
                         const FuEncoderParams& p, bool training, Rng rng, bool use_aig) {
    if (content.ndim() != 2 || content.dim(1) != p.d_content)
        throw shape_error("fuencoder_forward: content must be {T, d_content}");
    if (h.ndim() != 1 || h.dim(0) != p.d)
        throw shape_error("fuencoder_forward: emotion embedding must be {d}");

    Tensor h_gated = use_aig ? adaptive_intensity_gate(h, p.log_gate, lambda) : h;
    Tensor x = add(prenet(content, p, training, rng.split("prenet")), sinusoidal_pe(content.dim(0), p.d));
    for (size_t b = 0; b < p.blocks.size(); ++b) x = fusion_block(x, h_gated, p.blocks[b], p.heads);
    return linear(x, p.ow, p.ob);
}

}  // namespace emoflow
