#include "emoflow/cfm.hpp"

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

// Spreads t in [0,1] across the sinusoid frequency ladder.
constexpr double kTimeScale = 1000.0;

}  // namespace

Tensor ot_path(const Tensor& x0, const Tensor& x1, double t, double sigma_min) {
    if (!same_shape(x0.shape(), x1.shape())) throw shape_error("ot_path: x0 and x1 must match");
    if (t < 0.0 || t > 1.0) throw config_error("ot_path: t must lie in [0,1]");
    return add(scale(x1, t), scale(x0, 1.0 - (1.0 - sigma_min) * t));
}

Tensor cfm_target(const Tensor& x0, const Tensor& x1, double sigma_min) {
    if (!same_shape(x0.shape(), x1.shape())) throw shape_error("cfm_target: x0 and x1 must match");
    return sub(x1, scale(x0, 1.0 - sigma_min));
}

FilmParams FilmParams::init(int d_cond, int d) {
    FilmParams p;
    p.ws = init_const({d_cond, d}, 0.0);
    p.bs = init_const({d}, 1.0);
    p.wb = init_const({d_cond, d}, 0.0);
    p.bb = init_const({d}, 0.0);
    return p;
}

Tensor film(const Tensor& x, const Tensor& cond, const FilmParams& p) {
    Tensor sc = linear_vec(cond, p.ws, p.bs);
    Tensor sh = linear_vec(cond, p.wb, p.bb);
    return add_rowvec(mul_rowvec(x, sc), sh);
}

CfmBlockParams CfmBlockParams::init(int d_cond, int width, Rng rng) {
    CfmBlockParams p;
    Rng cr = rng.split("conv");
    p.cw1 = Tensor::randn({width, width, 3}, cr, 1.0 / std::sqrt(3.0 * width));
    p.cw1.set_requires_grad();
    p.cb1 = init_const({width}, 0.0);
    p.cw2 = init_const({width, width, 3}, 0.0);  // residual branch starts silent
    p.cb2 = init_const({width}, 0.0);
    p.attn = MhaParams::init(width, rng.split("attn"));
    for (Tensor* t : {&p.attn.wq, &p.attn.bq, &p.attn.wk, &p.attn.bk, &p.attn.wv, &p.attn.bv,
                      &p.attn.wo, &p.attn.bo})
        t->set_requires_grad();
    p.attn.wo.values().assign(p.attn.wo.values().size(), 0.0);
    p.film = FilmParams::init(d_cond, width);
    return p;
}

CfmParams CfmParams::init(int d_mel, int d_fused, int d_cond, int width, int heads, int time_dim,
                          int blocks, double sigma_min, Rng rng) {
    if (blocks < 1) throw config_error("cfm: need at least one block");
    if (width % heads != 0) throw config_error("cfm: width must be divisible by heads");
    if (time_dim < 2 || time_dim % 2 != 0) throw config_error("cfm: time_dim must be even");
    if (sigma_min <= 0 || sigma_min >= 1) throw config_error("cfm: sigma_min must lie in (0,1)");
    CfmParams p;
    p.d_mel = d_mel;
    p.d_fused = d_fused;
    p.d_cond = d_cond;
    p.width = width;
    p.heads = heads;
    p.time_dim = time_dim;
    p.sigma_min = sigma_min;

    Rng ir = rng.split("in");
    p.in_w = init_weight(d_mel + d_fused, width, ir);
    p.in_b = init_const({width}, 0.0);
    Rng tr = rng.split("time");
    p.tw1 = init_weight(time_dim, width, tr);
    p.tb1 = init_const({width}, 0.0);
    p.tw2 = init_weight(width, width, tr);
    p.tb2 = init_const({width}, 0.0);
    for (int b = 0; b < blocks; ++b)
        p.blocks.push_back(CfmBlockParams::init(d_cond, width, rng.split("block", static_cast<uint64_t>(b))));
    p.out_w = init_const({width, d_mel}, 0.0);
    p.out_b = init_const({d_mel}, 0.0);
    return p;
}

std::vector<std::pair<std::string, Tensor>> CfmParams::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out = {
        {"in_w", in_w}, {"in_b", in_b}, {"tw1", tw1}, {"tb1", tb1}, {"tw2", tw2}, {"tb2", tb2}};
    for (size_t b = 0; b < blocks.size(); ++b) {
        const std::string k = "b" + std::to_string(b) + ".";
        const CfmBlockParams& bp = blocks[b];
        out.emplace_back(k + "cw1", bp.cw1);
        out.emplace_back(k + "cb1", bp.cb1);
        out.emplace_back(k + "cw2", bp.cw2);
        out.emplace_back(k + "cb2", bp.cb2);
        out.emplace_back(k + "attn.wq", bp.attn.wq);
        out.emplace_back(k + "attn.bq", bp.attn.bq);
        out.emplace_back(k + "attn.wk", bp.attn.wk);
        out.emplace_back(k + "attn.bk", bp.attn.bk);
        out.emplace_back(k + "attn.wv", bp.attn.wv);
        out.emplace_back(k + "attn.bv", bp.attn.bv);
        out.emplace_back(k + "attn.wo", bp.attn.wo);
        out.emplace_back(k + "attn.bo", bp.attn.bo);
        out.emplace_back(k + "film.ws", bp.film.ws);
        out.emplace_back(k + "film.bs", bp.film.bs);
        out.emplace_back(k + "film.wb", bp.film.wb);
        out.emplace_back(k + "film.bb", bp.film.bb);
    }
    out.emplace_back("out_w", out_w);
    out.emplace_back("out_b", out_b);
    return out;
}

std::vector<Tensor> CfmParams::params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

void CfmParams::write_to(Container& c, const std::string& prefix) const {
    c.meta[prefix + "d_mel"] = std::to_string(d_mel);
    c.meta[prefix + "d_fused"] = std::to_string(d_fused);
    c.meta[prefix + "d_cond"] = std::to_string(d_cond);
    c.meta[prefix + "width"] = std::to_string(width);
    c.meta[prefix + "heads"] = std::to_string(heads);
    c.meta[prefix + "time_dim"] = std::to_string(time_dim);
    c.meta[prefix + "blocks"] = std::to_string(blocks.size());
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", sigma_min);
    c.meta[prefix + "sigma_min"] = buf;
    for (auto& [name, t] : named_params()) c.add(prefix + name, t);
}

CfmParams CfmParams::read_from(const Container& c, const std::string& prefix) {
    CfmParams p = CfmParams::init(
        std::stoi(c.meta.at(prefix + "d_mel")), std::stoi(c.meta.at(prefix + "d_fused")),
        std::stoi(c.meta.at(prefix + "d_cond")), std::stoi(c.meta.at(prefix + "width")),
        std::stoi(c.meta.at(prefix + "heads")), std::stoi(c.meta.at(prefix + "time_dim")),
        std::stoi(c.meta.at(prefix + "blocks")), std::stod(c.meta.at(prefix + "sigma_min")), Rng(0));
    for (auto& [name, t] : p.named_params()) {
        Tensor loaded = c.tensor(prefix + name);
        if (!same_shape(loaded.shape(), t.shape()))
            throw data_error("cfm: checkpoint shape mismatch for '" + prefix + name + "'");
        t.values() = loaded.values();
    }
    return p;
}

Tensor time_embedding(double t, const CfmParams& p) {
    Tensor feats({p.time_dim}, sinusoidal_features(kTimeScale * t, p.time_dim));
    return linear_vec(gelu(linear_vec(feats, p.tw1, p.tb1)), p.tw2, p.tb2);
}

Tensor vector_field(const Tensor& x_t, double t, const Tensor& fused, const Tensor& h,
                    const CfmParams& p) {
    if (x_t.ndim() != 2 || x_t.dim(1) != p.d_mel) throw shape_error("vector_field: x_t must be {T, d_mel}");
    if (fused.ndim() != 2 || fused.dim(1) != p.d_fused || fused.dim(0) != x_t.dim(0))
        throw shape_error("vector_field: fused sequence must be {T, d_fused} with matching T");
    if (h.ndim() != 1 || h.dim(0) != p.d_cond) throw shape_error("vector_field: h must be {d_cond}");

    Tensor temb = time_embedding(t, p);
    Tensor x = linear(concat_cols(x_t, fused), p.in_w, p.in_b);
    for (const CfmBlockParams& b : p.blocks) {
        x = add_rowvec(x, temb);
        Tensor r = conv1d_same3(gelu(conv1d_same3(x, b.cw1, b.cb1)), b.cw2, b.cb2);
        x = add(x, r);
        x = add(x, multi_head_attention(layer_norm_rows(x), b.attn, p.heads));
        x = film(x, h, b.film);
    }
    return linear(x, p.out_w, p.out_b);
}

Tensor cfm_loss(const std::vector<CfmBatchItem>& batch, const CfmParams& p, Rng rng,
                double p_uncond) {
    if (batch.empty()) throw data_error("cfm_loss: empty batch");
    Tensor acc;
    for (size_t i = 0; i < batch.size(); ++i) {
        const CfmBatchItem& item = batch[i];
        Rng t_rng = rng.split("t", i);
        Rng x0_rng = rng.split("x0", i);
        const double t = t_rng.uniform();
        Tensor x0 = Tensor::randn(item.x1.shape(), x0_rng);
        Tensor h = item.h;
        if (p_uncond > 0.0 && rng.split("cond-drop", i).uniform() < p_uncond)
            h = Tensor::zeros(item.h.shape());
        Tensor psi = ot_path(x0, item.x1, t, p.sigma_min);
        Tensor target = cfm_target(x0, item.x1, p.sigma_min);
        Tensor diff = sub(vector_field(psi, t, item.fused, h, p), target);
        Tensor mse = mean_all(mul(diff, diff));
        acc = acc.defined() ? add(acc, mse) : mse;
    }
    return scale(acc, 1.0 / static_cast<double>(batch.size()));
}

Tensor euler_sample(const Tensor& fused, const Tensor& h, const CfmParams& p,
                    const SamplerConfig& cfg, Rng rng) {
    if (cfg.steps < 1) throw config_error("euler_sample: steps must be at least 1");
    if (cfg.guidance_scale < 0) throw config_error("euler_sample: guidance scale must be non-negative");
    autograd::NoGradGuard eval;

    Rng nr = rng.split("x0");
    Tensor x = Tensor::randn({fused.dim(0), p.d_mel}, nr);
    const double dt = 1.0 / static_cast<double>(cfg.steps);
    Tensor h_zero;
    if (cfg.guidance_scale != 1.0) h_zero = Tensor::zeros(h.shape());
    for (int k = 0; k < cfg.steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        Tensor v = vector_field(x, t, fused, h, p);
        if (cfg.guidance_scale != 1.0) {
            Tensor vu = vector_field(x, t, fused, h_zero, p);
            v = add(vu, scale(sub(v, vu), cfg.guidance_scale));
        }
        x = add(x, scale(v, dt));
    }
    return x;
}

}  // namespace emoflow
