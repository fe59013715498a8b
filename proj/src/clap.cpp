#include "emoflow/clap.hpp"

#include <cmath>

#include "emoflow/error.hpp"
#include "emoflow/ops.hpp"

namespace emoflow {

namespace {

Tensor mlp_head(const Tensor& pooled, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                const Tensor& b2) {
    return l2_normalize_rows(linear(gelu(linear(pooled, w1, b1)), w2, b2));
}

Tensor init_weight(int in, int out, Rng& rng) {
    Tensor w = Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    w.set_requires_grad();
    return w;
}

Tensor init_bias(int out) {
    Tensor b = Tensor::zeros({out});
    b.set_requires_grad();
    return b;
}

}  // namespace

ClapModel ClapModel::init(int d_audio, int d_embed, int hidden, int text_vocab, int text_embed,
                          double temp_init, Rng rng) {
    if (d_audio < 1 || d_embed < 1 || hidden < 1 || text_vocab < 1 || text_embed < 1)
        throw config_error("clap: all dimensions must be positive");
    if (temp_init <= 0) throw config_error("clap: temperature init must be positive");
    ClapModel m;
    m.d_audio = d_audio;
    m.d_embed = d_embed;
    m.hidden = hidden;
    m.text_vocab = text_vocab;
    m.text_embed = text_embed;

    Rng ar = rng.split("audio");
    m.aw1 = init_weight(d_audio, hidden, ar);
    m.ab1 = init_bias(hidden);
    m.aw2 = init_weight(hidden, d_embed, ar);
    m.ab2 = init_bias(d_embed);

    Rng tr = rng.split("text");
    m.temb = init_weight(text_vocab, text_embed, tr);
    m.tw1 = init_weight(text_embed, hidden, tr);
    m.tb1 = init_bias(hidden);
    m.tw2 = init_weight(hidden, d_embed, tr);
    m.tb2 = init_bias(d_embed);

    m.log_eps_a = Tensor::scalar(std::log(temp_init));
    m.log_eps_a.set_requires_grad();
    m.log_eps_t = Tensor::scalar(std::log(temp_init));
    m.log_eps_t.set_requires_grad();
    return m;
}

std::vector<std::pair<std::string, Tensor>> ClapModel::named_params() const {
    return {{"aw1", aw1}, {"ab1", ab1}, {"aw2", aw2}, {"ab2", ab2},
            {"temb", temb}, {"tw1", tw1}, {"tb1", tb1}, {"tw2", tw2}, {"tb2", tb2},
            {"log_eps_a", log_eps_a}, {"log_eps_t", log_eps_t}};
}

std::vector<Tensor> ClapModel::params() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
}

Tensor ClapModel::encode_audio(const std::vector<Tensor>& audio) const {
    if (audio.empty()) throw data_error("encode_audio: empty batch");
    std::vector<Tensor> pooled;
    pooled.reserve(audio.size());
    for (const Tensor& a : audio) {
        if (a.ndim() != 2 || a.dim(1) != d_audio)
            throw shape_error("encode_audio: sequences must be {T, d_audio}");
        pooled.push_back(mean_over_rows(a));
    }
    return mlp_head(stack_rows(pooled), aw1, ab1, aw2, ab2);
}

Tensor ClapModel::encode_text(const std::vector<std::vector<int>>& prompts) const {
    if (prompts.empty()) throw data_error("encode_text: empty batch");
    std::vector<Tensor> pooled;
    pooled.reserve(prompts.size());
    for (const auto& tokens : prompts) {
        if (tokens.empty()) throw data_error("encode_text: empty prompt");
        pooled.push_back(mean_over_rows(gather_rows(temb, tokens)));
    }
    return mlp_head(stack_rows(pooled), tw1, tb1, tw2, tb2);
}

Container ClapModel::to_container() const {
    Container c;
    c.kind = "clap";
    c.meta["d_audio"] = std::to_string(d_audio);
    c.meta["d_embed"] = std::to_string(d_embed);
    c.meta["hidden"] = std::to_string(hidden);
    c.meta["text_vocab"] = std::to_string(text_vocab);
    c.meta["text_embed"] = std::to_string(text_embed);
    for (auto& [name, t] : named_params()) c.add(name, t);
    return c;
}

ClapModel ClapModel::from_container(const Container& c) {
    if (c.kind != "clap") throw data_error("clap: container kind is '" + c.kind + "', expected 'clap'");
    ClapModel m;
    m.d_audio = std::stoi(c.meta.at("d_audio"));
    m.d_embed = std::stoi(c.meta.at("d_embed"));
    m.hidden = std::stoi(c.meta.at("hidden"));
    m.text_vocab = std::stoi(c.meta.at("text_vocab"));
    m.text_embed = std::stoi(c.meta.at("text_embed"));
    auto grab = [&](Tensor& t, const char* name) {
        t = c.tensor(name);
        t.set_requires_grad();
    };
    grab(m.aw1, "aw1");
    grab(m.ab1, "ab1");
    grab(m.aw2, "aw2");
    grab(m.ab2, "ab2");
    grab(m.temb, "temb");
    grab(m.tw1, "tw1");
    grab(m.tb1, "tb1");
    grab(m.tw2, "tw2");
    grab(m.tb2, "tb2");
    grab(m.log_eps_a, "log_eps_a");
    grab(m.log_eps_t, "log_eps_t");
    return m;
}

SimilarityLogits similarity_logits(const Tensor& z_audio, const Tensor& z_text, const Tensor& eps_a,
                                   const Tensor& eps_t) {
    if (z_audio.ndim() != 2 || z_text.ndim() != 2 || z_audio.dim(1) != z_text.dim(1) ||
        z_audio.dim(0) != z_text.dim(0))
        throw shape_error("similarity_logits: embeddings must be {N, D} with matching shapes");
    SimilarityLogits s;
    s.s_audio = scale_by(matmul(z_audio, transpose(z_text)), eps_a);
    s.s_text = scale_by(matmul(z_text, transpose(z_audio)), eps_t);
    return s;
}

Tensor build_agreement_matrix(const std::vector<int>& labels) {
    const int n = static_cast<int>(labels.size());
    if (n < 1) throw data_error("build_agreement_matrix: empty labels");
    std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        int count = 0;
        for (int j = 0; j < n; ++j) count += labels[i] == labels[j];
        const double inv = 1.0 / count;  // diagonal guarantees count >= 1
        for (int j = 0; j < n; ++j)
            if (labels[i] == labels[j]) m[static_cast<size_t>(i) * n + j] = inv;
    }
    return Tensor({n, n}, std::move(m));
}

Tensor build_soft_labels(const Tensor& m_y, const Tensor& m_p, double alpha_e) {
    if (!same_shape(m_y.shape(), m_p.shape()))
        throw shape_error("build_soft_labels: agreement matrices must match");
    if (alpha_e < 0 || alpha_e > 1) throw config_error("build_soft_labels: alpha_e must lie in [0,1]");
    return add(scale(m_y, alpha_e), scale(m_p, 1.0 - alpha_e));
}

Tensor smooth_targets(const Tensor& m_s, double alpha) {
    if (m_s.ndim() != 2 || m_s.dim(0) != m_s.dim(1))
        throw shape_error("smooth_targets: expected a square matrix");
    if (alpha < 0 || alpha >= 1) throw config_error("smooth_targets: alpha must lie in [0,1)");
    const int n = m_s.dim(0);
    return add_const(scale(m_s, 1.0 - alpha), alpha / static_cast<double>(n));
}

namespace {
constexpr double kKlFloor = 1e-12;
}

Tensor symkl_loss(const SimilarityLogits& logits, const Tensor& m_s, double alpha) {
    Tensor s_a = softmax_rows(logits.s_audio);
    Tensor s_p = softmax_rows(logits.s_text);
    Tensor target = clamp_min(m_s, kKlFloor);          // zeros in m_s would blow up terms 1/3
    Tensor smoothed = smooth_targets(m_s, alpha);
    Tensor t1 = kl_div(s_a, target);
    Tensor t2 = kl_div(smoothed, clamp_min(s_a, kKlFloor));
    Tensor t3 = kl_div(s_p, target);
    Tensor t4 = kl_div(smoothed, clamp_min(s_p, kKlFloor));
    return scale(add(add(t1, t2), add(t3, t4)), 0.25);
}

Tensor kl_loss(const SimilarityLogits& logits, const Tensor& m_s) {
    Tensor s_a = softmax_rows(logits.s_audio);
    Tensor s_p = softmax_rows(logits.s_text);
    Tensor target = clamp_min(m_s, kKlFloor);
    return scale(add(kl_div(s_a, target), kl_div(s_p, target)), 0.5);
}

Tensor clap_loss(const ClapModel& model, const EmoBatch& batch, const ClapLossFlags& flags) {
    const int n = batch.size();
    if (n < 2) throw data_error("clap_loss: contrastive training needs a batch of at least 2");
    if (static_cast<int>(batch.emotion.size()) != n || static_cast<int>(batch.prompt.size()) != n ||
        static_cast<int>(batch.prompt_label.size()) != n)
        throw data_error("clap_loss: batch field lengths disagree");

    Tensor z_a = model.encode_audio(batch.audio);
    Tensor z_p = model.encode_text(batch.prompt);
    SimilarityLogits logits =
        similarity_logits(z_a, z_p, exp_op(model.log_eps_a), exp_op(model.log_eps_t));

    Tensor m_p = build_agreement_matrix(batch.prompt_label);
    // Dropping the categorical-emotion term means targets come from prompt
    // agreement alone.
    double alpha_e = flags.use_emo_label ? flags.alpha_e : 0.0;
    Tensor m_y = flags.use_emo_label ? build_agreement_matrix(batch.emotion) : m_p;
    Tensor m_s = build_soft_labels(m_y, m_p, alpha_e);

    return flags.symkl ? symkl_loss(logits, m_s, flags.alpha) : kl_loss(logits, m_s);
}

double clap_train_step(ClapModel& model, const EmoBatch& batch, Optimizer& optim,
                       const ClapLossFlags& flags) {
    optim.zero_grad();
    Tensor loss = clap_loss(model, batch, flags);
    loss.backward();
    optim.step();
    return loss.item();
}

Tensor embed_reference(const ClapModel& model, const Tensor& audio) {
    autograd::NoGradGuard eval;
    return row(model.encode_audio({audio}), 0);
}

Tensor embed_prompt(const ClapModel& model, const std::vector<int>& tokens) {
    autograd::NoGradGuard eval;
    return row(model.encode_text({tokens}), 0);
}

}  // namespace emoflow
