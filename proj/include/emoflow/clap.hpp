#pragma once

#include <string>
#include <vector>

#include "emoflow/container.hpp"
#include "emoflow/optim.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/tensor.hpp"

namespace emoflow {

// One contrastive batch: parallel lists of audio feature sequences,
// categorical emotion ids, prompt token sequences, and prompt template ids.
struct EmoBatch {
    std::vector<Tensor> audio;               // each {T_i, d_audio}
    std::vector<int> emotion;                // in [0, 7)
    std::vector<std::vector<int>> prompt;    // token ids
    std::vector<int> prompt_label;           // template ids
    int size() const { return static_cast<int>(audio.size()); }
};

// Audio/text encoders (mean-pool + 2-layer GELU MLP + L2 normalization) and
// the two learnable temperatures, stored as logs so they stay positive under
// any optimizer trajectory.
struct ClapModel {
    int d_audio = 0, d_embed = 0, hidden = 0, text_vocab = 0, text_embed = 0;
    Tensor aw1, ab1, aw2, ab2;            // audio MLP
    Tensor temb, tw1, tb1, tw2, tb2;      // text table + MLP
    Tensor log_eps_a, log_eps_t;          // temperatures, exp() > 0

    static ClapModel init(int d_audio, int d_embed, int hidden, int text_vocab, int text_embed,
                          double temp_init, Rng rng);

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> params() const;

    Tensor encode_audio(const std::vector<Tensor>& audio) const;          // {N, d_embed}, unit rows
    Tensor encode_text(const std::vector<std::vector<int>>& prompts) const;  // {N, d_embed}, unit rows

    Container to_container() const;
    static ClapModel from_container(const Container& c);
};

// s_audio = eps_a·(Z_a·Z_pᵀ), s_text = eps_t·(Z_p·Z_aᵀ).
struct SimilarityLogits {
    Tensor s_audio, s_text;
};
SimilarityLogits similarity_logits(const Tensor& z_audio, const Tensor& z_text, const Tensor& eps_a,
                                   const Tensor& eps_t);

// agreement(i,j) = [labels_i == labels_j], rows normalized to sum 1.
Tensor build_agreement_matrix(const std::vector<int>& labels);
// alpha_e·m_y + (1−alpha_e)·m_p, row-stochastic by convexity.
Tensor build_soft_labels(const Tensor& m_y, const Tensor& m_p, double alpha_e);
// (1−alpha)·m_s + alpha/N: strictly positive row-stochastic target.
Tensor smooth_targets(const Tensor& m_s, double alpha);

// Four-term symmetric KL between row-softmaxed logits and the soft targets:
// ¼·[KL(S_a‖m_s) + KL(m̃_s‖S_a) + KL(S_p‖m_s) + KL(m̃_s‖S_p)], with every
// denominator floored at 1e-12 (m_s carries exact zeros off-class).
Tensor symkl_loss(const SimilarityLogits& logits, const Tensor& m_s, double alpha);
// Ablation variant: mean of the two forward terms KL(S‖m_s) only.
Tensor kl_loss(const SimilarityLogits& logits, const Tensor& m_s);

struct ClapLossFlags {
    double alpha_e = 0.2;
    double alpha = 1e-8;
    bool use_emo_label = true;   // false: targets built from prompt labels alone
    bool symkl = true;           // false: the two forward KL terms
};
Tensor clap_loss(const ClapModel& model, const EmoBatch& batch, const ClapLossFlags& flags);

// Forward + backward + optimizer step; returns the pre-step loss.
double clap_train_step(ClapModel& model, const EmoBatch& batch, Optimizer& optim,
                       const ClapLossFlags& flags);

// Evaluation-mode emotion embedding of one input (unit norm, no tracking).
Tensor embed_reference(const ClapModel& model, const Tensor& audio);
Tensor embed_prompt(const ClapModel& model, const std::vector<int>& tokens);

}  // namespace emoflow
