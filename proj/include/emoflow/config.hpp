#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emoflow {

// Every tunable of the pipeline, flat key=value text on disk. Defaults are
// the desk-scale working point; see README for the meaning of each key.
struct RunConfig {
    int64_t seed = 1;

    int64_t corpus_n = 700;
    int64_t corpus_t_min = 10;
    int64_t corpus_t_max = 20;
    int64_t corpus_d_content = 8;
    int64_t corpus_d_mel = 16;
    double corpus_noise = 0.01;
    int64_t corpus_world_seed = 7777;  // fixes oracle matrices/directions across corpus seeds

    double split_train = 0.8;
    double split_val = 0.1;
    double split_test = 0.1;

    int64_t clap_dim = 32;
    int64_t clap_hidden = 64;
    int64_t clap_text_embed = 16;
    double clap_lr = 1e-5;
    int64_t clap_batch = 16;
    int64_t clap_epochs = 240;
    double clap_alpha_e = 0.2;
    double clap_alpha = 1e-8;
    double clap_temp_init = 2.3;

    int64_t fusion_blocks = 4;
    int64_t fusion_heads = 4;
    double fusion_dropout = 0.5;

    double vc_lr = 2e-4;
    double vc_weight_decay = 0.01;
    int64_t vc_batch = 8;
    int64_t vc_iterations = 30000;
    double vc_sigma_min = 1e-4;
    double vc_p_uncond = 0.0;

    int64_t cfm_blocks = 6;
    int64_t cfm_heads = 4;
    int64_t cfm_width = 32;
    int64_t cfm_time_dim = 32;

    int64_t sampler_steps = 25;
    double sampler_guidance = 1.0;

    int64_t eval_conversions = 50;
    std::vector<double> eval_lambdas = {0.0, 0.5, 1.0, 1.5, 2.0};

    bool use_emo_label = true;
    std::string loss_variant = "symkl";  // symkl | kl
    bool use_aig = true;

    // Parse `key = value` lines ('#' comments); unknown keys and malformed
    // values raise config_error. Later assignments win.
    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    void set(const std::string& key, const std::string& value);

    // Canonical text listing every key; identical configs serialize
    // identically, so the FNV-1a hash of this text identifies a run setup.
    std::string to_text() const;
    std::string hash() const;

    void validate() const;  // config_error on out-of-range combinations
};

}  // namespace emoflow
