#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emoflow/config.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/tensor.hpp"

namespace emoflow {

inline constexpr int kNumEmotions = 7;
inline constexpr int kContentVocab = 32;
inline constexpr int kTemplatesPerClass = 3;
inline constexpr int kMaxPromptTokens = 24;

const std::vector<std::string>& emotion_names();  // neutral..disgust, id order
int emotion_id(const std::string& name);          // data_error if unknown

// Ground truth of the synthetic world: emotion axes, prompt templates, token
// embeddings, and the frozen oracle matrices mapping (content, emotion,
// intensity) to the Mel surrogate. Everything derives from world_seed, which
// is independent of the per-corpus sampling seed so different corpora share
// one oracle.
struct EmotionSpec {
    int d_content = 0;
    int d_audio = 0;  // d_content + 4 extra emotion dims
    int d_mel = 0;
    double noise = 0.01;

    Tensor class_directions;  // {7, d_audio}, orthonormal rows
    Tensor token_embed;       // {kContentVocab, d_content}, zero-mean columns
    Tensor oracle_a;          // {d_mel, d_content}
    Tensor oracle_b;          // {d_mel, d_audio}, orthonormal columns

    // prompt machinery: template strings use '@' as the slot position
    std::vector<std::string> templates;      // 7*kTemplatesPerClass, class-major
    std::vector<std::string> slot_words;     // shared slot fillers
    std::vector<std::string> prompt_vocab;   // token id = index
    int prompt_token(const std::string& word) const;  // data_error if unknown

    static EmotionSpec make(int d_content, int d_mel, double noise, uint64_t world_seed);

    // mel[t] = A·content[t] + intensity·(B·direction[emotion]) + eps, with
    // eps ~ N(0, noise^2) from `noise_rng` (skipped entirely when noise_free).
    Tensor synth_target(const Tensor& content, int emotion_id, double intensity, Rng noise_rng,
                        bool noise_free = false) const;
    // The per-frame emotion term alone: intensity·(B·direction[emotion]).
    std::vector<double> mel_emotion_axis(int emotion_id) const;  // unit-norm B·direction
};

struct Utterance {
    int id = 0;
    std::vector<int> content_tokens;
    Tensor content_features;  // {T, d_content}
    Tensor audio_features;    // {T, d_audio}
    int emotion = 0;
    double intensity_gt = 0.0;
    std::string prompt_text;
    int prompt_template = 0;  // global template id = emotion*kTemplatesPerClass + slot
    std::vector<int> prompt_tokens;
    Tensor mel_target;  // {T, d_mel}
};

struct Corpus {
    EmotionSpec spec;
    uint64_t seed = 0;
    std::vector<Utterance> items;  // id == index
};

// Balanced (±1) deterministic corpus; contents via a Markov walk over the
// 32-token alphabet, audio = padded content + intensity·direction + noise.
Corpus generate_corpus(const EmotionSpec& spec, int n, uint64_t seed);
Corpus generate_corpus(const RunConfig& cfg);  // uses cfg corpus.* and seed

// (prompt_text, global template id, token ids); slot word chosen by rng.
struct RenderedPrompt {
    std::string text;
    int template_id = 0;
    std::vector<int> tokens;
};
RenderedPrompt render_prompt(const EmotionSpec& spec, int emotion_id, int template_slot, Rng rng);

struct CorpusSplit {
    std::vector<int> train, val, test;
};
// Stratified by class, deterministic; every class appears in every split.
CorpusSplit split_corpus(const Corpus& corpus, double r_train, double r_val, double r_test,
                         uint64_t seed);

// Text records + feature blobs in the container format; byte-stable.
void save_corpus(const Corpus& corpus, const std::string& records_path, const std::string& blob_path);

}  // namespace emoflow
