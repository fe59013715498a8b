#include "emoflow/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "emoflow/container.hpp"
#include "emoflow/error.hpp"

namespace emoflow {

namespace {

const std::vector<std::string> kEmotions = {"neutral", "happy",    "sad",    "angry",
                                            "fear",    "surprise", "disgust"};

// '@' marks the slot; wording is arbitrary but frozen (prompt text feeds the
// text encoder, the template id feeds the agreement matrix).
const std::vector<std::string> kTemplates = {
    // neutral
    "a @ voice with a calm even tone",
    "plain @ speech without strong feeling",
    "an even @ reading kept flat and steady",
    // happy
    "a @ voice bursting with joy",
    "cheerful @ speech full of delight",
    "a bright @ tone that sounds glad",
    // sad
    "a @ voice heavy with sorrow",
    "mournful @ speech close to tears",
    "a low @ tone that sounds gloomy",
    // angry
    "a @ voice boiling with rage",
    "furious @ speech through gritted teeth",
    "a harsh @ tone full of anger",
    // fear
    "a @ voice trembling with dread",
    "frightened @ speech on shaky breath",
    "a tense @ tone gripped by panic",
    // surprise
    "a @ voice jolted by astonishment",
    "startled @ speech caught off guard",
    "a sharp @ tone of sudden wonder",
    // disgust
    "a @ voice curdled with revulsion",
    "repelled @ speech twisted in distaste",
    "a sour @ tone dripping contempt",
};

const std::vector<std::string> kSlotWords = {"quiet", "loud",  "soft",   "deep",
                                             "thin",  "clear", "rough",  "gentle"};

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

// Orthonormalize `count` rows of length `dim` drawn from rng; keeps drawing
// replacements if a draw is near-degenerate (deterministic: the stream is).
std::vector<double> orthonormal_rows(Rng rng, int count, int dim,
                                     const std::function<void(double*, Rng&)>& draw) {
    if (count > dim) throw config_error("orthonormal_rows: more vectors than dimensions");
    std::vector<double> rows(static_cast<size_t>(count) * dim);
    for (int i = 0; i < count; ++i) {
        double* v = rows.data() + static_cast<size_t>(i) * dim;
        for (int attempt = 0;; ++attempt) {
            if (attempt > 64) throw contract_error("orthonormal_rows: degenerate draw stream");
            draw(v, rng);
            for (int j = 0; j < i; ++j) {
                const double* u = rows.data() + static_cast<size_t>(j) * dim;
                double dot = 0.0;
                for (int k = 0; k < dim; ++k) dot += v[k] * u[k];
                for (int k = 0; k < dim; ++k) v[k] -= dot * u[k];
            }
            double norm = 0.0;
            for (int k = 0; k < dim; ++k) norm += v[k] * v[k];
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (int k = 0; k < dim; ++k) v[k] /= norm;
                break;
            }
        }
    }
    return rows;
}

std::string fmt17(double d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

}  // namespace

const std::vector<std::string>& emotion_names() { return kEmotions; }

int emotion_id(const std::string& name) {
    for (size_t i = 0; i < kEmotions.size(); ++i)
        if (kEmotions[i] == name) return static_cast<int>(i);
    throw data_error("unknown emotion class '" + name + "'");
}

int EmotionSpec::prompt_token(const std::string& word) const {
    for (size_t i = 0; i < prompt_vocab.size(); ++i)
        if (prompt_vocab[i] == word) return static_cast<int>(i);
    throw data_error("word '" + word + "' is not in the prompt vocabulary");
}

EmotionSpec EmotionSpec::make(int d_content, int d_mel, double noise, uint64_t world_seed) {
    if (d_content < 3) throw config_error("emotion spec: d_content must be at least 3");
    EmotionSpec s;
    s.d_content = d_content;
    s.d_audio = d_content + 4;
    s.d_mel = d_mel;
    s.noise = noise;
    if (s.d_audio < kNumEmotions)
        throw config_error("emotion spec: d_audio must fit 7 orthonormal directions");
    if (d_mel < s.d_audio)
        throw config_error("emotion spec: d_mel must be at least d_content + 4");

    Rng root(world_seed);

    // Class axes live mostly in the 4 extra audio dims with mild leakage into
    // the content dims, then orthonormalized, so emotion is recoverable but
    // not trivially separated from content.
    const int da = s.d_audio;
    auto dir_draw = [da, d_content](double* v, Rng& r) {
        for (int k = 0; k < da; ++k) v[k] = (k < d_content ? 0.25 : 1.0) * r.normal();
    };
    s.class_directions =
        Tensor({kNumEmotions, da}, orthonormal_rows(root.split("class-dir"), kNumEmotions, da, dir_draw));

    // Zero-mean columns keep class-mean audio features from picking up a
    // content bias along other classes' directions.
    {
        Rng r = root.split("token-embed");
        std::vector<double> e(static_cast<size_t>(kContentVocab) * d_content);
        for (auto& v : e) v = r.normal();
        for (int c = 0; c < d_content; ++c) {
            double mean = 0.0;
            for (int t = 0; t < kContentVocab; ++t) mean += e[static_cast<size_t>(t) * d_content + c];
            mean /= kContentVocab;
            for (int t = 0; t < kContentVocab; ++t) e[static_cast<size_t>(t) * d_content + c] -= mean;
        }
        s.token_embed = Tensor({kContentVocab, d_content}, std::move(e));
    }

    {
        Rng r = root.split("oracle-a");
        std::vector<double> a(static_cast<size_t>(d_mel) * d_content);
        const double sc = 1.0 / std::sqrt(static_cast<double>(d_content));
        for (auto& v : a) v = sc * r.normal();
        s.oracle_a = Tensor({d_mel, d_content}, std::move(a));
    }

    // Orthonormal columns make B norm-preserving, so the 7 Mel-space emotion
    // axes B·direction stay orthonormal too.
    {
        auto raw_draw = [d_mel](double* v, Rng& r) {
            for (int k = 0; k < d_mel; ++k) v[k] = r.normal();
        };
        std::vector<double> cols =
            orthonormal_rows(root.split("oracle-b"), s.d_audio, d_mel, raw_draw);
        std::vector<double> b(static_cast<size_t>(d_mel) * s.d_audio);
        for (int i = 0; i < d_mel; ++i)
            for (int j = 0; j < s.d_audio; ++j)
                b[static_cast<size_t>(i) * s.d_audio + j] = cols[static_cast<size_t>(j) * d_mel + i];
        s.oracle_b = Tensor({d_mel, s.d_audio}, std::move(b));
    }

    s.templates = kTemplates;
    s.slot_words = kSlotWords;
    for (const std::string& t : s.templates)
        for (const std::string& w : split_words(t)) {
            if (w == "@") continue;
            if (std::find(s.prompt_vocab.begin(), s.prompt_vocab.end(), w) == s.prompt_vocab.end())
                s.prompt_vocab.push_back(w);
        }
    for (const std::string& w : s.slot_words)
        if (std::find(s.prompt_vocab.begin(), s.prompt_vocab.end(), w) == s.prompt_vocab.end())
            s.prompt_vocab.push_back(w);
    return s;
}

std::vector<double> EmotionSpec::mel_emotion_axis(int emotion) const {
    if (emotion < 0 || emotion >= kNumEmotions) throw data_error("mel_emotion_axis: bad emotion id");
    std::vector<double> axis(d_mel, 0.0);
    const auto& b = oracle_b.values();
    const auto& dir = class_directions.values();
    for (int i = 0; i < d_mel; ++i)
        for (int j = 0; j < d_audio; ++j)
            axis[i] += b[static_cast<size_t>(i) * d_audio + j] * dir[static_cast<size_t>(emotion) * d_audio + j];
    double n = 0.0;
    for (double v : axis) n += v * v;
    n = std::sqrt(n);
    for (double& v : axis) v /= n;
    return axis;
}

Tensor EmotionSpec::synth_target(const Tensor& content, int emotion, double intensity, Rng noise_rng,
                                 bool noise_free) const {
    if (emotion < 0 || emotion >= kNumEmotions) throw data_error("synth_target: bad emotion id");
    if (intensity < 0.0 || intensity > 2.0) throw config_error("synth_target: intensity must lie in [0,2]");
    if (content.ndim() != 2 || content.dim(1) != d_content)
        throw shape_error("synth_target: content must be {T, d_content}");

    const int t_len = content.dim(0);
    const auto& a = oracle_a.values();
    const auto& b = oracle_b.values();
    const auto& dirs = class_directions.values();
    const auto& cv = content.values();

    std::vector<double> emo(d_mel, 0.0);
    for (int i = 0; i < d_mel; ++i) {
        double acc = 0.0;
        for (int j = 0; j < d_audio; ++j)
            acc += b[static_cast<size_t>(i) * d_audio + j] * dirs[static_cast<size_t>(emotion) * d_audio + j];
        emo[i] = intensity * acc;
    }

    std::vector<double> mel(static_cast<size_t>(t_len) * d_mel);
    for (int t = 0; t < t_len; ++t) {
        const double* ct = cv.data() + static_cast<size_t>(t) * d_content;
        double* mt = mel.data() + static_cast<size_t>(t) * d_mel;
        for (int i = 0; i < d_mel; ++i) {
            double acc = emo[i];
            const double* ai = a.data() + static_cast<size_t>(i) * d_content;
            for (int j = 0; j < d_content; ++j) acc += ai[j] * ct[j];
            mt[i] = acc;
        }
    }
    if (!noise_free)
        for (auto& v : mel) v += noise * noise_rng.normal();
    return Tensor({t_len, d_mel}, std::move(mel));
}

RenderedPrompt render_prompt(const EmotionSpec& spec, int emotion, int template_slot, Rng rng) {
    if (emotion < 0 || emotion >= kNumEmotions) throw data_error("render_prompt: bad emotion id");
    if (template_slot < 0 || template_slot >= kTemplatesPerClass)
        throw data_error("render_prompt: bad template slot");
    RenderedPrompt out;
    out.template_id = emotion * kTemplatesPerClass + template_slot;
    const std::string& tpl = spec.templates[static_cast<size_t>(out.template_id)];
    const std::string& slot = spec.slot_words[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(spec.slot_words.size())))];

    std::string text;
    for (const std::string& w : split_words(tpl)) {
        const std::string& word = (w == "@") ? slot : w;
        if (!text.empty()) text += ' ';
        text += word;
        out.tokens.push_back(spec.prompt_token(word));
    }
    if (out.tokens.empty() || out.tokens.size() > kMaxPromptTokens)
        throw contract_error("render_prompt: token count out of bounds");
    out.text = std::move(text);
    return out;
}

static Utterance make_utterance(const EmotionSpec& spec, int id, int emotion, uint64_t seed, int t_min,
                                int t_max) {
    Rng r = Rng(seed).split("utt", static_cast<uint64_t>(id));
    Utterance u;
    u.id = id;
    u.emotion = emotion;

    const int t_len = t_min + r.split("len").uniform_int(t_max - t_min + 1);
    {
        Rng tr = r.split("tokens");
        int cur = tr.uniform_int(kContentVocab);
        for (int t = 0; t < t_len; ++t) {
            u.content_tokens.push_back(cur);
            cur = (cur + 1 + tr.uniform_int(3)) % kContentVocab;
        }
    }

    u.intensity_gt = r.split("intensity").uniform(0.5, 1.0);

    const auto& embed = spec.token_embed.values();
    const int dc = spec.d_content, da = spec.d_audio;
    std::vector<double> content(static_cast<size_t>(t_len) * dc);
    {
        Rng nr = r.split("content-noise");
        for (int t = 0; t < t_len; ++t) {
            const double* e = embed.data() + static_cast<size_t>(u.content_tokens[t]) * dc;
            double* c = content.data() + static_cast<size_t>(t) * dc;
            for (int j = 0; j < dc; ++j) c[j] = e[j] + spec.noise * nr.normal();
        }
    }
    u.content_features = Tensor({t_len, dc}, content);

    {
        Rng nr = r.split("audio-noise");
        const auto& dirs = spec.class_directions.values();
        const double* dir = dirs.data() + static_cast<size_t>(emotion) * da;
        std::vector<double> audio(static_cast<size_t>(t_len) * da);
        for (int t = 0; t < t_len; ++t) {
            const double* c = content.data() + static_cast<size_t>(t) * dc;
            double* a = audio.data() + static_cast<size_t>(t) * da;
            for (int j = 0; j < da; ++j)
                a[j] = (j < dc ? c[j] : 0.0) + u.intensity_gt * dir[j] + spec.noise * nr.normal();
        }
        u.audio_features = Tensor({t_len, da}, std::move(audio));
    }

    const int slot = r.split("template").uniform_int(kTemplatesPerClass);
    RenderedPrompt p = render_prompt(spec, emotion, slot, r.split("prompt"));
    u.prompt_text = std::move(p.text);
    u.prompt_template = p.template_id;
    u.prompt_tokens = std::move(p.tokens);

    u.mel_target = spec.synth_target(u.content_features, emotion, u.intensity_gt, r.split("mel-noise"));
    return u;
}

Corpus generate_corpus(const EmotionSpec& spec, int n, uint64_t seed) {
    if (n < kNumEmotions) throw data_error("generate_corpus: need at least 7 utterances");
    Corpus c;
    c.spec = spec;
    c.seed = seed;
    c.items.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) c.items.push_back(make_utterance(spec, i, i % kNumEmotions, seed, 10, 20));
    return c;
}

Corpus generate_corpus(const RunConfig& cfg) {
    EmotionSpec spec = EmotionSpec::make(static_cast<int>(cfg.corpus_d_content),
                                         static_cast<int>(cfg.corpus_d_mel), cfg.corpus_noise,
                                         static_cast<uint64_t>(cfg.corpus_world_seed));
    Corpus c;
    c.spec = spec;
    c.seed = static_cast<uint64_t>(cfg.seed);
    if (cfg.corpus_n < kNumEmotions) throw data_error("generate_corpus: need at least 7 utterances");
    c.items.reserve(static_cast<size_t>(cfg.corpus_n));
    for (int i = 0; i < cfg.corpus_n; ++i)
        c.items.push_back(make_utterance(spec, i, i % kNumEmotions, c.seed,
                                         static_cast<int>(cfg.corpus_t_min),
                                         static_cast<int>(cfg.corpus_t_max)));
    return c;
}

CorpusSplit split_corpus(const Corpus& corpus, double r_train, double r_val, double r_test,
                         uint64_t seed) {
    if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
        throw config_error("split_corpus: ratios must sum to 1");
    if (r_train <= 0 || r_val <= 0 || r_test <= 0)
        throw config_error("split_corpus: ratios must be positive");

    CorpusSplit out;
    for (int cls = 0; cls < kNumEmotions; ++cls) {
        std::vector<int> ids;
        for (const Utterance& u : corpus.items)
            if (u.emotion == cls) ids.push_back(u.id);
        if (ids.size() < 3) throw data_error("split_corpus: class too small to cover three splits");

        Rng r = Rng(seed).split("split-class", static_cast<uint64_t>(cls));
        for (size_t i = ids.size(); i > 1; --i)
            std::swap(ids[i - 1], ids[static_cast<size_t>(r.uniform_int(static_cast<int>(i)))]);

        size_t n = ids.size();
        size_t n_tr = static_cast<size_t>(std::floor(r_train * static_cast<double>(n)));
        size_t n_va = static_cast<size_t>(std::floor(r_val * static_cast<double>(n)));
        if (n_tr == 0) n_tr = 1;
        if (n_va == 0) n_va = 1;
        while (n_tr + n_va + 1 > n) (n_tr > 1 ? n_tr : n_va) -= 1;

        for (size_t i = 0; i < n; ++i) {
            int id = ids[i];
            if (i < n_tr)
                out.train.push_back(id);
            else if (i < n_tr + n_va)
                out.val.push_back(id);
            else
                out.test.push_back(id);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& records_path, const std::string& blob_path) {
    std::ofstream rec(records_path, std::ios::binary | std::ios::trunc);
    if (!rec) throw data_error("save_corpus: cannot open '" + records_path + "'");
    for (const Utterance& u : corpus.items) {
        rec << "id=" << u.id << " emotion=" << kEmotions[static_cast<size_t>(u.emotion)]
            << " intensity=" << fmt17(u.intensity_gt) << " template=" << u.prompt_template << " tokens=";
        for (size_t i = 0; i < u.content_tokens.size(); ++i) rec << (i ? "," : "") << u.content_tokens[i];
        rec << " prompt_tokens=";
        for (size_t i = 0; i < u.prompt_tokens.size(); ++i) rec << (i ? "," : "") << u.prompt_tokens[i];
        rec << " prompt=" << u.prompt_text << '\n';
    }
    if (!rec) throw data_error("save_corpus: write failed for '" + records_path + "'");

    Container blob;
    blob.kind = "corpus";
    blob.meta["n"] = std::to_string(corpus.items.size());
    blob.meta["seed"] = std::to_string(corpus.seed);
    blob.meta["d_content"] = std::to_string(corpus.spec.d_content);
    blob.meta["d_audio"] = std::to_string(corpus.spec.d_audio);
    blob.meta["d_mel"] = std::to_string(corpus.spec.d_mel);
    for (const Utterance& u : corpus.items) {
        const std::string p = "u" + std::to_string(u.id);
        blob.add(p + ".content", u.content_features);
        blob.add(p + ".audio", u.audio_features);
        blob.add(p + ".mel", u.mel_target);
    }
    blob.save(blob_path);
}

}  // namespace emoflow
