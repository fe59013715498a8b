#include "emoflow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/ops.hpp"

namespace emoflow {

namespace {

std::string fmt(double d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

void shuffle_ids(std::vector<int>& ids, Rng rng) {
    for (int i = static_cast<int>(ids.size()) - 1; i > 0; --i)
        std::swap(ids[i], ids[rng.uniform_int(i + 1)]);
}

const std::string& meta_at(const Container& c, const std::string& key) {
    auto it = c.meta.find(key);
    if (it == c.meta.end()) throw data_error("checkpoint: missing metadata key '" + key + "'");
    return it->second;
}

const Utterance& utterance_at(const Corpus& corpus, int id, const char* what) {
    if (id < 0 || id >= static_cast<int>(corpus.items.size()))
        throw data_error(std::string("convert: ") + what + " id " + std::to_string(id) +
                         " is outside the corpus");
    return corpus.items[id];
}

// The conditioning vector handed to the decoder: the same gated embedding the
// fusion encoder consumes, so one knob moves both conditioning paths. Without
// the gate the raw embedding passes through and lambda has no effect.
Tensor conditioned_h(const VcModel& model, const Tensor& h, double lambda) {
    if (!model.use_aig) {
        if (lambda < 0.0 || lambda > 2.0)
            throw config_error("convert: intensity must lie in [0,2]");
        return h;
    }
    return adaptive_intensity_gate(h, model.fuenc.log_gate, lambda);
}

std::vector<double> time_mean(const Tensor& x) {
    const int t = x.dim(0), d = x.dim(1);
    std::vector<double> out(d, 0.0);
    const std::vector<double>& v = x.values();
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) out[j] += v[static_cast<size_t>(i) * d + j];
    for (double& o : out) o /= t;
    return out;
}

EmoBatch gather_batch(const Corpus& corpus, const std::vector<int>& order, size_t b0, size_t b1) {
    EmoBatch batch;
    for (size_t j = b0; j < b1; ++j) {
        const Utterance& u = corpus.items[order[j]];
        batch.audio.push_back(u.audio_features);
        batch.emotion.push_back(u.emotion);
        batch.prompt.push_back(u.prompt_tokens);
        batch.prompt_label.push_back(u.prompt_template);
    }
    return batch;
}

double clap_val_retrieval(const ClapModel& model, const Corpus& corpus, const CorpusSplit& split) {
    ReferenceStore store = build_reference_store(corpus, split.val, model);
    int hits = 0;
    for (int id : split.val) {
        const Utterance& u = corpus.items[id];
        RetrievalHit top = retrieve(store, embed_prompt(model, u.prompt_tokens), 1).front();
        if (top.emotion == u.emotion) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.val.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// CLAP training
// ---------------------------------------------------------------------------

ClapTrainResult train_clap(const RunConfig& cfg, const Corpus& corpus, const CorpusSplit& split) {
    if (split.train.empty() || split.val.empty())
        throw data_error("train_clap: empty train or val split");
    const EmotionSpec& spec = corpus.spec;
    Rng root(static_cast<uint64_t>(cfg.seed));
    Rng init_rng = root.split("clap-init");
    ClapModel model =
        ClapModel::init(spec.d_audio, static_cast<int>(cfg.clap_dim), static_cast<int>(cfg.clap_hidden),
                        static_cast<int>(spec.prompt_vocab.size()),
                        static_cast<int>(cfg.clap_text_embed), cfg.clap_temp_init, init_rng);
    Optimizer optim(model.params(), {.lr = cfg.clap_lr});
    ClapLossFlags flags;
    flags.alpha_e = cfg.clap_alpha_e;
    flags.alpha = cfg.clap_alpha;
    flags.use_emo_label = cfg.use_emo_label;
    flags.symkl = cfg.loss_variant == "symkl";

    ClapTrainResult out;
    for (int64_t e = 0; e < cfg.clap_epochs; ++e) {
        std::vector<int> order = split.train;
        shuffle_ids(order, root.split("clap-epoch", static_cast<uint64_t>(e)));
        double loss_sum = 0.0;
        int64_t batches = 0;
        for (size_t b0 = 0; b0 + 1 < order.size(); b0 += static_cast<size_t>(cfg.clap_batch)) {
            size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.clap_batch));
            if (b1 - b0 < 2) break;  // contrastive loss needs at least two items
            EmoBatch batch = gather_batch(corpus, order, b0, b1);
            loss_sum += clap_train_step(model, batch, optim, flags);
            ++batches;
            ++out.steps;
        }
        out.history.push_back({e, loss_sum / static_cast<double>(batches),
                               clap_val_retrieval(model, corpus, split)});
    }
    out.model = std::move(model);
    return out;
}

void save_clap_checkpoint(const ClapModel& model, const RunConfig& cfg, int64_t steps,
                          const std::string& path) {
    Container c = model.to_container();
    c.meta["steps"] = std::to_string(steps);
    c.meta["config_hash"] = cfg.hash();
    c.meta["use_emo_label"] = cfg.use_emo_label ? "true" : "false";
    c.meta["loss"] = cfg.loss_variant;
    c.save(path);
}

ClapModel load_clap_checkpoint(const std::string& path) {
    return ClapModel::from_container(Container::load(path));
}

// ---------------------------------------------------------------------------
// VC model
// ---------------------------------------------------------------------------

std::vector<Tensor> VcModel::params() const {
    std::vector<Tensor> out = fuenc.params();
    std::vector<Tensor> tail = cfm.params();
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

VcModel init_vc_model(const RunConfig& cfg) {
    Rng root(static_cast<uint64_t>(cfg.seed));
    VcModel m;
    m.use_aig = cfg.use_aig;
    m.fuenc = FuEncoderParams::init(static_cast<int>(cfg.corpus_d_content),
                                    static_cast<int>(cfg.clap_dim),
                                    static_cast<int>(cfg.fusion_blocks),
                                    static_cast<int>(cfg.fusion_heads), cfg.fusion_dropout,
                                    root.split("fuenc-init"));
    m.cfm = CfmParams::init(static_cast<int>(cfg.corpus_d_mel), static_cast<int>(cfg.clap_dim),
                            static_cast<int>(cfg.clap_dim), static_cast<int>(cfg.cfm_width),
                            static_cast<int>(cfg.cfm_heads), static_cast<int>(cfg.cfm_time_dim),
                            static_cast<int>(cfg.cfm_blocks), cfg.vc_sigma_min,
                            root.split("cfm-init"));
    return m;
}

namespace {

// Configuration fingerprint bound into VC checkpoints. The training horizon
// is normalized out so a checkpoint can resume under a config that only
// extends vc.iterations; every other knob (seed, batch, dims, rates) still
// has to match for the absolute-iteration replay to be meaningful.
std::string schedule_hash(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.vc_iterations = 0;
    return c.hash();
}

void save_vc_container(const VcModel& model, int64_t iteration,
                       const std::vector<std::vector<double>>& m,
                       const std::vector<std::vector<double>>& v, const RunConfig& cfg,
                       const std::string& path) {
    Container c;
    c.kind = "vc";
    c.meta["iteration"] = std::to_string(iteration);
    c.meta["config_hash"] = schedule_hash(cfg);
    c.meta["use_aig"] = model.use_aig ? "true" : "false";
    model.fuenc.write_to(c, "fuenc.");
    model.cfm.write_to(c, "cfm.");
    for (size_t i = 0; i < m.size(); ++i) {
        c.add("opt.m." + std::to_string(i), Shape{static_cast<int>(m[i].size())}, m[i]);
        c.add("opt.v." + std::to_string(i), Shape{static_cast<int>(v[i].size())}, v[i]);
    }
    c.save(path);
}

}  // namespace

void save_vc_checkpoint(const VcModel& model, const Optimizer& optim, const RunConfig& cfg,
                        const std::string& path) {
    std::vector<std::vector<double>> m, v;
    for (size_t i = 0; i < optim.param_count(); ++i) {
        m.push_back(optim.first_moment(i));
        v.push_back(optim.second_moment(i));
    }
    save_vc_container(model, optim.step_count(), m, v, cfg, path);
}

void save_vc_checkpoint(const VcTrainResult& result, const RunConfig& cfg, const std::string& path) {
    save_vc_container(result.model, result.opt_steps, result.opt_m, result.opt_v, cfg, path);
}

VcCheckpoint load_vc_checkpoint(const std::string& path) {
    Container c = Container::load(path);
    if (c.kind != "vc") throw data_error("vc checkpoint: container kind is '" + c.kind + "'");
    VcCheckpoint ck;
    ck.model.fuenc = FuEncoderParams::read_from(c, "fuenc.");
    ck.model.cfm = CfmParams::read_from(c, "cfm.");
    ck.model.use_aig = meta_at(c, "use_aig") == "true";
    ck.iteration = std::stoll(meta_at(c, "iteration"));
    auto hash_it = c.meta.find("config_hash");
    if (hash_it != c.meta.end()) ck.config_hash = hash_it->second;
    for (size_t i = 0;; ++i) {
        std::string mn = "opt.m." + std::to_string(i);
        if (!c.has(mn)) break;
        ck.m.push_back(c.data(mn));
        ck.v.push_back(c.data("opt.v." + std::to_string(i)));
    }
    return ck;
}

VcTrainResult train_vc(const RunConfig& cfg, const Corpus& corpus, const CorpusSplit& split,
                       const ClapModel& clap, const std::string& resume_path) {
    if (split.train.empty()) throw data_error("train_vc: empty train split");
    Rng root(static_cast<uint64_t>(cfg.seed));

    VcModel model;
    int64_t start_iter = 0;
    std::vector<std::vector<double>> m0, v0;
    if (resume_path.empty()) {
        model = init_vc_model(cfg);
    } else {
        VcCheckpoint ck = load_vc_checkpoint(resume_path);
        if (!ck.config_hash.empty() && ck.config_hash != schedule_hash(cfg))
            throw config_error("train_vc: checkpoint was produced under a different configuration");
        model = std::move(ck.model);
        start_iter = ck.iteration;
        m0 = std::move(ck.m);
        v0 = std::move(ck.v);
        if (start_iter >= cfg.vc_iterations)
            throw config_error("train_vc: checkpoint already covers all configured iterations");
    }

    Optimizer optim(model.params(), {.lr = cfg.vc_lr,
                                     .weight_decay = cfg.vc_weight_decay,
                                     .variant = OptVariant::adamw});
    if (!resume_path.empty()) {
        if (m0.size() != optim.param_count())
            throw data_error("train_vc: checkpoint optimizer state does not match the model");
        optim.load_state(start_iter, std::move(m0), std::move(v0));
    }

    // Frozen conditioning embeddings for every training utterance.
    std::map<int, Tensor> embed;
    for (int id : split.train)
        embed.emplace(id, embed_reference(clap, corpus.items[id].audio_features));

    VcTrainResult out;
    const int ntrain = static_cast<int>(split.train.size());
    for (int64_t it = start_iter; it < cfg.vc_iterations; ++it) {
        Rng pick = root.split("vc-batch", static_cast<uint64_t>(it));
        Rng drop_root = root.split("vc-drop", static_cast<uint64_t>(it));
        std::vector<CfmBatchItem> batch;
        for (int64_t b = 0; b < cfg.vc_batch; ++b) {
            const Utterance& u = corpus.items[split.train[pick.uniform_int(ntrain)]];
            const Tensor& h = embed.at(u.id);
            Tensor fused = fuencoder_forward(u.content_features, h, 1.0, model.fuenc, true,
                                             drop_root.split("item", static_cast<uint64_t>(b)),
                                             model.use_aig);
            batch.push_back({u.mel_target, fused, conditioned_h(model, h, 1.0)});
        }
        Tensor loss = cfm_loss(batch, model.cfm, root.split("vc-cfm", static_cast<uint64_t>(it)),
                               cfg.vc_p_uncond);
        double lval = loss.item();
        optim.zero_grad();
        loss.backward();
        optim.step();
        if (it % 50 == 0 || it + 1 == cfg.vc_iterations) out.history.push_back({it, lval});
    }
    out.model = std::move(model);
    out.iterations_done = cfg.vc_iterations;
    out.opt_steps = optim.step_count();
    for (size_t i = 0; i < optim.param_count(); ++i) {
        out.opt_m.push_back(optim.first_moment(i));
        out.opt_v.push_back(optim.second_moment(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference store and retrieval
// ---------------------------------------------------------------------------

ReferenceStore build_reference_store(const Corpus& corpus, const std::vector<int>& utterance_ids,
                                     const ClapModel& clap) {
    if (utterance_ids.empty()) throw data_error("reference store: no utterances given");
    std::vector<int> ids = utterance_ids;
    std::sort(ids.begin(), ids.end());
    ReferenceStore s;
    std::vector<double> flat;
    flat.reserve(ids.size() * static_cast<size_t>(clap.d_embed));
    for (int id : ids) {
        const Utterance& u = utterance_at(corpus, id, "store utterance");
        Tensor e = embed_reference(clap, u.audio_features);
        flat.insert(flat.end(), e.values().begin(), e.values().end());
        s.ids.push_back(id);
        s.emotions.push_back(u.emotion);
    }
    s.embeddings = Tensor({static_cast<int>(ids.size()), clap.d_embed}, std::move(flat));
    return s;
}

void save_store(const ReferenceStore& store, const std::string& path) {
    Container c;
    c.kind = "store";
    c.meta["count"] = std::to_string(store.size());
    std::vector<double> ids(store.ids.begin(), store.ids.end());
    std::vector<double> emo(store.emotions.begin(), store.emotions.end());
    c.add("ids", Shape{store.size()}, ids);
    c.add("emotions", Shape{store.size()}, emo);
    c.add("embeddings", store.embeddings);
    c.save(path);
}

ReferenceStore load_store(const std::string& path) {
    Container c = Container::load(path);
    if (c.kind != "store") throw data_error("reference store: container kind is '" + c.kind + "'");
    ReferenceStore s;
    for (double d : c.data("ids")) s.ids.push_back(static_cast<int>(d));
    for (double d : c.data("emotions")) s.emotions.push_back(static_cast<int>(d));
    s.embeddings = c.tensor("embeddings");
    if (s.embeddings.ndim() != 2 || s.embeddings.dim(0) != s.size() ||
        s.ids.size() != s.emotions.size())
        throw data_error("reference store: inconsistent table sizes");
    return s;
}

std::vector<RetrievalHit> retrieve(const ReferenceStore& store, const Tensor& query, int top_k) {
    if (store.size() == 0) throw data_error("retrieve: empty store");
    if (query.ndim() != 1 || query.dim(0) != store.embeddings.dim(1))
        throw shape_error("retrieve: query must be {d_embed}");
    if (top_k < 1) throw config_error("retrieve: top_k must be positive");

    const int n = store.size(), d = store.embeddings.dim(1);
    const std::vector<double>& q = query.values();
    double qn = 0.0;
    for (double x : q) qn += x * x;
    qn = std::sqrt(qn);
    if (qn <= 0.0) throw data_error("retrieve: query has zero norm");

    const std::vector<double>& e = store.embeddings.values();
    std::vector<RetrievalHit> hits(n);
    for (int i = 0; i < n; ++i) {
        double dot = 0.0, rn = 0.0;
        for (int j = 0; j < d; ++j) {
            double r = e[static_cast<size_t>(i) * d + j];
            dot += q[j] * r;
            rn += r * r;
        }
        rn = std::sqrt(rn);
        hits[i] = {store.ids[i], store.emotions[i], dot / (qn * (rn > 0.0 ? rn : 1.0))};
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    hits.resize(std::min<size_t>(hits.size(), static_cast<size_t>(top_k)));
    return hits;
}

// ---------------------------------------------------------------------------
// Conversion
// ---------------------------------------------------------------------------

Tensor recover_emotion_axes(const Corpus& corpus, const std::vector<int>& utterance_ids) {
    const EmotionSpec& spec = corpus.spec;
    const int dm = spec.d_mel;
    std::vector<double> axes(static_cast<size_t>(kNumEmotions) * dm, 0.0);
    std::vector<int> counts(kNumEmotions, 0);
    autograd::NoGradGuard probe;
    for (int id : utterance_ids) {
        const Utterance& u = utterance_at(corpus, id, "probe utterance");
        Tensor with = spec.synth_target(u.content_features, u.emotion, u.intensity_gt, Rng(0), true);
        Tensor without = spec.synth_target(u.content_features, u.emotion, 0.0, Rng(0), true);
        std::vector<double> a = time_mean(with), b = time_mean(without);
        for (int j = 0; j < dm; ++j) axes[static_cast<size_t>(u.emotion) * dm + j] += a[j] - b[j];
        ++counts[u.emotion];
    }
    for (int c = 0; c < kNumEmotions; ++c) {
        if (counts[c] == 0)
            throw data_error("emotion axes: class '" + emotion_names()[c] + "' has no utterances");
        double n2 = 0.0;
        for (int j = 0; j < dm; ++j) n2 += axes[static_cast<size_t>(c) * dm + j] *
                                           axes[static_cast<size_t>(c) * dm + j];
        double n = std::sqrt(n2);
        if (n <= 0.0) throw data_error("emotion axes: degenerate probe for a class");
        for (int j = 0; j < dm; ++j) axes[static_cast<size_t>(c) * dm + j] /= n;
    }
    return Tensor({kNumEmotions, dm}, std::move(axes));
}

ConversionReport convert_utterance(const Corpus& corpus, const ClapModel& clap, const VcModel& vc,
                                   const Tensor& emotion_axes, const RunConfig& cfg,
                                   const ConvertRequest& req, const ReferenceStore* store) {
    const EmotionSpec& spec = corpus.spec;
    if (req.lambda < 0.0 || req.lambda > 2.0)
        throw config_error("convert: intensity must lie in [0,2]");
    if (emotion_axes.ndim() != 2 || emotion_axes.dim(0) != kNumEmotions ||
        emotion_axes.dim(1) != spec.d_mel)
        throw shape_error("convert: emotion axes must be {7, d_mel}");
    const Utterance& src = utterance_at(corpus, req.source_id, "source");
    Rng seed_rng(req.sample_seed);

    ConversionReport rep;
    rep.lambda = req.lambda;
    Tensor h;
    // Reference intensity behind the conditioning, scaled by the gate: known
    // exactly for reference/retrieval conditioning, the corpus mean (0.75)
    // for bare prompts.
    double oracle_intensity = 0.75 * req.lambda;

    if (req.mode == "reference") {
        const Utterance& ref = utterance_at(corpus, req.reference_id, "reference");
        h = embed_reference(clap, ref.audio_features);
        rep.target_emotion = ref.emotion;
        oracle_intensity = req.lambda * ref.intensity_gt;
    } else if (req.mode == "prompt" || req.mode == "retrieval") {
        if (req.target_emotion < 0 || req.target_emotion >= kNumEmotions)
            throw data_error("convert: prompt modes need a target emotion in [0,7)");
        rep.target_emotion = req.target_emotion;
        RenderedPrompt rp = render_prompt(spec, req.target_emotion, req.prompt_slot,
                                          seed_rng.split("prompt-word"));
        Tensor q = embed_prompt(clap, rp.tokens);
        if (req.mode == "prompt") {
            h = q;
        } else {
            if (store == nullptr) throw data_error("convert: mode=retrieval needs a reference store");
            RetrievalHit hit = retrieve(*store, q, 1).front();
            rep.retrieval_id = hit.id;
            const Utterance& ref = utterance_at(corpus, hit.id, "retrieved reference");
            h = embed_reference(clap, ref.audio_features);
            oracle_intensity = req.lambda * ref.intensity_gt;
        }
    } else {
        throw config_error("convert: mode must be reference, prompt, or retrieval");
    }

    autograd::NoGradGuard eval;
    Tensor fused = fuencoder_forward(src.content_features, h, req.lambda, vc.fuenc, false, Rng(0),
                                     vc.use_aig);
    Tensor cond = conditioned_h(vc, h, req.lambda);
    SamplerConfig sc;
    sc.steps = static_cast<int>(cfg.sampler_steps);
    sc.guidance_scale = cfg.sampler_guidance;
    rep.mel = euler_sample(fused, cond, vc.cfm, sc, seed_rng.split("sample"));

    // Metrics against the synthetic world.
    Tensor oracle = spec.synth_target(src.content_features, rep.target_emotion, oracle_intensity,
                                      Rng(0), true);
    Tensor base = spec.synth_target(src.content_features, rep.target_emotion, 0.0, Rng(0), true);
    std::vector<double> delta = time_mean(rep.mel);
    std::vector<double> base_mean = time_mean(base);
    for (size_t j = 0; j < delta.size(); ++j) delta[j] -= base_mean[j];

    const std::vector<double>& ax = emotion_axes.values();
    const size_t off = static_cast<size_t>(rep.target_emotion) * spec.d_mel;
    double dot = 0.0, dn = 0.0, an = 0.0;
    for (int j = 0; j < spec.d_mel; ++j) {
        dot += delta[j] * ax[off + j];
        dn += delta[j] * delta[j];
        an += ax[off + j] * ax[off + j];
    }
    rep.axis_projection = dot;
    rep.eecs = (dn > 0.0 && an > 0.0) ? dot / (std::sqrt(dn) * std::sqrt(an)) : 0.0;

    const std::vector<double>& mv = rep.mel.values();
    const std::vector<double>& ov = oracle.values();
    double mae = 0.0, mean = 0.0;
    for (size_t i = 0; i < ov.size(); ++i) {
        mae += std::fabs(mv[i] - ov[i]);
        mean += ov[i];
    }
    mae /= static_cast<double>(ov.size());
    mean /= static_cast<double>(ov.size());
    double var = 0.0;
    for (double o : ov) var += (o - mean) * (o - mean);
    var /= static_cast<double>(ov.size());
    rep.mae_vs_oracle = mae;
    rep.oracle_scale = std::max(std::sqrt(var), 1e-12);
    return rep;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(const RunConfig& cfg, const Corpus& corpus, const CorpusSplit& split,
                    const ClapModel& clap, const VcModel& vc, const ReferenceStore& store) {
    if (split.test.empty()) throw data_error("evaluate: empty test split");
    Tensor axes = recover_emotion_axes(corpus, split.train);
    const std::vector<std::string> modes = {"reference", "prompt", "retrieval"};
    Rng root(static_cast<uint64_t>(cfg.seed));

    EvalResult out;
    const int64_t n = cfg.eval_conversions;
    for (size_t mi = 0; mi < modes.size(); ++mi) {
        for (size_t li = 0; li < cfg.eval_lambdas.size(); ++li) {
            const double lambda = cfg.eval_lambdas[li];
            Rng cell = root.split("eval-cell", static_cast<uint64_t>(mi * 1024 + li));
            double se = 0.0, sp = 0.0, sm = 0.0;
            int hits = 0;
            for (int64_t k = 0; k < n; ++k) {
                const Utterance& src =
                    corpus.items[split.test[static_cast<size_t>(k) % split.test.size()]];
                ConvertRequest req;
                req.source_id = src.id;
                req.mode = modes[mi];
                req.lambda = lambda;
                req.sample_seed = cell.split("conv", static_cast<uint64_t>(k)).key();
                if (req.mode == "reference") {
                    req.reference_id = src.id;
                } else {
                    req.target_emotion = src.emotion;
                    req.prompt_slot = static_cast<int>(k % kTemplatesPerClass);
                }
                ConversionReport rep = convert_utterance(corpus, clap, vc, axes, cfg, req, &store);
                se += rep.eecs;
                sp += rep.axis_projection;
                sm += rep.mae_vs_oracle / rep.oracle_scale;
                if (req.mode == "retrieval" && rep.retrieval_id >= 0 &&
                    corpus.items[rep.retrieval_id].emotion == src.emotion)
                    ++hits;
            }
            EvalRow row;
            row.mode = modes[mi];
            row.lambda = lambda;
            row.mean_eecs = se / static_cast<double>(n);
            row.mean_axis_projection = sp / static_cast<double>(n);
            row.mean_norm_mae = sm / static_cast<double>(n);
            row.retrieval_accuracy =
                modes[mi] == "retrieval" ? static_cast<double>(hits) / static_cast<double>(n) : -1.0;
            out.rows.push_back(row);
        }
    }
    return out;
}

std::string eval_csv(const EvalResult& r) {
    std::ostringstream o;
    o << "mode,lambda,mean_eecs,mean_axis_projection,mean_norm_mae,retrieval_accuracy\n";
    for (const EvalRow& row : r.rows) {
        o << row.mode << ',' << fmt(row.lambda) << ',' << fmt(row.mean_eecs) << ','
          << fmt(row.mean_axis_projection) << ',' << fmt(row.mean_norm_mae) << ',';
        if (row.retrieval_accuracy >= 0.0) o << fmt(row.retrieval_accuracy);
        o << '\n';
    }
    return o.str();
}

std::string lambda_sweep_csv(const EvalResult& r) {
    std::ostringstream o;
    o << "lambda,mean_axis_projection\n";
    for (const EvalRow& row : r.rows)
        if (row.mode == "reference")
            o << fmt(row.lambda) << ',' << fmt(row.mean_axis_projection) << '\n';
    return o.str();
}

std::string clap_history_csv(const std::vector<ClapEpochRow>& rows) {
    std::ostringstream o;
    o << "epoch,train_loss,val_retrieval\n";
    for (const ClapEpochRow& r : rows)
        o << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_retrieval) << '\n';
    return o.str();
}

std::string vc_history_csv(const std::vector<VcHistoryRow>& rows) {
    std::ostringstream o;
    o << "iteration,loss\n";
    for (const VcHistoryRow& r : rows) o << r.iteration << ',' << fmt(r.loss) << '\n';
    return o.str();
}

std::string ablation_label(const RunConfig& cfg) {
    std::vector<std::string> tags;
    if (!cfg.use_emo_label) tags.push_back("no_emo_label");
    if (cfg.loss_variant != "symkl") tags.push_back("loss_" + cfg.loss_variant);
    if (!cfg.use_aig) tags.push_back("no_aig");
    if (tags.empty()) return "full";
    std::string out = tags[0];
    for (size_t i = 1; i < tags.size(); ++i) out += "+" + tags[i];
    return out;
}

std::string ablation_csv(const RunConfig& cfg, const EvalResult& r) {
    const EvalRow* best = nullptr;
    for (const EvalRow& row : r.rows) {
        if (row.mode != "reference") continue;
        if (best == nullptr || std::fabs(row.lambda - 1.0) < std::fabs(best->lambda - 1.0))
            best = &row;
    }
    if (best == nullptr) throw data_error("ablation table: no reference-mode rows");
    std::ostringstream o;
    o << "config,mean_eecs\n" << ablation_label(cfg) << ',' << fmt(best->mean_eecs) << '\n';
    return o.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw data_error("failed to write '" + path + "'");
}

}  // namespace emoflow
