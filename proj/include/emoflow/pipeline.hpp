#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emoflow/cfm.hpp"
#include "emoflow/clap.hpp"
#include "emoflow/config.hpp"
#include "emoflow/container.hpp"
#include "emoflow/corpus.hpp"
#include "emoflow/fusion.hpp"
#include "emoflow/optim.hpp"

namespace emoflow {

// ---------------------------------------------------------------------------
// Emotion-alignment (CLAP) training
// ---------------------------------------------------------------------------

struct ClapEpochRow {
    int64_t epoch = 0;
    double train_loss = 0.0;     // mean pre-step loss over the epoch's batches
    double val_retrieval = 0.0;  // val prompt → val reference top-1 class accuracy
};

struct ClapTrainResult {
    ClapModel model;
    std::vector<ClapEpochRow> history;
    int64_t steps = 0;  // optimizer steps taken
};

ClapTrainResult train_clap(const RunConfig& cfg, const Corpus& corpus, const CorpusSplit& split);

void save_clap_checkpoint(const ClapModel& model, const RunConfig& cfg, int64_t steps,
                          const std::string& path);
ClapModel load_clap_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Voice-conversion model (fusion encoder + conditional flow decoder)
// ---------------------------------------------------------------------------

struct VcModel {
    FuEncoderParams fuenc;
    CfmParams cfm;
    bool use_aig = true;

    std::vector<Tensor> params() const;  // fusion encoder first, then decoder
};

VcModel init_vc_model(const RunConfig& cfg);

struct VcHistoryRow {
    int64_t iteration = 0;
    double loss = 0.0;  // pre-step loss at that iteration
};

struct VcTrainResult {
    VcModel model;
    std::vector<VcHistoryRow> history;  // every 50 iterations plus the last
    int64_t iterations_done = 0;
    int64_t opt_steps = 0;                      // final optimizer state, so a
    std::vector<std::vector<double>> opt_m, opt_v;  // checkpoint can resume exactly
};

// Self-reconstruction training: each target Mel is conditioned on the frozen
// embedding of the utterance's own audio at intensity 1. Every random stream
// is derived from the absolute iteration index, so resuming from a checkpoint
// replays the exact schedule the uninterrupted run would have used.
VcTrainResult train_vc(const RunConfig& cfg, const Corpus& corpus, const CorpusSplit& split,
                       const ClapModel& clap, const std::string& resume_path = "");

void save_vc_checkpoint(const VcModel& model, const Optimizer& optim, const RunConfig& cfg,
                        const std::string& path);
void save_vc_checkpoint(const VcTrainResult& result, const RunConfig& cfg, const std::string& path);

struct VcCheckpoint {
    VcModel model;
    int64_t iteration = 0;
    std::vector<std::vector<double>> m, v;  // optimizer moments, parameter order
    std::string config_hash;
};
VcCheckpoint load_vc_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Reference store and retrieval
// ---------------------------------------------------------------------------

struct ReferenceStore {
    std::vector<int> ids;       // utterance ids, ascending
    std::vector<int> emotions;  // class label per row
    Tensor embeddings;          // {N, d_embed}, unit rows
    int size() const { return static_cast<int>(ids.size()); }
};

ReferenceStore build_reference_store(const Corpus& corpus, const std::vector<int>& utterance_ids,
                                     const ClapModel& clap);
void save_store(const ReferenceStore& store, const std::string& path);
ReferenceStore load_store(const std::string& path);

struct RetrievalHit {
    int id = -1;
    int emotion = -1;
    double score = 0.0;
};
// Exact cosine scan over the whole store, descending score, ties broken by
// ascending utterance id.
std::vector<RetrievalHit> retrieve(const ReferenceStore& store, const Tensor& query, int top_k);

// ---------------------------------------------------------------------------
// Conversion
// ---------------------------------------------------------------------------

// Unit emotion axes in Mel space, one row per class, recovered by a linear
// probe on noise-free oracle Mel: the class-summed difference between each
// utterance rendered at its true intensity and at intensity zero.
Tensor recover_emotion_axes(const Corpus& corpus, const std::vector<int>& utterance_ids);

struct ConvertRequest {
    int source_id = 0;
    std::string mode = "reference";  // reference | prompt | retrieval
    int reference_id = -1;           // mode = reference
    int target_emotion = -1;         // mode = prompt | retrieval
    int prompt_slot = 0;             // template slot within the class
    double lambda = 1.0;             // intensity control, [0, 2]
    uint64_t sample_seed = 0;        // drives the sampler noise (and prompt slot word)
};

struct ConversionReport {
    Tensor mel;                    // {T, d_mel}
    int target_emotion = -1;
    double lambda = 1.0;
    int retrieval_id = -1;         // mode = retrieval: the utterance that was retrieved
    double eecs = 0.0;             // cosine(Δ time-mean Mel, class axis)
    double axis_projection = 0.0;  // ⟨Δ time-mean Mel, class axis⟩
    double mae_vs_oracle = 0.0;    // vs the noise-free oracle at the matched intensity
    double oracle_scale = 0.0;     // std of that oracle's entries (normalization unit)
};

ConversionReport convert_utterance(const Corpus& corpus, const ClapModel& clap, const VcModel& vc,
                                   const Tensor& emotion_axes, const RunConfig& cfg,
                                   const ConvertRequest& req, const ReferenceStore* store = nullptr);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string mode;
    double lambda = 0.0;
    double mean_eecs = 0.0;
    double mean_axis_projection = 0.0;
    double mean_norm_mae = 0.0;          // mean of per-conversion MAE / oracle std
    double retrieval_accuracy = -1.0;    // mode = retrieval only; -1 elsewhere
};

struct EvalResult {
    std::vector<EvalRow> rows;  // modes × lambdas, fixed order
};

// Runs eval.conversions conversions per (mode, lambda) cell over the test
// split: reference mode reconstructs each source from its own reference,
// prompt/retrieval modes target the source's class through its prompts.
EvalResult evaluate(const RunConfig& cfg, const Corpus& corpus, const CorpusSplit& split,
                    const ClapModel& clap, const VcModel& vc, const ReferenceStore& store);

std::string eval_csv(const EvalResult& r);
std::string lambda_sweep_csv(const EvalResult& r);  // reference-mode λ → mean projection
std::string clap_history_csv(const std::vector<ClapEpochRow>& rows);
std::string vc_history_csv(const std::vector<VcHistoryRow>& rows);
// One-line ablation table entry for this run: label derived from the ablation
// flags, value = reference-mode mean EECS at the λ nearest 1.
std::string ablation_label(const RunConfig& cfg);
std::string ablation_csv(const RunConfig& cfg, const EvalResult& r);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace emoflow
