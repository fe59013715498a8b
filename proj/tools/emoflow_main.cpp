// Command-line front end for the emoflow pipeline: corpus generation,
// alignment and conversion training, reference-store construction,
// single-utterance conversion, and the evaluation sweep.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "emoflow/error.hpp"
#include "emoflow/pipeline.hpp"

namespace {

using namespace emoflow;

struct CommonArgs {
    std::string config_path;
    int64_t seed = -1;
    std::string out = "out";
    bool no_emo_label = false;
    std::string loss;
    bool no_aig = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "configuration file (key = value lines)");
    cmd->add_option("--seed", a.seed, "override the configured seed (non-negative)");
    cmd->add_option("--out", a.out, "output directory (created if absent)");
    cmd->add_flag("--no-emo-label", a.no_emo_label,
                  "build alignment targets from prompt labels alone");
    cmd->add_option("--loss", a.loss, "alignment loss variant: symkl or kl");
    cmd->add_flag("--no-aig", a.no_aig, "disable the adaptive intensity gate");
}

RunConfig resolve_config(const CommonArgs& a) {
    RunConfig cfg = a.config_path.empty() ? RunConfig() : RunConfig::from_file(a.config_path);
    if (a.seed >= 0) cfg.seed = a.seed;
    if (a.no_emo_label) cfg.use_emo_label = false;
    if (!a.loss.empty()) cfg.loss_variant = a.loss;
    if (a.no_aig) cfg.use_aig = false;
    cfg.validate();
    std::filesystem::create_directories(a.out);
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

int run(int argc, char** argv) {
    CLI::App app{"emoflow: emotional voice conversion on a synthetic corpus"};
    app.require_subcommand(1);

    CommonArgs gen_a, clap_a, vc_a, store_a, conv_a, eval_a;

    CLI::App* gen = app.add_subcommand("gen-corpus", "generate and save the synthetic corpus");
    add_common(gen, gen_a);

    CLI::App* clap_cmd = app.add_subcommand("train-clap", "train the emotion alignment model");
    add_common(clap_cmd, clap_a);

    CLI::App* vc_cmd = app.add_subcommand("train-vc", "train the conversion model");
    add_common(vc_cmd, vc_a);
    std::string vc_clap_path, vc_resume;
    vc_cmd->add_option("--clap", vc_clap_path, "alignment checkpoint (default <out>/clap.ckpt)");
    vc_cmd->add_option("--resume", vc_resume, "conversion checkpoint to resume from");

    CLI::App* store_cmd = app.add_subcommand("build-store", "embed the train split as references");
    add_common(store_cmd, store_a);
    std::string store_clap_path;
    store_cmd->add_option("--clap", store_clap_path, "alignment checkpoint (default <out>/clap.ckpt)");

    CLI::App* conv_cmd = app.add_subcommand("convert", "convert one utterance");
    add_common(conv_cmd, conv_a);
    int source_id = 0, reference_id = -1, prompt_slot = 0;
    double intensity = 1.0;
    std::string mode = "reference", emotion_name;
    std::string c_clap, c_vc, c_store;
    conv_cmd->add_option("--source", source_id, "source utterance id")->required();
    conv_cmd->add_option("--mode", mode, "reference | prompt | retrieval");
    conv_cmd->add_option("--reference", reference_id, "reference utterance id (default: source)");
    conv_cmd->add_option("--emotion", emotion_name, "target emotion name for prompt modes");
    conv_cmd->add_option("--slot", prompt_slot, "prompt template slot within the class");
    conv_cmd->add_option("--intensity", intensity, "intensity control in [0,2]");
    conv_cmd->add_option("--clap", c_clap, "alignment checkpoint (default <out>/clap.ckpt)");
    conv_cmd->add_option("--vc", c_vc, "conversion checkpoint (default <out>/vc.ckpt)");
    conv_cmd->add_option("--store", c_store, "reference store (default <out>/store.ckpt)");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "run the mode × intensity sweep");
    add_common(eval_cmd, eval_a);
    std::string e_clap, e_vc, e_store;
    eval_cmd->add_option("--clap", e_clap, "alignment checkpoint (default <out>/clap.ckpt)");
    eval_cmd->add_option("--vc", e_vc, "conversion checkpoint (default <out>/vc.ckpt)");
    eval_cmd->add_option("--store", e_store, "reference store (default <out>/store.ckpt)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        RunConfig cfg = resolve_config(gen_a);
        Corpus corpus = generate_corpus(cfg);
        save_corpus(corpus, join(gen_a.out, "corpus.txt"), join(gen_a.out, "corpus.blob"));
        write_text_file(join(gen_a.out, "config.txt"), cfg.to_text());
        CorpusSplit split = split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                                         static_cast<uint64_t>(cfg.seed));
        std::cout << "corpus: " << corpus.items.size() << " utterances (train " << split.train.size()
                  << ", val " << split.val.size() << ", test " << split.test.size() << ") -> "
                  << gen_a.out << "\n";
        return 0;
    }

    if (clap_cmd->parsed()) {
        RunConfig cfg = resolve_config(clap_a);
        Corpus corpus = generate_corpus(cfg);
        CorpusSplit split = split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                                         static_cast<uint64_t>(cfg.seed));
        ClapTrainResult r = train_clap(cfg, corpus, split);
        save_clap_checkpoint(r.model, cfg, r.steps, join(clap_a.out, "clap.ckpt"));
        write_text_file(join(clap_a.out, "clap_history.csv"), clap_history_csv(r.history));
        const ClapEpochRow& last = r.history.back();
        std::cout << "train-clap: " << r.steps << " steps, final loss " << last.train_loss
                  << ", val retrieval " << last.val_retrieval << " -> " << clap_a.out << "\n";
        return 0;
    }

    if (vc_cmd->parsed()) {
        RunConfig cfg = resolve_config(vc_a);
        Corpus corpus = generate_corpus(cfg);
        CorpusSplit split = split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                                         static_cast<uint64_t>(cfg.seed));
        std::string clap_path = vc_clap_path.empty() ? join(vc_a.out, "clap.ckpt") : vc_clap_path;
        ClapModel clap = load_clap_checkpoint(clap_path);
        VcTrainResult r = train_vc(cfg, corpus, split, clap, vc_resume);
        write_text_file(join(vc_a.out, "vc_history.csv"), vc_history_csv(r.history));
        save_vc_checkpoint(r, cfg, join(vc_a.out, "vc.ckpt"));
        std::cout << "train-vc: " << r.iterations_done << " iterations, final loss "
                  << r.history.back().loss << " -> " << vc_a.out << "\n";
        return 0;
    }

    if (store_cmd->parsed()) {
        RunConfig cfg = resolve_config(store_a);
        Corpus corpus = generate_corpus(cfg);
        CorpusSplit split = split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                                         static_cast<uint64_t>(cfg.seed));
        std::string clap_path = store_clap_path.empty() ? join(store_a.out, "clap.ckpt")
                                                        : store_clap_path;
        ClapModel clap = load_clap_checkpoint(clap_path);
        ReferenceStore store = build_reference_store(corpus, split.train, clap);
        save_store(store, join(store_a.out, "store.ckpt"));
        std::cout << "build-store: " << store.size() << " references -> " << store_a.out << "\n";
        return 0;
    }

    if (conv_cmd->parsed()) {
        RunConfig cfg = resolve_config(conv_a);
        Corpus corpus = generate_corpus(cfg);
        CorpusSplit split = split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                                         static_cast<uint64_t>(cfg.seed));
        ClapModel clap = load_clap_checkpoint(c_clap.empty() ? join(conv_a.out, "clap.ckpt") : c_clap);
        VcCheckpoint vck = load_vc_checkpoint(c_vc.empty() ? join(conv_a.out, "vc.ckpt") : c_vc);
        Tensor axes = recover_emotion_axes(corpus, split.train);

        ConvertRequest req;
        req.source_id = source_id;
        req.mode = mode;
        req.reference_id = reference_id >= 0 ? reference_id : source_id;
        req.prompt_slot = prompt_slot;
        req.lambda = intensity;
        req.sample_seed = Rng(static_cast<uint64_t>(cfg.seed)).split("convert-cli").key();
        if (!emotion_name.empty()) req.target_emotion = emotion_id(emotion_name);

        ReferenceStore store;
        const ReferenceStore* store_ptr = nullptr;
        if (mode == "retrieval") {
            store = load_store(c_store.empty() ? join(conv_a.out, "store.ckpt") : c_store);
            store_ptr = &store;
        }
        ConversionReport rep =
            convert_utterance(corpus, clap, vck.model, axes, cfg, req, store_ptr);

        Container out;
        out.kind = "mel";
        out.meta["source"] = std::to_string(source_id);
        out.meta["mode"] = mode;
        out.meta["target"] = emotion_names()[rep.target_emotion];
        out.meta["lambda"] = std::to_string(rep.lambda);
        out.add("mel", rep.mel);
        out.save(join(conv_a.out, "conversion.blob"));

        std::cout << "convert: mode=" << mode << " target=" << emotion_names()[rep.target_emotion]
                  << " lambda=" << rep.lambda << " eecs=" << rep.eecs << " axis_projection="
                  << rep.axis_projection << " norm_mae=" << rep.mae_vs_oracle / rep.oracle_scale;
        if (rep.retrieval_id >= 0) std::cout << " retrieved=" << rep.retrieval_id;
        std::cout << " -> " << conv_a.out << "/conversion.blob\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        RunConfig cfg = resolve_config(eval_a);
        Corpus corpus = generate_corpus(cfg);
        CorpusSplit split = split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                                         static_cast<uint64_t>(cfg.seed));
        ClapModel clap = load_clap_checkpoint(e_clap.empty() ? join(eval_a.out, "clap.ckpt") : e_clap);
        VcCheckpoint vck = load_vc_checkpoint(e_vc.empty() ? join(eval_a.out, "vc.ckpt") : e_vc);
        ReferenceStore store = load_store(e_store.empty() ? join(eval_a.out, "store.ckpt") : e_store);

        EvalResult r = evaluate(cfg, corpus, split, clap, vck.model, store);
        write_text_file(join(eval_a.out, "metrics.csv"), eval_csv(r));
        write_text_file(join(eval_a.out, "lambda_sweep.csv"), lambda_sweep_csv(r));
        write_text_file(join(eval_a.out, "ablation.csv"), ablation_csv(cfg, r));
        std::cout << "evaluate: " << r.rows.size() << " sweep cells -> " << eval_a.out
                  << "/{metrics,lambda_sweep,ablation}.csv\n";
        for (const EvalRow& row : r.rows)
            if (row.mode == "reference")
                std::cout << "  lambda " << row.lambda << ": projection "
                          << row.mean_axis_projection << ", eecs " << row.mean_eecs << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
