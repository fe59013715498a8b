#include "emoflow/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "emoflow/error.hpp"
#include "emoflow/rng.hpp"

namespace emoflow {

namespace {

enum class Kind { i64, f64, boolean, text, f64_list };

struct Binding {
    const char* key;
    Kind kind;
    void* ptr;
};

std::vector<Binding> bindings(RunConfig& c) {
    return {
        {"seed", Kind::i64, &c.seed},
        {"corpus.n", Kind::i64, &c.corpus_n},
        {"corpus.t_min", Kind::i64, &c.corpus_t_min},
        {"corpus.t_max", Kind::i64, &c.corpus_t_max},
        {"corpus.d_content", Kind::i64, &c.corpus_d_content},
        {"corpus.d_mel", Kind::i64, &c.corpus_d_mel},
        {"corpus.noise", Kind::f64, &c.corpus_noise},
        {"corpus.world_seed", Kind::i64, &c.corpus_world_seed},
        {"split.train", Kind::f64, &c.split_train},
        {"split.val", Kind::f64, &c.split_val},
        {"split.test", Kind::f64, &c.split_test},
        {"clap.dim", Kind::i64, &c.clap_dim},
        {"clap.hidden", Kind::i64, &c.clap_hidden},
        {"clap.text_embed", Kind::i64, &c.clap_text_embed},
        {"clap.lr", Kind::f64, &c.clap_lr},
        {"clap.batch", Kind::i64, &c.clap_batch},
        {"clap.epochs", Kind::i64, &c.clap_epochs},
        {"clap.alpha_e", Kind::f64, &c.clap_alpha_e},
        {"clap.alpha", Kind::f64, &c.clap_alpha},
        {"clap.temp_init", Kind::f64, &c.clap_temp_init},
        {"fusion.blocks", Kind::i64, &c.fusion_blocks},
        {"fusion.heads", Kind::i64, &c.fusion_heads},
        {"fusion.dropout", Kind::f64, &c.fusion_dropout},
        {"vc.lr", Kind::f64, &c.vc_lr},
        {"vc.weight_decay", Kind::f64, &c.vc_weight_decay},
        {"vc.batch", Kind::i64, &c.vc_batch},
        {"vc.iterations", Kind::i64, &c.vc_iterations},
        {"vc.sigma_min", Kind::f64, &c.vc_sigma_min},
        {"vc.p_uncond", Kind::f64, &c.vc_p_uncond},
        {"cfm.blocks", Kind::i64, &c.cfm_blocks},
        {"cfm.heads", Kind::i64, &c.cfm_heads},
        {"cfm.width", Kind::i64, &c.cfm_width},
        {"cfm.time_dim", Kind::i64, &c.cfm_time_dim},
        {"sampler.steps", Kind::i64, &c.sampler_steps},
        {"sampler.guidance", Kind::f64, &c.sampler_guidance},
        {"eval.conversions", Kind::i64, &c.eval_conversions},
        {"eval.lambdas", Kind::f64_list, &c.eval_lambdas},
        {"ablation.use_emo_label", Kind::boolean, &c.use_emo_label},
        {"ablation.loss", Kind::text, &c.loss_variant},
        {"ablation.use_aig", Kind::boolean, &c.use_aig},
    };
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_f64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' expects a real number, got '" + v + "'");
    }
}

int64_t parse_i64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

std::string fmt_f64(double d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const Binding& b : bindings(*this)) {
        if (key != b.key) continue;
        switch (b.kind) {
            case Kind::i64:
                *static_cast<int64_t*>(b.ptr) = parse_i64(key, value);
                return;
            case Kind::f64:
                *static_cast<double*>(b.ptr) = parse_f64(key, value);
                return;
            case Kind::boolean: {
                if (value == "true")
                    *static_cast<bool*>(b.ptr) = true;
                else if (value == "false")
                    *static_cast<bool*>(b.ptr) = false;
                else
                    throw config_error("config: key '" + key + "' expects true or false, got '" + value + "'");
                return;
            }
            case Kind::text:
                if (value.empty()) throw config_error("config: key '" + key + "' expects a value");
                *static_cast<std::string*>(b.ptr) = value;
                return;
            case Kind::f64_list: {
                std::vector<double> out;
                std::string item;
                std::istringstream ls(value);
                while (std::getline(ls, item, ',')) out.push_back(parse_f64(key, trim(item)));
                if (out.empty()) throw config_error("config: key '" + key + "' expects a comma list");
                *static_cast<std::vector<double>*>(b.ptr) = std::move(out);
                return;
            }
        }
    }
    throw config_error("config: unknown key '" + key + "'");
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const Binding& b : bindings(const_cast<RunConfig&>(*this))) {
        out << b.key << " = ";
        switch (b.kind) {
            case Kind::i64:
                out << *static_cast<const int64_t*>(b.ptr);
                break;
            case Kind::f64:
                out << fmt_f64(*static_cast<const double*>(b.ptr));
                break;
            case Kind::boolean:
                out << (*static_cast<const bool*>(b.ptr) ? "true" : "false");
                break;
            case Kind::text:
                out << *static_cast<const std::string*>(b.ptr);
                break;
            case Kind::f64_list: {
                const auto& v = *static_cast<const std::vector<double>*>(b.ptr);
                for (size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << fmt_f64(v[i]);
                break;
            }
        }
        out << '\n';
    }
    return out.str();
}

std::string RunConfig::hash() const {
    uint64_t h = fnv1a64(to_text());
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw config_error("config: " + msg); };
    if (corpus_n < 7) fail("corpus.n must be at least 7");
    if (corpus_t_min < 1 || corpus_t_max < corpus_t_min) fail("corpus t bounds invalid");
    if (corpus_d_content < 1 || corpus_d_mel < 1) fail("corpus dims must be positive");
    if (corpus_noise < 0) fail("corpus.noise must be non-negative");
    double rs = split_train + split_val + split_test;
    if (std::abs(rs - 1.0) > 1e-9) fail("split ratios must sum to 1");
    if (split_train <= 0 || split_val <= 0 || split_test <= 0) fail("split ratios must be positive");
    if (clap_dim < 2 || clap_hidden < 1 || clap_text_embed < 1) fail("clap dims must be positive");
    if (clap_batch < 2) fail("clap.batch must be at least 2 (contrastive loss)");
    if (clap_epochs < 1) fail("clap.epochs must be positive");
    if (clap_alpha_e < 0 || clap_alpha_e > 1) fail("clap.alpha_e must lie in [0,1]");
    if (clap_alpha < 0 || clap_alpha >= 1) fail("clap.alpha must lie in [0,1)");
    if (clap_temp_init <= 0) fail("clap.temp_init must be positive");
    if (fusion_blocks < 1) fail("fusion.blocks must be at least 1");
    if (fusion_dropout < 0 || fusion_dropout >= 1) fail("fusion.dropout must lie in [0,1)");
    if (clap_dim % fusion_heads != 0) fail("clap.dim must be divisible by fusion.heads");
    if (vc_weight_decay < 0) fail("vc.weight_decay must be non-negative");
    if (vc_batch < 1 || vc_iterations < 1) fail("vc batch/iterations must be positive");
    if (vc_sigma_min <= 0 || vc_sigma_min >= 1) fail("vc.sigma_min must lie in (0,1)");
    if (vc_p_uncond < 0 || vc_p_uncond > 1) fail("vc.p_uncond must lie in [0,1]");
    if (cfm_blocks < 1 || cfm_width < 1) fail("cfm blocks/width must be positive");
    if (cfm_width % cfm_heads != 0) fail("cfm.width must be divisible by cfm.heads");
    if (cfm_time_dim < 2 || cfm_time_dim % 2 != 0) fail("cfm.time_dim must be even and >= 2");
    if (sampler_steps < 1) fail("sampler.steps must be at least 1");
    if (sampler_guidance < 0) fail("sampler.guidance must be non-negative");
    if (eval_conversions < 1) fail("eval.conversions must be positive");
    for (double l : eval_lambdas)
        if (l < 0 || l > 2) fail("eval.lambdas entries must lie in [0,2]");
    if (loss_variant != "symkl" && loss_variant != "kl") fail("ablation.loss must be symkl or kl");
}

}  // namespace emoflow
