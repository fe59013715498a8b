#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "emoflow/error.hpp"
#include "emoflow/fusion.hpp"
#include "emoflow/gradcheck.hpp"
#include "emoflow/ops.hpp"
#include "emoflow/rng.hpp"

using namespace emoflow;

namespace {

constexpr int kDc = 6, kD = 8, kBlocks = 2, kHeads = 2;

FuEncoderParams tiny_encoder(uint64_t seed, double dropout = 0.5) {
    return FuEncoderParams::init(kDc, kD, kBlocks, kHeads, dropout, Rng(seed));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.values().size() == b.values().size());
    double m = 0.0;
    for (size_t i = 0; i < a.values().size(); ++i)
        m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
    return m;
}

// A fresh encoder starts with zeroed adaLN conditioning weights (identity in
// the embedding), so tests probing h/lambda sensitivity wire them up first.
FuEncoderParams conditioned_encoder(uint64_t seed, double dropout = 0.5) {
    FuEncoderParams p = FuEncoderParams::init(kDc, kD, kBlocks, kHeads, dropout, Rng(seed));
    Rng rng = Rng(seed).split("conditioning");
    for (FusionBlockParams& b : p.blocks) {
        for (EmoAdaLnParams* ln : {&b.ln1, &b.ln2}) {
            ln->wg = Tensor::randn(ln->wg.shape(), rng, 0.2).set_requires_grad(true);
            ln->wb = Tensor::randn(ln->wb.shape(), rng, 0.2).set_requires_grad(true);
        }
    }
    return p;
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), std::vector<double>(t.values().size(), 0.0)); }

}  // namespace

TEST_CASE("prenet: deterministic in eval mode, masked in training mode") {
    FuEncoderParams p = tiny_encoder(1);
    Rng rng(5);
    Tensor x = Tensor::randn({7, kDc}, rng);

    Tensor e1 = prenet(x, p, false, Rng(1));
    Tensor e2 = prenet(x, p, false, Rng(99));  // rng unused when not training
    CHECK(e1.shape() == Shape{7, kD});
    CHECK(max_abs_diff(e1, e2) == 0.0);

    Tensor t1 = prenet(x, p, true, Rng(3));
    Tensor t2 = prenet(x, p, true, Rng(3));
    Tensor t3 = prenet(x, p, true, Rng(4));
    CHECK(max_abs_diff(t1, t2) == 0.0);   // same mask stream
    CHECK(max_abs_diff(t1, t3) > 0.0);    // different mask stream

    // dropout 0.5 zeroes roughly half of the activations
    int zeros = 0, total = 0;
    for (double v : t1.values()) {
        zeros += v == 0.0;
        ++total;
    }
    CHECK(zeros > total / 5);
    CHECK(zeros < total);

    // p = 0 makes training and eval agree exactly
    FuEncoderParams nodrop = tiny_encoder(1, 0.0);
    CHECK(max_abs_diff(prenet(x, nodrop, true, Rng(3)), prenet(x, nodrop, false, Rng(3))) == 0.0);
}

TEST_CASE("adaptive intensity gate: scaling, identity at init, range checks") {
    FuEncoderParams p = tiny_encoder(2);
    Rng rng(6);
    Tensor h = Tensor::randn({kD}, rng);

    // freshly initialized gate g = exp(0) = 1, so lambda = 1 passes h through
    Tensor g1 = adaptive_intensity_gate(h, p.log_gate, 1.0);
    CHECK(max_abs_diff(g1, h) == 0.0);

    Tensor g0 = adaptive_intensity_gate(h, p.log_gate, 0.0);
    for (double v : g0.values()) CHECK(v == 0.0);

    // exactly linear in lambda
    Tensor ga = adaptive_intensity_gate(h, p.log_gate, 0.7);
    Tensor gb = adaptive_intensity_gate(h, p.log_gate, 1.4);
    for (size_t i = 0; i < ga.values().size(); ++i)
        CHECK(gb.values()[i] == doctest::Approx(2.0 * ga.values()[i]).epsilon(1e-12));

    // the learned scalar multiplies on top of lambda
    Tensor two({1}, {std::log(2.0)});
    Tensor g2 = adaptive_intensity_gate(h, two, 1.0);
    for (size_t i = 0; i < g2.values().size(); ++i)
        CHECK(g2.values()[i] == doctest::Approx(2.0 * h.values()[i]).epsilon(1e-12));

    CHECK_THROWS_AS((void)adaptive_intensity_gate(h, p.log_gate, -0.1), config_error);
    CHECK_THROWS_AS((void)adaptive_intensity_gate(h, p.log_gate, 2.1), config_error);
    CHECK_NOTHROW((void)adaptive_intensity_gate(h, p.log_gate, 2.0));
}

TEST_CASE("emotion-adaptive layer norm: plain layer norm at init, conditioned after") {
    EmoAdaLnParams p = EmoAdaLnParams::init(kD, kD);
    Rng rng(7);
    Tensor x = Tensor::randn({5, kD}, rng);
    Tensor h = Tensor::randn({kD}, rng);

    // zero conditioning weights, gamma bias 1, beta bias 0: exactly layer_norm
    CHECK(max_abs_diff(emo_ada_layer_norm(x, h, p), layer_norm_rows(x)) == 0.0);

    // perturbing the conditioning weights changes the output once h is nonzero
    EmoAdaLnParams q = EmoAdaLnParams::init(kD, kD);
    std::vector<double> wg = q.wg.values();
    wg[0] = 0.5;
    q.wg = Tensor(q.wg.shape(), wg);
    CHECK(max_abs_diff(emo_ada_layer_norm(x, h, q), layer_norm_rows(x)) > 0.0);
    // ...but a zero embedding silences the conditioning path again
    CHECK(max_abs_diff(emo_ada_layer_norm(x, zeros_like(h), q), layer_norm_rows(x)) == 0.0);

    // rows are normalized independently: per-row mean 0, var 1 before affine
    Tensor ln = layer_norm_rows(x);
    for (int i = 0; i < 5; ++i) {
        double m = 0.0, v = 0.0;
        for (int j = 0; j < kD; ++j) m += ln.values()[static_cast<size_t>(i) * kD + j];
        m /= kD;
        for (int j = 0; j < kD; ++j) {
            const double c = ln.values()[static_cast<size_t>(i) * kD + j] - m;
            v += c * c;
        }
        CHECK(std::fabs(m) < 1e-12);
        CHECK(v / kD == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("fusion block: residual passthrough when both branches are silenced") {
    Rng rng(8);
    FusionBlockParams p = FusionBlockParams::init(kD, kD, rng);
    p.attn.wo = zeros_like(p.attn.wo);
    p.attn.bo = zeros_like(p.attn.bo);
    p.fw2 = zeros_like(p.fw2);
    p.fb2 = zeros_like(p.fb2);

    Tensor x = Tensor::randn({6, kD}, rng);
    Tensor h = Tensor::randn({kD}, rng);
    CHECK(max_abs_diff(fusion_block(x, h, p, kHeads), x) == 0.0);

    // un-silenced block actually transforms
    FusionBlockParams q = FusionBlockParams::init(kD, kD, Rng(9));
    CHECK(max_abs_diff(fusion_block(x, h, q, kHeads), x) > 0.0);
}

TEST_CASE("sinusoidal positional encoding: definition and contracts") {
    Tensor pe = sinusoidal_pe(4, 6);
    REQUIRE(pe.shape() == Shape{4, 6});
    for (int pos = 0; pos < 4; ++pos)
        for (int i = 0; i < 3; ++i) {
            const double rate = std::pow(10000.0, 2.0 * i / 6.0);
            CHECK(pe.values()[static_cast<size_t>(pos) * 6 + 2 * i] ==
                  doctest::Approx(std::sin(pos / rate)).epsilon(1e-12));
            CHECK(pe.values()[static_cast<size_t>(pos) * 6 + 2 * i + 1] ==
                  doctest::Approx(std::cos(pos / rate)).epsilon(1e-12));
        }
    // position scaling admits fractional/continuous positions
    Tensor scaled = sinusoidal_pe(2, 6, 0.25);
    CHECK(scaled.values()[6] == doctest::Approx(std::sin(0.25)).epsilon(1e-12));
    CHECK_THROWS_AS((void)sinusoidal_pe(3, 5), config_error);
}

TEST_CASE("encoder forward: shapes, eval determinism, lambda response") {
    FuEncoderParams p = conditioned_encoder(10);
    Rng rng(11);
    Tensor content = Tensor::randn({9, kDc}, rng);
    Tensor h = Tensor::randn({kD}, rng);

    Tensor y = fuencoder_forward(content, h, 1.0, p, false, Rng(0));
    CHECK(y.shape() == Shape{9, kD});
    CHECK(max_abs_diff(y, fuencoder_forward(content, h, 1.0, p, false, Rng(42))) == 0.0);

    // lambda moves the output except at a zero embedding
    Tensor y0 = fuencoder_forward(content, h, 0.0, p, false, Rng(0));
    CHECK(max_abs_diff(y, y0) > 0.0);
    Tensor z1 = fuencoder_forward(content, zeros_like(h), 1.0, p, false, Rng(0));
    Tensor z0 = fuencoder_forward(content, zeros_like(h), 0.0, p, false, Rng(0));
    CHECK(max_abs_diff(z1, z0) == 0.0);

    // continuity: a tiny lambda step produces a tiny output step
    Tensor yd = fuencoder_forward(content, h, 1.0 + 1e-7, p, false, Rng(0));
    CHECK(max_abs_diff(y, yd) < 1e-4);

    CHECK_THROWS_AS((void)fuencoder_forward(content, h, 2.5, p, false, Rng(0)), config_error);
    CHECK_THROWS_AS((void)fuencoder_forward(Tensor::randn({9, kDc + 1}, rng), h, 1.0, p, false, Rng(0)),
                    shape_error);
    CHECK_THROWS_AS((void)fuencoder_forward(content, Tensor::randn({kD + 1}, rng), 1.0, p, false, Rng(0)),
                    shape_error);
}

TEST_CASE("encoder forward: gate bypass ignores lambda and the learned scalar") {
    FuEncoderParams p = conditioned_encoder(12);
    Rng rng(13);
    Tensor content = Tensor::randn({5, kDc}, rng);
    Tensor h = Tensor::randn({kD}, rng);

    // bypass: lambda is inert
    Tensor a = fuencoder_forward(content, h, 0.3, p, false, Rng(0), false);
    Tensor b = fuencoder_forward(content, h, 1.7, p, false, Rng(0), false);
    CHECK(max_abs_diff(a, b) == 0.0);

    // at init g = 1, so the gated path at lambda = 1 coincides with the bypass
    Tensor c = fuencoder_forward(content, h, 1.0, p, false, Rng(0), true);
    CHECK(max_abs_diff(a, c) == 0.0);

    // a non-unit learned scalar separates them
    FuEncoderParams q = conditioned_encoder(12);
    q.log_gate = Tensor({1}, {std::log(1.5)});
    Tensor d = fuencoder_forward(content, h, 1.0, q, false, Rng(0), true);
    Tensor e = fuencoder_forward(content, h, 1.0, q, false, Rng(0), false);
    CHECK(max_abs_diff(d, e) > 0.0);
    CHECK(max_abs_diff(e, a) == 0.0);  // bypass never reads the scalar
}

TEST_CASE("encoder forward: training dropout is seeded and optional") {
    FuEncoderParams p = tiny_encoder(14);
    Rng rng(15);
    Tensor content = Tensor::randn({6, kDc}, rng);
    Tensor h = Tensor::randn({kD}, rng);

    Tensor t1 = fuencoder_forward(content, h, 1.0, p, true, Rng(5));
    Tensor t2 = fuencoder_forward(content, h, 1.0, p, true, Rng(5));
    Tensor t3 = fuencoder_forward(content, h, 1.0, p, true, Rng(6));
    CHECK(max_abs_diff(t1, t2) == 0.0);
    CHECK(max_abs_diff(t1, t3) > 0.0);

    FuEncoderParams nodrop = tiny_encoder(14, 0.0);
    CHECK(max_abs_diff(fuencoder_forward(content, h, 1.0, nodrop, true, Rng(5)),
                       fuencoder_forward(content, h, 1.0, nodrop, false, Rng(0))) == 0.0);
}

TEST_CASE("encoder: analytic gradients match finite differences") {
    FuEncoderParams p = conditioned_encoder(20);
    Rng rng(21);
    Tensor content = Tensor::randn({4, kDc}, rng);
    Tensor h = Tensor::randn({kD}, rng);
    h.set_requires_grad(true);

    auto params = p.named_params();
    params.emplace_back("h", h);
    FiniteDiffReport rep = finite_diff_check(
        [&]() {
            Tensor y = fuencoder_forward(content, h, 1.3, p, false, Rng(0));
            return mean_all(mul(y, y));
        },
        params, 1e-6, 1e-8);
    INFO("worst " << rep.worst_param << "[" << rep.worst_index << "] analytic " << rep.analytic
                  << " numeric " << rep.numeric);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("encoder params: container round trip") {
    FuEncoderParams p = tiny_encoder(30);
    Container c;
    c.kind = "probe";
    p.write_to(c, "enc.");
    FuEncoderParams q = FuEncoderParams::read_from(c, "enc.");
    auto a = p.named_params(), b = q.named_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.values() == b[i].second.values());
    }
    CHECK(q.d_content == p.d_content);
    CHECK(q.heads == p.heads);
    CHECK(q.dropout == p.dropout);
}
