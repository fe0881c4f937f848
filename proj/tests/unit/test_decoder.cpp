#include <doctest.h>

#include <cmath>

#include "entailkg/decoder.h"
#include "entailkg/rng.h"
#include "support/oracles.h"
#include "support/toy_kg.h"

using namespace entailkg;

namespace {

DecoderShape shape(std::size_t n, std::size_t rels, std::size_t d, std::size_t k, std::size_t w,
                   Padding pad = Padding::right) {
    return DecoderShape{n, rels, d, k, w, pad};
}

// Resamples until every pre-activation clears the ReLU kink by 1e-4.
DecoderParams kink_free_params(const DecoderShape& s, std::uint64_t seed, NodeId h, RelationId r) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        auto p = toy::random_params(s, Rng::derive(seed, attempt));
        const oracle::Member m{h, h, r};
        if (oracle::min_abs_pre(oracle::Model::from(p), std::span(&m, 1)) >= 1e-4L) return p;
    }
}

}  // namespace

TEST_CASE("conv_feature: zero kernels give a zero map") {
    auto p = toy::random_params(shape(3, 2, 4, 3, 2), 1);
    std::fill(p.kernel.begin(), p.kernel.end(), 0.0f);
    for (double x : conv_feature(p, 1, 0)) CHECK(x == 0.0);
}

TEST_CASE("conv_feature: identity kernel copies the head row") {
    auto p = toy::random_params(shape(3, 2, 5, 1, 1), 2);
    p.tap(0, 0, 0) = 1.0f;
    p.tap(0, 1, 0) = 0.0f;
    const auto m = conv_feature(p, 2, 1);
    for (std::size_t n = 0; n < 5; ++n) CHECK(m[n] == p.entity_row(2)[n]);
}

TEST_CASE("conv_feature: hand example with right padding") {
    DecoderParams p(shape(1, 1, 3, 1, 2));
    p.entity = {1, 2, 3};
    p.relation = {4, 5, 6};
    p.tap(0, 0, 0) = 1;
    p.tap(0, 0, 1) = 1;
    const auto m = conv_feature(p, 0, 0);
    CHECK(m == std::vector<double>{3, 5, 3});

    const auto oracle_m = oracle::conv(oracle::Model::from(p), oracle::Model::from(p).entity,
                                       oracle::Model::from(p).relation);
    for (std::size_t n = 0; n < 3; ++n) CHECK(m[n] == static_cast<double>(oracle_m[n]));
}

TEST_CASE("conv_feature: centered padding shifts taps") {
    DecoderParams p(shape(1, 1, 3, 1, 3, Padding::centered));
    p.entity = {1, 2, 3};
    p.relation = {0, 0, 0};
    p.tap(0, 0, 0) = 1;  // reads e(n - 1)
    CHECK(conv_feature(p, 0, 0) == std::vector<double>{0, 1, 2});
}

TEST_CASE("conv_feature: linear in the head row") {
    const auto p = toy::random_params(shape(2, 1, 6, 3, 3), 3);
    const auto a = p.entity_row(0), b = p.entity_row(1);
    const double alpha = 0.7, beta = -1.3;
    std::vector<float> mix(6), zero_rel(6, 0.0f);
    for (std::size_t i = 0; i < 6; ++i) mix[i] = static_cast<float>(alpha * a[i] + beta * b[i]);
    const auto r = p.relation_row(0);
    const auto lhs = conv_feature(p, mix, r);
    const auto ca = conv_feature(p, a, r), cb = conv_feature(p, b, r), cr = conv_feature(p, zero_rel, r);
    // Affine in the head with the relation term entering once.
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double rhs = alpha * (ca[i] - cr[i]) + beta * (cb[i] - cr[i]) + cr[i];
        CHECK(lhs[i] == doctest::Approx(rhs).epsilon(1e-6));
    }
}

TEST_CASE("score_all: zero kernels and projection give 0.5 everywhere") {
    auto p = toy::random_params(shape(4, 2, 3, 2, 3), 4);
    std::fill(p.kernel.begin(), p.kernel.end(), 0.0f);
    std::fill(p.projection.begin(), p.projection.end(), 0.0f);
    for (double s : score_all(p, 0, 1)) CHECK(s == 0.5);
}

TEST_CASE("score_all: matches the scalar oracle and stays in (0, 1)") {
    const auto p = toy::random_params(shape(5, 4, 4, 2, 3), 5);
    const auto m = oracle::Model::from(p);
    for (NodeId h = 0; h < 5; ++h) {
        for (RelationId r = 0; r < 4; ++r) {
            const auto s = score_all(p, h, r);
            const auto ref = oracle::forward(m, h, r).logits;
            for (std::size_t t = 0; t < 5; ++t) {
                CHECK(std::abs(s[t] - static_cast<double>(oracle::sigmoid(ref[t]))) < 1e-6);
                CHECK(s[t] > 0.0);
                CHECK(s[t] < 1.0);
            }
        }
    }
}

TEST_CASE("score_all: tape does not change scores") {
    const auto p = toy::random_params(shape(6, 2, 5, 2, 3), 6);
    Tape tape;
    CHECK(score_all(p, 3, 1, &tape) == score_all(p, 3, 1));
    CHECK(tape.head == 3);
    CHECK(tape.relation == 1);
}

TEST_CASE("score_all: invalid ids throw") {
    const auto p = toy::random_params(shape(3, 2, 2, 1, 1), 7);
    CHECK_THROWS_AS(score_all(p, 3, 0), std::out_of_range);
    CHECK_THROWS_AS(score_all(p, 0, 2), std::out_of_range);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    const auto p = toy::random_params(shape(6, 2, 5, 2, 3), 8);
    Tape tape;
    score_logits(p, 1, 0, &tape);
    Gradients g(p.shape);
    backward(p, tape, std::vector<double>(6, 0.0), g);
    CHECK(g.squared_norm() == 0.0);
}

TEST_CASE("backward: repeated calls give identical gradients") {
    const auto p = toy::random_params(shape(6, 2, 5, 2, 3), 9);
    Tape tape;
    score_logits(p, 2, 1, &tape);
    std::vector<double> up{0.3, -0.2, 0.1, 0.5, -0.4, 0.05};
    Gradients a(p.shape), b(p.shape);
    backward(p, tape, up, a);
    backward(p, tape, up, b);
    CHECK(a.entity == b.entity);
    CHECK(a.relation == b.relation);
    CHECK(a.kernel == b.kernel);
    CHECK(a.projection == b.projection);
}

TEST_CASE("backward: shape mismatches throw") {
    const auto p = toy::random_params(shape(6, 2, 5, 2, 3), 10);
    Tape tape;
    score_logits(p, 2, 1, &tape);
    Gradients g(p.shape);
    CHECK_THROWS_AS(backward(p, tape, std::vector<double>(5, 0.0), g), std::invalid_argument);
    Gradients wrong(shape(6, 2, 4, 2, 3));
    CHECK_THROWS_AS(backward(p, tape, std::vector<double>(6, 0.0), wrong), std::invalid_argument);
    CHECK_THROWS_AS(backward_from_scores(p, tape, std::vector<double>(7, 0.0), g), std::invalid_argument);
}

TEST_CASE("backward: matches central finite differences over 20 seeds") {
    const auto s = shape(6, 3, 5, 2, 3);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CAPTURE(seed);
        const NodeId h = static_cast<NodeId>(seed % 6);
        const RelationId r = static_cast<RelationId>(seed % 3);
        const auto p = kink_free_params(s, seed, h, r);
        Rng rng(seed + 100);
        std::vector<double> up(6);
        for (auto& x : up) x = 2.0 * rng.uniform01() - 1.0;

        Tape tape;
        score_logits(p, h, r, &tape);
        Gradients g(s);
        backward(p, tape, up, g);

        const oracle::Member member{h, h, r};
        const auto check = oracle::finite_difference_check(
            p, g,
            [&](const oracle::Model& m) {
                const auto logits = oracle::forward(m, h, r).logits;
                oracle::Real total = 0;
                for (std::size_t t = 0; t < up.size(); ++t) total += up[t] * logits[t];
                return total;
            },
            1e-3L, 1e-6, 0xF,
            [&](const oracle::Model& m) { return oracle::relu_pattern(m, std::span(&member, 1)); });
        CHECK_FALSE(check.kink_crossed);
        CHECK(check.compared == p.parameter_count());
        CHECK(check.max_rel_error < 1e-4);
    }
}

TEST_CASE("backward_from_scores chains through the sigmoid") {
    const auto p = toy::random_params(shape(4, 2, 3, 2, 3), 11);
    Tape tape;
    const auto logits = score_logits(p, 1, 1, &tape);
    std::vector<double> up{0.4, -0.1, 0.2, 0.3}, chained(4);
    for (std::size_t t = 0; t < 4; ++t) chained[t] = up[t] * sigmoid(logits[t]) * (1 - sigmoid(logits[t]));
    Gradients a(p.shape), b(p.shape);
    backward_from_scores(p, tape, up, a);
    backward(p, tape, chained, b);
    CHECK(a.projection == b.projection);
    CHECK(a.entity == b.entity);
}

TEST_CASE("parameter count matches the layout") {
    const auto s = shape(7, 6, 5, 4, 3);
    const DecoderParams p(s);
    CHECK(p.parameter_count() == 7 * 5 + 6 * 5 + 4 * 2 * 3 + 4 * 5 * 5);
}

TEST_CASE("init_decoder: copies supplied entity rows and validates shape") {
    const auto s = shape(3, 2, 2, 1, 1);
    EmbeddingMatrix emb(3, 2, {1, 0, 0, 1, 0.6f, 0.8f});
    const auto p = init_decoder(s, {.seed = 4}, &emb);
    CHECK(p.entity == std::vector<float>(emb.data().begin(), emb.data().end()));
    CHECK(p == init_decoder(s, {.seed = 4}, &emb));
    CHECK_FALSE(p == init_decoder(s, {.seed = 5}, &emb));
    EmbeddingMatrix wrong(3, 3, std::vector<float>(9, 0.5f));
    CHECK_THROWS_AS(init_decoder(s, {}, &wrong), std::invalid_argument);
    CHECK_THROWS_AS(init_decoder(shape(0, 1, 1, 1, 1), {}), std::invalid_argument);
}

TEST_CASE("dropout: requires an rng and rescales survivors") {
    const auto p = toy::random_params(shape(4, 2, 8, 2, 3), 12);
    CHECK_THROWS_AS(score_logits(p, 0, 0, nullptr, {.dropout = 0.5}), std::invalid_argument);
    Rng rng(3);
    Tape tape;
    score_logits(p, 0, 0, &tape, {.dropout = 0.5, .dropout_rng = &rng});
    REQUIRE(tape.dropout_mask.size() == 8);
    for (double m : tape.dropout_mask) CHECK((m == 0.0 || m == 2.0));
}
