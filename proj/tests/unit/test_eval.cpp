#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "maescale/corpus.hpp"
#include "maescale/error.hpp"
#include "maescale/eval.hpp"
#include "maescale/random.hpp"
#include "oracles/reference.hpp"

using namespace maescale;

namespace {

std::vector<int> balanced_labels(std::size_t n, int k) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    return y;
}

MaeModelConfig small_model() {
    MaeModelConfig c;
    c.embed_dim = 8;
    c.heads = 2;
    c.decoder_dim = 4;
    c.image_side = 8;
    return c;
}

}  // namespace

TEST(Protocol, NamesAndFractions) {
    EXPECT_EQ(EvalProtocol::no_finetune().name(), "NO_FINETUNE");
    EXPECT_EQ(EvalProtocol::finetune_two_percent().name(), "FINETUNE_2PCT");
    EXPECT_EQ(EvalProtocol::finetune_two_percent().label_fraction, 0.02);
    EXPECT_EQ(EvalProtocol::parse("FINETUNE_2PCT"), EvalProtocol::finetune_two_percent());
    EXPECT_THROW(EvalProtocol::parse("FULL"), DomainError);
}

TEST(Split, DisjointCoveringAndStratified) {
    const auto y = balanced_labels(1000, 4);
    const auto s = stratified_split(y, 0.2, 3);
    EXPECT_EQ(s.eval.size(), 200u);
    EXPECT_EQ(s.train.size(), 800u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (std::size_t i : s.eval) EXPECT_TRUE(all.insert(i).second) << "overlap at " << i;
    EXPECT_EQ(all.size(), 1000u);
    std::vector<int> per_class(4, 0);
    for (std::size_t i : s.eval) ++per_class[static_cast<std::size_t>(y[i])];
    EXPECT_EQ(per_class, (std::vector<int>{50, 50, 50, 50}));
    EXPECT_EQ(stratified_split(y, 0.2, 3).eval, s.eval);
    EXPECT_NE(stratified_split(y, 0.2, 4).eval, s.eval);
}

TEST(Probe, OneHotFeaturesAreClassifiedPerfectly) {
    const auto y = balanced_labels(200, 5);
    Matrix x(200, 5);
    for (std::size_t i = 0; i < 200; ++i) x(i, static_cast<std::size_t>(y[i])) = 1.0;
    const auto r = linear_probe(x, y, 0.2, 1e-6, 1);
    EXPECT_EQ(r.accuracy_pct, 100.0);
    EXPECT_EQ(r.n_eval, 40u);
}

TEST(Probe, ConstantFeaturesFallToTheLowestClass) {
    const auto y = balanced_labels(100, 4);
    Matrix x(100, 3, 0.7);
    const auto r = linear_probe(x, y, 0.2, 1e-4, 2);
    EXPECT_EQ(r.accuracy_pct, 25.0);
}

TEST(Probe, MatchesNormalEquationsOracleOnPlantedData) {
    Rng rng(8);
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    Matrix x(20, 2);
    for (std::size_t i = 0; i < 20; ++i) {
        const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
        x(i, 0) = u;
        x(i, 1) = v;
        rows.push_back({u, v});
        y.push_back(u + 0.5 * v + rng.uniform(-0.3, 0.3) > 0 ? 1 : 0);
    }
    const auto probe = linear_probe_detailed(x, y, 0.25, 1e-3, 5);
    const auto expected = oracle::ridge_predict(rows, y, probe.split.train, probe.split.eval, 2, 1e-3);
    std::size_t correct = 0;
    for (std::size_t k = 0; k < probe.split.eval.size(); ++k) {
        EXPECT_EQ(probe.head.predict(x.row(probe.split.eval[k])), expected[k]);
        correct += expected[k] == y[probe.split.eval[k]];
    }
    EXPECT_DOUBLE_EQ(probe.report.accuracy_pct,
                     100.0 * static_cast<double>(correct) / static_cast<double>(probe.split.eval.size()));
}

TEST(Probe, SingularSystemWithoutRidgeIsANumericError) {
    const auto y = balanced_labels(40, 2);
    Matrix x(40, 2, 1.0);
    EXPECT_THROW(linear_probe(x, y, 0.2, 0.0, 1), NumericError);
    EXPECT_NO_THROW(linear_probe(x, y, 0.2, 1e-4, 1));
}

TEST(Probe, NeedsTwoClasses) {
    const std::vector<int> y(30, 0);
    Matrix x(30, 2, 0.0);
    EXPECT_THROW(linear_probe(x, y, 0.2, 1e-4, 1), DomainError);
}

TEST(Features, DeterministicAndPermutationEquivariant) {
    const auto c = small_model();
    const auto corpus = build_synthetic_corpus(12, reference_mixture(), 3, 8, 2);
    const auto p = ParameterStore::initialize(c, 3);
    const auto f = extract_features(p, c, corpus);
    EXPECT_EQ(f, extract_features(p, c, corpus));
    auto reversed = corpus;
    std::reverse(reversed.records.begin(), reversed.records.end());
    const auto g = extract_features(p, c, reversed);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto a = f.row(i);
        const auto b = g.row(corpus.size() - 1 - i);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST(Features, ConstantEncoderOutputGivesConstantFeatures) {
    const auto c = small_model();
    const auto corpus = build_synthetic_corpus(6, reference_mixture(), 3, 8, 2);
    auto p = ParameterStore::zeros(c);
    // Zero gain on the final norm leaves only its bias.
    auto bias = p.tensor("encoder.norm.bias");
    for (std::size_t k = 0; k < bias.size(); ++k) bias[k] = 0.25 * static_cast<double>(k);
    const auto f = extract_features(p, c, corpus);
    for (std::size_t i = 0; i < f.rows(); ++i) {
        for (std::size_t k = 0; k < f.cols(); ++k) EXPECT_DOUBLE_EQ(f(i, k), 0.25 * static_cast<double>(k));
    }
}

TEST(Features, NonFiniteParametersAreRejected) {
    const auto c = small_model();
    const auto corpus = build_synthetic_corpus(4, reference_mixture(), 2, 8, 2);
    auto p = ParameterStore::initialize(c, 3);
    p.values()[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(extract_features(p, c, corpus), DomainError);
}

TEST(Finetune, LabelSubsetIsTwoPercentAndStratified) {
    const auto y = balanced_labels(1000, 4);
    const auto split = stratified_split(y, 0.2, 1);
    const auto subset = two_percent_label_subset(y, split.train, 4, 9);
    EXPECT_EQ(subset.size(), 20u);
    std::vector<int> per_class(4, 0);
    std::set<std::size_t> eval(split.eval.begin(), split.eval.end());
    for (std::size_t i : subset) {
        ++per_class[static_cast<std::size_t>(y[i])];
        EXPECT_EQ(eval.count(i), 0u);
    }
    EXPECT_EQ(per_class, (std::vector<int>{5, 5, 5, 5}));
}

TEST(Finetune, TooFewLabelsOrMissingClassIsAnError) {
    const auto y4 = balanced_labels(100, 4);
    const auto split = stratified_split(y4, 0.2, 1);
    EXPECT_THROW(two_percent_label_subset(y4, split.train, 4, 1), DomainError);

    std::vector<int> skewed(100, 0);
    skewed[3] = 1;
    std::vector<std::size_t> pool(100);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    try {
        two_percent_label_subset(skewed, pool, 2, 1);
        FAIL() << "expected a missing-class error";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
    }
}

TEST(Finetune, ZeroLearningRateFromProbeHeadReproducesProbeAccuracy) {
    const auto c = small_model();
    const auto corpus = build_synthetic_corpus(300, reference_mixture(), 3, 8, 4);
    const auto p = ParameterStore::initialize(c, 5);
    const auto labels = manifest_labels(corpus);
    const auto probe = linear_probe_detailed(extract_features(p, c, corpus), labels, 0.2, 1e-4, 6);
    FinetuneOptions options;
    options.initial_head = probe.head;
    const auto r = finetune_two_percent(p, c, corpus, {2, 4, 0.0}, 6, options);
    EXPECT_EQ(r.accuracy_pct, probe.report.accuracy_pct);
    EXPECT_EQ(r.n_eval, probe.report.n_eval);
}

TEST(Finetune, GradientMatchesCentralDifferences) {
    const auto c = small_model();
    auto p = ParameterStore::initialize(c, 12);
    Rng rng(13);
    for (double& v : p.values()) v += rng.uniform(-0.1, 0.1);
    LinearHead head{Matrix(8, 3), {0.1, -0.2, 0.05}};
    for (double& v : head.weights.data()) v = rng.uniform(-1, 1);
    std::vector<Matrix> x;
    for (int n = 0; n < 3; ++n) {
        Matrix m(static_cast<std::size_t>(c.patch_count()), static_cast<std::size_t>(c.patch_dim()));
        for (double& v : m.data()) v = rng.uniform01();
        x.push_back(m);
    }
    const std::vector<int> y{2, 0, 1};
    const auto g = finetune_loss_and_gradient(p, c, head, x, y);

    std::vector<double> flat(p.values().begin(), p.values().end());
    flat.insert(flat.end(), head.weights.data().begin(), head.weights.data().end());
    flat.insert(flat.end(), head.bias.begin(), head.bias.end());
    const auto numeric = oracle::central_differences(
        flat,
        [&](const std::vector<double>& v) {
            ParameterStore q = p;
            LinearHead h = head;
            std::copy_n(v.begin(), q.size(), q.values().begin());
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(q.size()), h.weights.data().size(),
                        h.weights.data().begin());
            std::copy(v.end() - 3, v.end(), h.bias.begin());
            return finetune_loss_and_gradient(q, c, h, x, y).loss;
        },
        1e-5);
    std::vector<double> analytic = g.encoder;
    analytic.insert(analytic.end(), g.weights.data().begin(), g.weights.data().end());
    analytic.insert(analytic.end(), g.bias.begin(), g.bias.end());
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-4);
}

TEST(Finetune, DeterministicAndBounded) {
    const auto c = small_model();
    const auto corpus = build_synthetic_corpus(300, reference_mixture(), 3, 8, 4);
    const auto p = ParameterStore::initialize(c, 5);
    const auto a = finetune_two_percent(p, c, corpus, {3, 2, 0.05}, 7);
    const auto b = finetune_two_percent(p, c, corpus, {3, 2, 0.05}, 7);
    EXPECT_EQ(a.accuracy_pct, b.accuracy_pct);
    EXPECT_GE(a.accuracy_pct, 0.0);
    EXPECT_LE(a.accuracy_pct, 100.0);
    EXPECT_EQ(a.protocol, EvalProtocol::finetune_two_percent());
    EXPECT_EQ(a.n_eval, 60u);
}
