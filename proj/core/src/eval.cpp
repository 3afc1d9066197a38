#include "maescale/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mae_network.hpp"
#include "maescale/error.hpp"
#include "maescale/random.hpp"

namespace maescale {

namespace {

int infer_class_count(std::span<const int> labels) {
    int k = 0;
    for (int l : labels) {
        if (l < 0) throw DomainError("labels must be nonnegative");
        k = std::max(k, l + 1);
    }
    return k;
}

// Seeded per-class draw of `share[c]` members out of `pool`.
std::vector<std::size_t> stratified_draw(std::span<const int> labels,
                                         std::span<const std::size_t> pool, int class_count,
                                         std::size_t total, std::uint64_t seed,
                                         std::uint64_t stream, std::vector<std::size_t>* shares_out) {
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(class_count));
    for (std::size_t i : pool) members[static_cast<std::size_t>(labels[i])].push_back(i);
    std::vector<std::size_t> counts;
    for (const auto& m : members) counts.push_back(m.size());
    const auto shares = apportion_counts(total, counts);

    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < members.size(); ++c) {
        auto& m = members[c];
        Rng rng(hash_words({seed, stream, c}));
        for (std::size_t k = 0; k < shares[c]; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.below(m.size() - k));
            std::swap(m[k], m[j]);
            chosen.push_back(m[k]);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    if (shares_out) *shares_out = shares;
    return chosen;
}

// Cholesky solve of the SPD system a * x = b (b has several columns).
Matrix solve_spd(Matrix a, Matrix b, bool ridge_free) {
    const std::size_t n = a.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double floor = 1e-12 * std::max(max_diag, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > (ridge_free ? floor : 0.0))) {
            throw NumericError(
                "normal matrix of the linear probe is singular; use a ridge penalty > 0");
        }
        const double l = std::sqrt(d);
        a(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / l;
        }
    }
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b(k, c);
            b(i, c) = s / a(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = b(i, c);
            for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b(k, c);
            b(i, c) = s / a(i, i);
        }
    }
    return b;
}

EvalReport score_split(const LinearHead& head, const Matrix& features,
                       std::span<const int> labels, std::span<const std::size_t> rows) {
    EvalReport report;
    report.n_eval = rows.size();
    for (std::size_t r : rows) {
        if (head.predict(features.row(r)) == labels[r]) ++report.n_correct;
    }
    report.accuracy_pct = rows.empty() ? 0.0
                                       : 100.0 * static_cast<double>(report.n_correct) /
                                             static_cast<double>(report.n_eval);
    return report;
}

}  // namespace

std::string EvalProtocol::name() const {
    return kind == EvalKind::NoFinetune ? "NO_FINETUNE" : "FINETUNE_2PCT";
}

EvalProtocol EvalProtocol::parse(std::string_view name) {
    if (name == "NO_FINETUNE") return no_finetune();
    if (name == "FINETUNE_2PCT") return finetune_two_percent();
    throw DomainError("unknown evaluation protocol: " + std::string(name));
}

SplitIndices stratified_split(std::span<const int> labels, double eval_fraction,
                              std::uint64_t seed) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw DomainError("evaluation split must lie in (0, 1)");
    }
    if (labels.empty()) throw DomainError("cannot split an empty label set");
    const int k = infer_class_count(labels);
    const auto n_eval =
        static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(labels.size())));
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    SplitIndices split;
    split.eval = stratified_draw(labels, all, k, n_eval, seed, fnv1a64("eval-split"), nullptr);
    std::vector<char> held(labels.size(), 0);
    for (std::size_t i : split.eval) held[i] = 1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!held[i]) split.train.push_back(i);
    }
    return split;
}

std::vector<int> manifest_labels(const CorpusManifest& manifest) {
    std::vector<int> labels;
    labels.reserve(manifest.size());
    for (const auto& rec : manifest.records) {
        if (!rec.label) throw DomainError("record " + rec.id + " has no label");
        labels.push_back(*rec.label);
    }
    return labels;
}

Matrix extract_features(const ParameterStore& params, const MaeModelConfig& config,
                        const CorpusManifest& manifest) {
    config.validate();
    if (params.size() != parameter_count(config)) {
        throw DomainError("parameter store does not match the model config");
    }
    if (!params.all_finite()) throw DomainError("parameters contain non-finite values");
    const auto slots = net::resolve_slots(params.layout(), config);
    Matrix features(manifest.size(), static_cast<std::size_t>(config.embed_dim));
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& rec = manifest.records[i];
        if (rec.width != config.image_side || rec.height != config.image_side ||
            rec.channels != config.channels) {
            throw DomainError("record " + rec.id + " does not match the model input size");
        }
        const auto f = net::pooled_features(params.values(), slots, config,
                                            patchify(rec, config.patch_size));
        std::copy(f.begin(), f.end(), features.row(i).begin());
    }
    return features;
}

std::vector<double> LinearHead::scores(std::span<const double> feature) const {
    std::vector<double> s = bias;
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        const auto wr = weights.row(i);
        for (std::size_t c = 0; c < s.size(); ++c) s[c] += feature[i] * wr[c];
    }
    return s;
}

int LinearHead::predict(std::span<const double> feature) const {
    const auto s = scores(feature);
    int best = 0;
    for (std::size_t c = 1; c < s.size(); ++c) {
        if (s[c] > s[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    }
    return best;
}

LinearHead fit_ridge_head(const Matrix& features, std::span<const int> labels,
                          std::span<const std::size_t> rows, int class_count, double ridge) {
    if (!(ridge >= 0.0)) throw DomainError("ridge penalty must be nonnegative");
    if (class_count < 1) throw DomainError("class count must be positive");
    const std::size_t d = features.cols();
    const std::size_t n = d + 1;
    const auto k = static_cast<std::size_t>(class_count);
    Matrix gram(n, n);
    Matrix rhs(n, k);
    std::vector<double> x(n, 1.0);
    for (std::size_t r : rows) {
        const auto fr = features.row(r);
        std::copy(fr.begin(), fr.end(), x.begin());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) gram(i, j) += x[i] * x[j];
            rhs(i, static_cast<std::size_t>(labels[r])) += x[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        gram(i, i) += ridge;
        for (std::size_t j = 0; j < i; ++j) gram(j, i) = gram(i, j);
    }
    const Matrix solution = solve_spd(std::move(gram), std::move(rhs), ridge == 0.0);
    LinearHead head;
    head.weights = Matrix(d, k);
    head.bias.assign(k, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t c = 0; c < k; ++c) head.weights(i, c) = solution(i, c);
    }
    for (std::size_t c = 0; c < k; ++c) head.bias[c] = solution(d, c);
    return head;
}

ProbeResult linear_probe_detailed(const Matrix& features, std::span<const int> labels,
                                  double eval_split, double ridge, std::uint64_t seed) {
    if (features.rows() != labels.size()) {
        throw DomainError("feature rows and labels differ in count");
    }
    ProbeResult result;
    result.split = stratified_split(labels, eval_split, seed);
    std::vector<char> present(static_cast<std::size_t>(infer_class_count(labels)), 0);
    for (std::size_t i : result.split.train) present[static_cast<std::size_t>(labels[i])] = 1;
    if (std::count(present.begin(), present.end(), 1) < 2) {
        throw DomainError("linear probe needs at least two classes in the training split");
    }
    result.head = fit_ridge_head(features, labels, result.split.train,
                                 static_cast<int>(present.size()), ridge);
    result.report = score_split(result.head, features, labels, result.split.eval);
    result.report.protocol = EvalProtocol::no_finetune();
    result.report.seed = seed;
    return result;
}

EvalReport linear_probe(const Matrix& features, std::span<const int> labels, double eval_split,
                        double ridge, std::uint64_t seed) {
    return linear_probe_detailed(features, labels, eval_split, ridge, seed).report;
}

std::vector<std::size_t> two_percent_label_subset(std::span<const int> labels,
                                                  std::span<const std::size_t> train_pool,
                                                  int class_count, std::uint64_t seed) {
    const auto n_labels = static_cast<std::size_t>(
        std::llround(kFinetuneLabelFraction * static_cast<double>(labels.size())));
    if (n_labels < static_cast<std::size_t>(class_count)) {
        throw DomainError("2% of " + std::to_string(labels.size()) + " records is " +
                          std::to_string(n_labels) + " labels, fewer than the " +
                          std::to_string(class_count) + " classes");
    }
    std::vector<std::size_t> shares;
    auto chosen = stratified_draw(labels, train_pool, class_count, n_labels, seed,
                                  fnv1a64("finetune-labels"), &shares);
    for (std::size_t c = 0; c < shares.size(); ++c) {
        if (shares[c] == 0) {
            throw DomainError("class " + std::to_string(c) + " is missing from the 2% label subset");
        }
    }
    return chosen;
}

FinetuneGradient finetune_loss_and_gradient(const ParameterStore& params, const MaeModelConfig& config,
                                            const LinearHead& head, std::span<const Matrix> patches,
                                            std::span<const int> labels) {
    if (patches.size() != labels.size()) throw DomainError("patches and labels differ in length");
    const auto dim = static_cast<std::size_t>(config.embed_dim);
    const auto kk = head.bias.size();
    const auto slots = net::resolve_slots(params.layout(), config);
    std::vector<int> all_tokens(static_cast<std::size_t>(config.patch_count()));
    std::iota(all_tokens.begin(), all_tokens.end(), 0);

    FinetuneGradient g;
    g.encoder.assign(params.size(), 0.0);
    g.weights = Matrix(dim, kk);
    g.bias.assign(kk, 0.0);
    for (std::size_t n = 0; n < patches.size(); ++n) {
        const auto trace = net::encode(params.values(), slots, config, patches[n], all_tokens);
        const auto t = static_cast<double>(trace.latents.rows());
        std::vector<double> pooled(dim, 0.0);
        for (std::size_t r = 0; r < trace.latents.rows(); ++r) {
            for (std::size_t c = 0; c < dim; ++c) pooled[c] += trace.latents(r, c) / t;
        }
        auto probs = head.scores(pooled);
        const double top = *std::max_element(probs.begin(), probs.end());
        double z = 0.0;
        for (double& p : probs) z += (p = std::exp(p - top));
        for (double& p : probs) p /= z;
        const auto y = static_cast<std::size_t>(labels[n]);
        if (y >= kk) throw DomainError("label outside the head's classes");
        g.loss -= std::log(std::max(probs[y], 1e-300));

        probs[y] -= 1.0;  // d(loss)/d(logits)
        Matrix d_latents(trace.latents.rows(), dim);
        for (std::size_t c = 0; c < dim; ++c) {
            double d_pooled = 0.0;
            for (std::size_t j = 0; j < kk; ++j) {
                g.weights(c, j) += pooled[c] * probs[j];
                d_pooled += head.weights(c, j) * probs[j];
            }
            for (std::size_t r = 0; r < trace.latents.rows(); ++r) d_latents(r, c) = d_pooled / t;
        }
        for (std::size_t j = 0; j < kk; ++j) g.bias[j] += probs[j];
        net::encode_backward(params.values(), slots, config, trace, d_latents, g.encoder);
    }
    return g;
}

EvalReport finetune_two_percent(const ParameterStore& params, const MaeModelConfig& config,
                                const CorpusManifest& manifest, const FinetuneSchedule& schedule,
                                std::uint64_t seed, const FinetuneOptions& options) {
    if (schedule.epochs < 0 || schedule.batch_size < 1) {
        throw DomainError("fine-tune schedule needs epochs >= 0 and batch_size >= 1");
    }
    const auto labels = manifest_labels(manifest);
    const int k = std::max(manifest.class_count, infer_class_count(labels));
    const auto split = stratified_split(labels, options.eval_split, seed);
    const auto subset = two_percent_label_subset(labels, split.train, k, seed);

    const Matrix frozen = extract_features(params, config, manifest);
    LinearHead head = options.initial_head
                          ? *options.initial_head
                          : fit_ridge_head(frozen, labels, subset, k, options.ridge);
    if (head.weights.rows() != static_cast<std::size_t>(config.embed_dim) ||
        head.bias.size() != static_cast<std::size_t>(k)) {
        throw DomainError("initial head does not match feature size and class count");
    }

    ParameterStore tuned = params;
    std::vector<std::size_t> order = subset;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        Rng rng(hash_words({seed, fnv1a64("finetune-epoch"), static_cast<std::uint64_t>(epoch)}));
        rng.shuffle(std::span<std::size_t>(order));
        int batch = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(schedule.batch_size), ++batch) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
            std::vector<Matrix> x;
            std::vector<int> y;
            for (std::size_t q = start; q < stop; ++q) {
                x.push_back(patchify(manifest.records[order[q]], config.patch_size));
                y.push_back(labels[order[q]]);
            }
            const auto g = finetune_loss_and_gradient(tuned, config, head, x, y);
            if (!std::isfinite(g.loss)) throw TrainingDiverged(epoch, batch);
            const double step = schedule.learning_rate / static_cast<double>(stop - start);
            auto values = tuned.values();
            for (std::size_t j = 0; j < values.size(); ++j) values[j] -= step * g.encoder[j];
            auto w = head.weights.data();
            const auto gw = g.weights.data();
            for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * gw[j];
            for (std::size_t j = 0; j < head.bias.size(); ++j) head.bias[j] -= step * g.bias[j];
        }
    }

    CorpusManifest eval_set;
    eval_set.class_count = manifest.class_count;
    eval_set.mixture = manifest.mixture;
    std::vector<int> eval_labels;
    for (std::size_t i : split.eval) {
        eval_set.records.push_back(manifest.records[i]);
        eval_labels.push_back(labels[i]);
    }
    const Matrix eval_features = extract_features(tuned, config, eval_set);
    std::vector<std::size_t> rows(eval_set.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    EvalReport report = score_split(head, eval_features, eval_labels, rows);
    report.protocol = EvalProtocol::finetune_two_percent();
    report.seed = seed;
    return report;
}

}  // namespace maescale
