#pragma once

// Downstream evaluation of a pretrained encoder: frozen-feature linear probing
// and fine-tuning on a 2% labelled subset.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maescale/corpus.hpp"
#include "maescale/mae.hpp"
#include "maescale/matrix.hpp"

namespace maescale {

inline constexpr double kFinetuneLabelFraction = 0.02;
inline constexpr double kDefaultEvalSplit = 0.2;
inline constexpr double kDefaultRidge = 1e-4;

enum class EvalKind : std::uint8_t { NoFinetune, Finetune2Pct };

struct EvalProtocol {
    EvalKind kind = EvalKind::NoFinetune;
    double label_fraction = 1.0;

    static EvalProtocol no_finetune() { return {EvalKind::NoFinetune, 1.0}; }
    static EvalProtocol finetune_two_percent() {
        return {EvalKind::Finetune2Pct, kFinetuneLabelFraction};
    }

    // "NO_FINETUNE" / "FINETUNE_2PCT"
    std::string name() const;
    static EvalProtocol parse(std::string_view name);

    friend bool operator==(const EvalProtocol&, const EvalProtocol&) = default;
};

struct EvalReport {
    double accuracy_pct = 0.0;  // 100 * n_correct / n_eval
    EvalProtocol protocol;
    std::size_t n_eval = 0;
    std::size_t n_correct = 0;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> eval;   // ascending
};

// Holds out round(eval_fraction * N) examples, apportioned over classes by
// largest remainder and drawn per class under `seed`.
SplitIndices stratified_split(std::span<const int> labels, double eval_fraction,
                              std::uint64_t seed);

// Encoder applied with every patch visible; one row per record holding the
// mean of its patch latents. Throws DomainError on non-finite parameters.
Matrix extract_features(const ParameterStore& params, const MaeModelConfig& config,
                        const CorpusManifest& manifest);

std::vector<int> manifest_labels(const CorpusManifest& manifest);

struct LinearHead {
    Matrix weights;             // feature_dim x classes
    std::vector<double> bias;   // classes

    std::vector<double> scores(std::span<const double> feature) const;
    // argmax; ties go to the lowest class index
    int predict(std::span<const double> feature) const;
};

// Ridge regression onto one-hot targets over the selected rows. An intercept
// column is appended and penalised together with the weights.
LinearHead fit_ridge_head(const Matrix& features, std::span<const int> labels,
                          std::span<const std::size_t> rows, int class_count, double ridge);

struct ProbeResult {
    EvalReport report;
    LinearHead head;
    SplitIndices split;
};

ProbeResult linear_probe_detailed(const Matrix& features, std::span<const int> labels,
                                  double eval_split, double ridge, std::uint64_t seed);

EvalReport linear_probe(const Matrix& features, std::span<const int> labels, double eval_split,
                        double ridge, std::uint64_t seed);

struct FinetuneSchedule {
    int epochs = 10;
    int batch_size = 8;
    double learning_rate = 1e-4;  // larger steps collapse the encoder with only 2% of labels
};

struct FinetuneOptions {
    double eval_split = kDefaultEvalSplit;
    double ridge = kDefaultRidge;
    // Defaults to a ridge head fitted on the 2% subset's frozen features.
    std::optional<LinearHead> initial_head;
};

// round(0.02 * N) training-pool indices, stratified by class. Throws
// DomainError if that is fewer than the class count or a class ends up empty.
std::vector<std::size_t> two_percent_label_subset(std::span<const int> labels,
                                                  std::span<const std::size_t> train_pool,
                                                  int class_count, std::uint64_t seed);

struct FinetuneGradient {
    double loss = 0.0;            // summed softmax cross-entropy
    std::vector<double> encoder;  // same layout as the ParameterStore
    Matrix weights;
    std::vector<double> bias;
};

// Cross-entropy of head(mean-pooled encoder output) summed over the examples,
// with its gradient in the encoder parameters and the head.
FinetuneGradient finetune_loss_and_gradient(const ParameterStore& params, const MaeModelConfig& config,
                                            const LinearHead& head, std::span<const Matrix> patches,
                                            std::span<const int> labels);

EvalReport finetune_two_percent(const ParameterStore& params, const MaeModelConfig& config,
                                const CorpusManifest& manifest, const FinetuneSchedule& schedule,
                                std::uint64_t seed, const FinetuneOptions& options = {});

}  // namespace maescale
