#pragma once

// A small masked-autoencoder vision transformer with hand-written reverse-mode
// gradients. Everything runs in double precision on one thread per model.
//
// Architecture (pre-norm transformer blocks, GELU MLP of width 4 * dim):
//   patches --linear--> + encoder position --blocks--> norm --> latents   (visible only)
//   latents --linear--> scatter into full grid, mask token elsewhere
//          + decoder position --blocks--> norm --linear--> pixel patches  (all positions)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maescale/corpus.hpp"
#include "maescale/matrix.hpp"

namespace maescale {

inline constexpr double kDefaultMaskRatio = 0.8;
inline constexpr int kMlpRatio = 4;

struct MaeModelConfig {
    int patch_size = 4;
    int embed_dim = 16;
    int depth = 1;
    int heads = 2;
    int decoder_dim = 16;
    int decoder_depth = 1;
    int image_side = 16;
    int channels = 1;

    // Throws DomainError on inconsistent fields. Decoder attention reuses
    // `heads`, so decoder_dim must be divisible by it as well.
    void validate() const;

    int grid_side() const noexcept { return image_side / patch_size; }
    int patch_count() const noexcept { return grid_side() * grid_side(); }
    int patch_dim() const noexcept { return patch_size * patch_size * channels; }

    friend bool operator==(const MaeModelConfig&, const MaeModelConfig&) = default;
};

struct NamedConfig {
    std::string name;
    MaeModelConfig config;
};

struct SizeLadder {
    std::vector<NamedConfig> entries;

    const NamedConfig& at(const std::string& name) const;
    bool contains(const std::string& name) const;
};

// TOY-A < TOY-B < TOY-C < TOY-D at the given side (patch size 4). The
// TOY-D / TOY-A parameter ratio lies in [25, 31] for sides 16, 24 and 32.
SizeLadder size_ladder(int image_side);

enum class TensorKind : std::uint8_t { Weight, Bias, Gain, Embedding };

struct TensorSlot {
    std::string name;
    TensorKind kind = TensorKind::Weight;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const noexcept { return rows * cols; }

    friend bool operator==(const TensorSlot&, const TensorSlot&) = default;
};

// Named, contiguous, non-overlapping views into one flat parameter array.
class ParameterLayout {
public:
    static ParameterLayout for_model(const MaeModelConfig& config);

    const TensorSlot& add(std::string name, TensorKind kind, std::size_t rows, std::size_t cols);
    const TensorSlot& slot(const std::string& name) const;
    const std::vector<TensorSlot>& slots() const noexcept { return slots_; }
    std::size_t total() const noexcept { return total_; }

    friend bool operator==(const ParameterLayout&, const ParameterLayout&) = default;

private:
    std::vector<TensorSlot> slots_;
    std::size_t total_ = 0;
};

std::size_t parameter_count(const MaeModelConfig& config);

class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(ParameterLayout layout, std::uint64_t seed);

    // Weights and embeddings ~ U[-s, s], s = sqrt(6 / (rows + cols));
    // biases 0; layer-norm gains 1.
    static ParameterStore initialize(const MaeModelConfig& config, std::uint64_t seed);
    static ParameterStore zeros(const MaeModelConfig& config);

    const ParameterLayout& layout() const noexcept { return layout_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> tensor(const std::string& name);
    std::span<const double> tensor(const std::string& name) const;

    bool all_finite() const noexcept;

    friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
        return a.seed_ == b.seed_ && a.values_ == b.values_;
    }

private:
    ParameterLayout layout_;
    std::uint64_t seed_ = 0;
    std::vector<double> values_;
};

// Sorted masked patch indices out of `total`.
struct MaskSet {
    std::vector<int> masked;
    int total = 0;

    // Validates sortedness, uniqueness and range; does not enforce the
    // sampling cardinality law.
    static MaskSet from_indices(std::vector<int> masked, int total);
    static MaskSet none(int total) { return {{}, total}; }

    bool is_masked(int patch) const;
    std::vector<int> visible() const;
};

// min(round(ratio * total), total - 1)
int masked_count(int total_patches, double mask_ratio);

MaskSet sample_mask(int total_patches, double mask_ratio, std::uint64_t seed);

// Row-major patch order; each row holds patch_size^2 * channels values laid out
// row by row, channel-interleaved.
Matrix patchify(std::span<const double> pixels, int width, int height, int channels,
                int patch_size);
Matrix patchify(const ImageRecord& image, int patch_size);
std::vector<double> unpatchify(const Matrix& patches, int width, int height, int channels,
                               int patch_size);

struct ForwardResult {
    Matrix reconstruction;  // patch_count x patch_dim
    Matrix latents;         // visible patches x embed_dim
};

ForwardResult forward(const ParameterStore& params, const MaeModelConfig& config,
                      const Matrix& patches, const MaskSet& mask);

// Mean over masked patches of the per-patch mean squared pixel error.
double mae_loss(const Matrix& reconstruction, const Matrix& target, const MaskSet& mask);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // same layout as the ParameterStore
};

LossAndGradient loss_and_gradient(const ParameterStore& params, const MaeModelConfig& config,
                                  const Matrix& patches, const MaskSet& mask);

std::vector<double> gradient(const ParameterStore& params, const MaeModelConfig& config,
                             const Matrix& patches, const MaskSet& mask);

struct TrainSchedule {
    int epochs = 5;
    int batch_size = 16;
    double learning_rate = 0.3;
    std::uint64_t seed = 0;
    double mask_ratio = kDefaultMaskRatio;
};

struct TrainResult {
    ParameterStore params;
    std::vector<double> loss_trace;  // mean loss per epoch
};

// Plain SGD. The mask for an image depends only on (schedule.seed, record id),
// so every epoch reconstructs the same masked views; the batch order is
// reshuffled per epoch. Throws TrainingDiverged on a non-finite batch loss.
TrainResult train(ParameterStore params, const MaeModelConfig& config,
                  const CorpusManifest& manifest, const TrainSchedule& schedule);

// Checkpoint: one line of JSON (config, parameter count, seed), then the flat
// parameter array as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const MaeModelConfig& config,
                     const ParameterStore& params);

struct Checkpoint {
    MaeModelConfig config;
    ParameterStore params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// CSV with header "epoch,mean_loss".
void save_loss_trace(const std::filesystem::path& path, std::span<const double> trace);

}  // namespace maescale
