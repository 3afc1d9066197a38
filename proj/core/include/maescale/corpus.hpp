#pragma once

// Image-corpus data model, the synthetic corpus generator and the stratified
// subset sampler.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maescale {

enum class SourceKind : std::uint8_t { ImageNet, CelebA, Ade20k, Cifar10, Synthetic };

// Which collection an image came from. Synthetic sources carry an index so a
// manifest can declare any number of them ("SYNTHETIC-0", "SYNTHETIC-1", ...).
struct SourceTag {
    SourceKind kind = SourceKind::ImageNet;
    int index = 0;

    static SourceTag imagenet() { return {SourceKind::ImageNet, 0}; }
    static SourceTag celeba() { return {SourceKind::CelebA, 0}; }
    static SourceTag ade20k() { return {SourceKind::Ade20k, 0}; }
    static SourceTag cifar10() { return {SourceKind::Cifar10, 0}; }
    static SourceTag synthetic(int n) { return {SourceKind::Synthetic, n}; }

    std::string to_string() const;
    static SourceTag parse(std::string_view text);

    friend bool operator==(const SourceTag&, const SourceTag&) = default;
};

struct MixtureEntry {
    SourceTag source;
    double proportion = 0.0;
};

// Ordered source → proportion map. Order matters: it breaks ties during
// apportionment and fixes the column order of every mixture report.
class MixtureSpec {
public:
    MixtureSpec() = default;
    // Throws DomainError unless proportions are nonnegative, sources distinct,
    // and the sum is 1 within 1e-9.
    explicit MixtureSpec(std::vector<MixtureEntry> entries);

    const std::vector<MixtureEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::optional<std::size_t> index_of(const SourceTag& tag) const;
    double proportion(const SourceTag& tag) const;

private:
    std::vector<MixtureEntry> entries_;
};

// ImageNet 0.500, CelebA 0.315, ADE20K 0.135, CIFAR-10 0.050.
MixtureSpec reference_mixture();

struct ImageRecord {
    std::string id;
    SourceTag source;
    int width = 0;
    int height = 0;
    int channels = 1;
    // Row-major, channel-interleaved intensities in [0, 1].
    std::vector<float> pixels;
    std::optional<int> label;
    std::optional<std::uint64_t> gen_seed;
};

struct CorpusManifest {
    std::vector<ImageRecord> records;
    MixtureSpec mixture;
    int class_count = 0;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
};

struct SubsetSpec {
    double fraction = 1.0;
    std::uint64_t seed = 0;
    int repeat_index = 0;
};

// Largest-remainder (Hamilton) apportionment of `total` seats by `weights`.
// Each share gets floor(total * w / sum(w)); the leftovers go to the largest
// fractional parts, earlier entries first on ties.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights);

// Same rule with integer weights; remainders are compared exactly.
std::vector<std::size_t> apportion_counts(std::size_t total,
                                          std::span<const std::size_t> weights);

// Deterministic class-structured texture. Depends only on the arguments.
std::vector<float> render_synthetic_image(int label, int class_count, std::uint64_t gen_seed,
                                          int side);

CorpusManifest build_synthetic_corpus(std::size_t n_images, const MixtureSpec& mixture,
                                      int class_count, int image_side, std::uint64_t seed);

// Re-renders every synthetic record at a new side length. Records without a
// gen_seed cannot be re-rendered and must already have the requested size.
CorpusManifest rerender_corpus(const CorpusManifest& manifest, int image_side);

CorpusManifest sample_subset(const CorpusManifest& manifest, const SubsetSpec& spec);

// Per-source record counts in the manifest's declared mixture order, followed
// by any undeclared sources in first-appearance order.
std::vector<std::pair<SourceTag, std::size_t>> source_counts(const CorpusManifest& manifest);

MixtureSpec empirical_mixture(const CorpusManifest& manifest);

// 64-bit fingerprint over record metadata and pixel bytes.
std::uint64_t corpus_fingerprint(const CorpusManifest& manifest);

// On-disk layout of a corpus directory:
//   manifest.jsonl  one {id, source, width, height, label, gen_seed} object per line
//   pixels.f32      little-endian float32 payloads, row-major, in record order
//   corpus.json     declared mixture, class count and channel count
void save_corpus(const CorpusManifest& manifest, const std::filesystem::path& dir);
CorpusManifest load_corpus(const std::filesystem::path& dir);

}  // namespace maescale
