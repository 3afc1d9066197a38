#include "maescale/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include "maescale/error.hpp"
#include "maescale/random.hpp"

namespace maescale {

namespace {

constexpr double kMixtureTolerance = 1e-9;

// Ties go to the earlier entry.
std::vector<std::size_t> distribute_leftovers(std::vector<std::size_t> shares,
                                              std::size_t leftover,
                                              const std::vector<std::size_t>& by_remainder) {
    for (std::size_t k = 0; k < leftover; ++k) {
        ++shares[by_remainder[k]];
    }
    return shares;
}

}  // namespace

std::string SourceTag::to_string() const {
    switch (kind) {
        case SourceKind::ImageNet:
            return "IMAGENET";
        case SourceKind::CelebA:
            return "CELEBA";
        case SourceKind::Ade20k:
            return "ADE20K";
        case SourceKind::Cifar10:
            return "CIFAR10";
        case SourceKind::Synthetic:
            return "SYNTHETIC-" + std::to_string(index);
    }
    return "UNKNOWN";
}

SourceTag SourceTag::parse(std::string_view text) {
    if (text == "IMAGENET") return imagenet();
    if (text == "CELEBA") return celeba();
    if (text == "ADE20K") return ade20k();
    if (text == "CIFAR10") return cifar10();
    constexpr std::string_view prefix = "SYNTHETIC-";
    if (text.starts_with(prefix) && text.size() > prefix.size()) {
        int n = 0;
        for (char c : text.substr(prefix.size())) {
            if (c < '0' || c > '9') {
                throw DomainError("unknown source tag: " + std::string(text));
            }
            n = n * 10 + (c - '0');
        }
        return synthetic(n);
    }
    throw DomainError("unknown source tag: " + std::string(text));
}

MixtureSpec::MixtureSpec(std::vector<MixtureEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) {
        throw DomainError("mixture must name at least one source");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const double p = entries_[i].proportion;
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw DomainError("mixture proportion for " + entries_[i].source.to_string() +
                              " must be a nonnegative number");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (entries_[j].source == entries_[i].source) {
                throw DomainError("mixture lists " + entries_[i].source.to_string() + " twice");
            }
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kMixtureTolerance) {
        throw DomainError("mixture proportions sum to " + std::to_string(sum) + ", expected 1");
    }
}

std::optional<std::size_t> MixtureSpec::index_of(const SourceTag& tag) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].source == tag) return i;
    }
    return std::nullopt;
}

double MixtureSpec::proportion(const SourceTag& tag) const {
    const auto i = index_of(tag);
    return i ? entries_[*i].proportion : 0.0;
}

MixtureSpec reference_mixture() {
    return MixtureSpec({{SourceTag::imagenet(), 0.500},
                        {SourceTag::celeba(), 0.315},
                        {SourceTag::ade20k(), 0.135},
                        {SourceTag::cifar10(), 0.050}});
}

std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
    if (weights.empty()) {
        throw DomainError("apportion needs at least one weight");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw DomainError("apportion weights must be nonnegative");
        sum += w;
    }
    if (!(sum > 0.0)) throw DomainError("apportion weights must not all be zero");

    std::vector<std::size_t> shares(weights.size());
    std::vector<double> remainders(weights.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double quota = static_cast<double>(total) * weights[i] / sum;
        const double floor_quota = std::floor(quota);
        shares[i] = static_cast<std::size_t>(floor_quota);
        remainders[i] = quota - floor_quota;
        assigned += shares[i];
    }
    // Floating error can push the floors one past the total; take it back from
    // the smallest remainders.
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    while (assigned > total) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return remainders[a] < remainders[b];
        });
        for (std::size_t i : order) {
            if (shares[i] > 0) {
                --shares[i];
                remainders[i] += 1.0;
                --assigned;
                break;
            }
        }
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainders[a] > remainders[b];
    });
    return distribute_leftovers(std::move(shares), total - assigned, order);
}

std::vector<std::size_t> apportion_counts(std::size_t total,
                                          std::span<const std::size_t> weights) {
    if (weights.empty()) {
        throw DomainError("apportion needs at least one weight");
    }
    const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
    if (sum == 0) throw DomainError("apportion weights must not all be zero");

    std::vector<std::size_t> shares(weights.size());
    std::vector<std::size_t> remainders(weights.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] != 0 && total > std::numeric_limits<std::size_t>::max() / weights[i]) {
            throw DomainError("apportion inputs overflow");
        }
        const std::size_t scaled = total * weights[i];
        shares[i] = scaled / sum;
        remainders[i] = scaled % sum;
        assigned += shares[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainders[a] > remainders[b];
    });
    return distribute_leftovers(std::move(shares), total - assigned, order);
}

std::vector<float> render_synthetic_image(int label, int class_count, std::uint64_t gen_seed,
                                          int side) {
    if (class_count < 1 || label < 0 || label >= class_count) {
        throw DomainError("synthetic label out of range");
    }
    if (side < 1) throw DomainError("synthetic image side must be positive");

    constexpr double two_pi = 2.0 * std::numbers::pi;
    Rng rng(gen_seed);
    // Class identity lives in the grating orientation and, for neighbouring
    // orientations, in its spatial frequency.
    const double slot = std::numbers::pi / class_count;
    const double theta = slot * label + rng.uniform(-0.3, 0.3) * slot;
    const double cycles = 1.5 + 1.0 * (label % 2) + rng.uniform(-0.2, 0.2);
    const double phase = rng.uniform(0.0, two_pi);
    const double amplitude = rng.uniform(0.15, 0.35);
    const double noise = 0.2;

    const double kx = two_pi * cycles * std::cos(theta);
    const double ky = two_pi * cycles * std::sin(theta);
    std::vector<float> pixels(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y) {
        const double v = (y + 0.5) / side;
        for (int x = 0; x < side; ++x) {
            const double u = (x + 0.5) / side;
            double value = 0.5 + amplitude * std::sin(kx * u + ky * v + phase);
            value += rng.uniform(-noise, noise);
            pixels[static_cast<std::size_t>(y) * side + x] =
                static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
    }
    return pixels;
}

CorpusManifest build_synthetic_corpus(std::size_t n_images, const MixtureSpec& mixture,
                                      int class_count, int image_side, std::uint64_t seed) {
    if (n_images < 1) throw DomainError("corpus needs at least one image");
    if (class_count < 2) throw DomainError("corpus needs at least two classes");
    if (n_images < static_cast<std::size_t>(class_count)) {
        throw DomainError("corpus needs at least one image per class");
    }
    if (image_side < 8) throw DomainError("synthetic image side must be at least 8 pixels");
    if (mixture.size() == 0) throw DomainError("corpus mixture is empty");

    std::vector<double> weights;
    for (const auto& e : mixture.entries()) weights.push_back(e.proportion);
    const auto counts = apportion(n_images, weights);

    std::vector<std::size_t> source_of;
    source_of.reserve(n_images);
    for (std::size_t s = 0; s < counts.size(); ++s) {
        source_of.insert(source_of.end(), counts[s], s);
    }
    Rng order_rng(hash_words({seed, fnv1a64("source-order")}));
    order_rng.shuffle(std::span<std::size_t>(source_of));

    CorpusManifest manifest;
    manifest.mixture = mixture;
    manifest.class_count = class_count;
    manifest.records.reserve(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
        ImageRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "img-%06zu", i);
        rec.id = id;
        rec.source = mixture.entries()[source_of[i]].source;
        rec.width = image_side;
        rec.height = image_side;
        rec.channels = 1;
        rec.label = static_cast<int>(i % static_cast<std::size_t>(class_count));
        rec.gen_seed = json_safe_seed(hash_words({seed, fnv1a64("image"), i}));
        rec.pixels = render_synthetic_image(*rec.label, class_count, *rec.gen_seed, image_side);
        manifest.records.push_back(std::move(rec));
    }
    return manifest;
}

CorpusManifest rerender_corpus(const CorpusManifest& manifest, int image_side) {
    CorpusManifest out = manifest;
    for (auto& rec : out.records) {
        if (rec.width == image_side && rec.height == image_side) continue;
        if (!rec.gen_seed || !rec.label || rec.channels != 1) {
            throw DomainError("record " + rec.id + " is " + std::to_string(rec.width) + "x" +
                              std::to_string(rec.height) +
                              " and has no synthetic provenance to re-render at " +
                              std::to_string(image_side));
        }
        rec.width = image_side;
        rec.height = image_side;
        rec.pixels =
            render_synthetic_image(*rec.label, manifest.class_count, *rec.gen_seed, image_side);
    }
    return out;
}

std::vector<std::pair<SourceTag, std::size_t>> source_counts(const CorpusManifest& manifest) {
    std::vector<std::pair<SourceTag, std::size_t>> counts;
    for (const auto& e : manifest.mixture.entries()) counts.emplace_back(e.source, 0);
    for (const auto& rec : manifest.records) {
        auto it = std::find_if(counts.begin(), counts.end(),
                               [&](const auto& c) { return c.first == rec.source; });
        if (it == counts.end()) {
            counts.emplace_back(rec.source, 1);
        } else {
            ++it->second;
        }
    }
    return counts;
}

CorpusManifest sample_subset(const CorpusManifest& manifest, const SubsetSpec& spec) {
    if (manifest.empty()) throw DomainError("cannot sample from an empty manifest");
    if (!(spec.fraction > 0.0 && spec.fraction <= 1.0)) {
        throw DomainError("subset fraction must lie in (0, 1], got " +
                          std::to_string(spec.fraction));
    }
    if (spec.repeat_index < 0) throw DomainError("repeat_index must be nonnegative");
    if (spec.fraction == 1.0) return manifest;

    const std::size_t n_total = manifest.size();
    const auto n_subset =
        static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n_total)));
    if (n_subset < 1) {
        throw DomainError("subset fraction " + std::to_string(spec.fraction) + " of " +
                          std::to_string(n_total) + " records rounds to zero");
    }

    const auto counts = source_counts(manifest);
    std::vector<std::size_t> weights;
    for (const auto& c : counts) weights.push_back(c.second);
    const auto shares = apportion_counts(n_subset, weights);

    std::vector<char> keep(n_total, 0);
    for (std::size_t s = 0; s < counts.size(); ++s) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n_total; ++i) {
            if (manifest.records[i].source == counts[s].first) members.push_back(i);
        }
        Rng rng(hash_words({spec.seed, static_cast<std::uint64_t>(spec.repeat_index),
                            fnv1a64(counts[s].first.to_string())}));
        // Partial Fisher-Yates: the first shares[s] slots become the draw.
        for (std::size_t k = 0; k < shares[s]; ++k) {
            const auto j = k + static_cast<std::size_t>(rng.below(members.size() - k));
            std::swap(members[k], members[j]);
            keep[members[k]] = 1;
        }
    }

    CorpusManifest out;
    out.mixture = manifest.mixture;
    out.class_count = manifest.class_count;
    out.records.reserve(n_subset);
    for (std::size_t i = 0; i < n_total; ++i) {
        if (keep[i]) out.records.push_back(manifest.records[i]);
    }
    return out;
}

MixtureSpec empirical_mixture(const CorpusManifest& manifest) {
    if (manifest.empty()) throw DomainError("empirical mixture of an empty manifest");
    const auto counts = source_counts(manifest);
    const double n = static_cast<double>(manifest.size());
    std::vector<MixtureEntry> entries;
    for (const auto& [tag, count] : counts) {
        entries.push_back({tag, static_cast<double>(count) / n});
    }
    return MixtureSpec(std::move(entries));
}

std::uint64_t corpus_fingerprint(const CorpusManifest& manifest) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto mix_byte = [&h](unsigned char b) {
        h ^= b;
        h *= 0x100000001B3ull;
    };
    auto mix_u64 = [&](std::uint64_t v) {
        for (int k = 0; k < 8; ++k) mix_byte(static_cast<unsigned char>(v >> (8 * k)));
    };
    auto mix_str = [&](const std::string& s) {
        mix_u64(s.size());
        for (unsigned char c : s) mix_byte(c);
    };
    mix_u64(static_cast<std::uint64_t>(manifest.class_count));
    for (const auto& e : manifest.mixture.entries()) {
        mix_str(e.source.to_string());
        mix_u64(double_bits(e.proportion));
    }
    for (const auto& rec : manifest.records) {
        mix_str(rec.id);
        mix_str(rec.source.to_string());
        mix_u64(static_cast<std::uint64_t>(rec.width));
        mix_u64(static_cast<std::uint64_t>(rec.height));
        mix_u64(static_cast<std::uint64_t>(rec.channels));
        mix_u64(rec.label ? static_cast<std::uint64_t>(*rec.label) : ~std::uint64_t{0});
        mix_u64(rec.gen_seed.value_or(~std::uint64_t{0}));
        for (float p : rec.pixels) {
            const auto bits = std::bit_cast<std::uint32_t>(p);
            for (int k = 0; k < 4; ++k) mix_byte(static_cast<unsigned char>(bits >> (8 * k)));
        }
    }
    return h;
}

}  // namespace maescale
