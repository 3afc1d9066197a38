#include "maescale/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mae_network.hpp"
#include "maescale/error.hpp"
#include "maescale/random.hpp"

namespace maescale {

void MaeModelConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw DomainError(std::string("invalid model config: ") + what);
    };
    require(patch_size >= 1 && embed_dim >= 1 && depth >= 1 && heads >= 1 && decoder_dim >= 1 &&
                decoder_depth >= 1 && image_side >= 1 && channels >= 1,
            "all counts must be at least 1");
    require(image_side % patch_size == 0, "image_side must be divisible by patch_size");
    require(embed_dim % heads == 0, "embed_dim must be divisible by heads");
    require(decoder_dim % heads == 0, "decoder_dim must be divisible by heads");
}

const NamedConfig& SizeLadder::at(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return e;
    }
    throw DomainError("unknown model size: " + name);
}

bool SizeLadder::contains(const std::string& name) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const NamedConfig& e) { return e.name == name; });
}

SizeLadder size_ladder(int image_side) {
    auto make = [image_side](int dim, int depth, int heads) {
        MaeModelConfig c;
        c.patch_size = 4;
        c.embed_dim = dim;
        c.depth = depth;
        c.heads = heads;
        c.decoder_dim = 16;
        c.decoder_depth = 1;
        c.image_side = image_side;
        c.channels = 1;
        c.validate();
        return c;
    };
    return SizeLadder{{{"TOY-A", make(16, 1, 2)},
                       {"TOY-B", make(32, 2, 4)},
                       {"TOY-C", make(48, 3, 4)},
                       {"TOY-D", make(80, 3, 4)}}};
}

const TensorSlot& ParameterLayout::add(std::string name, TensorKind kind, std::size_t rows,
                                       std::size_t cols) {
    for (const auto& s : slots_) {
        if (s.name == name) throw DomainError("duplicate parameter tensor " + name);
    }
    slots_.push_back({std::move(name), kind, total_, rows, cols});
    total_ += rows * cols;
    return slots_.back();
}

const TensorSlot& ParameterLayout::slot(const std::string& name) const {
    for (const auto& s : slots_) {
        if (s.name == name) return s;
    }
    throw DomainError("no parameter tensor named " + name);
}

ParameterLayout ParameterLayout::for_model(const MaeModelConfig& config) {
    config.validate();
    const auto dim = static_cast<std::size_t>(config.embed_dim);
    const auto ddim = static_cast<std::size_t>(config.decoder_dim);
    const auto n = static_cast<std::size_t>(config.patch_count());
    const auto pdim = static_cast<std::size_t>(config.patch_dim());

    ParameterLayout layout;
    auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
        layout.add(prefix + ".weight", TensorKind::Weight, in, out);
        layout.add(prefix + ".bias", TensorKind::Bias, 1, out);
    };
    auto norm = [&](const std::string& prefix, std::size_t d) {
        layout.add(prefix + ".gain", TensorKind::Gain, 1, d);
        layout.add(prefix + ".bias", TensorKind::Bias, 1, d);
    };
    auto block = [&](const std::string& prefix, std::size_t d) {
        norm(prefix + ".norm1", d);
        linear(prefix + ".attn.qkv", d, 3 * d);
        linear(prefix + ".attn.proj", d, d);
        norm(prefix + ".norm2", d);
        linear(prefix + ".mlp.fc1", d, kMlpRatio * d);
        linear(prefix + ".mlp.fc2", kMlpRatio * d, d);
    };

    linear("patch_embed", pdim, dim);
    layout.add("encoder.position", TensorKind::Embedding, n, dim);
    for (int l = 0; l < config.depth; ++l) block("encoder." + std::to_string(l), dim);
    norm("encoder.norm", dim);
    linear("decoder_embed", dim, ddim);
    layout.add("mask_token", TensorKind::Embedding, 1, ddim);
    layout.add("decoder.position", TensorKind::Embedding, n, ddim);
    for (int l = 0; l < config.decoder_depth; ++l) block("decoder." + std::to_string(l), ddim);
    norm("decoder.norm", ddim);
    linear("head", ddim, pdim);
    return layout;
}

std::size_t parameter_count(const MaeModelConfig& config) {
    return ParameterLayout::for_model(config).total();
}

ParameterStore::ParameterStore(ParameterLayout layout, std::uint64_t seed)
    : layout_(std::move(layout)), seed_(seed), values_(layout_.total(), 0.0) {}

ParameterStore ParameterStore::initialize(const MaeModelConfig& config, std::uint64_t seed) {
    ParameterStore store(ParameterLayout::for_model(config), seed);
    Rng rng(seed);
    for (const auto& slot : store.layout_.slots()) {
        auto view = std::span<double>(store.values_).subspan(slot.offset, slot.size());
        switch (slot.kind) {
            case TensorKind::Weight:
            case TensorKind::Embedding: {
                const double s = std::sqrt(6.0 / static_cast<double>(slot.rows + slot.cols));
                for (double& v : view) v = rng.uniform(-s, s);
                break;
            }
            case TensorKind::Gain:
                std::fill(view.begin(), view.end(), 1.0);
                break;
            case TensorKind::Bias:
                break;
        }
    }
    return store;
}

ParameterStore ParameterStore::zeros(const MaeModelConfig& config) {
    return ParameterStore(ParameterLayout::for_model(config), 0);
}

std::span<double> ParameterStore::tensor(const std::string& name) {
    const auto& s = layout_.slot(name);
    return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParameterStore::tensor(const std::string& name) const {
    const auto& s = layout_.slot(name);
    return std::span<const double>(values_).subspan(s.offset, s.size());
}

bool ParameterStore::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

MaskSet MaskSet::from_indices(std::vector<int> masked, int total) {
    if (total < 1) throw DomainError("mask total must be at least 1");
    for (std::size_t i = 0; i < masked.size(); ++i) {
        if (masked[i] < 0 || masked[i] >= total) throw DomainError("mask index out of range");
        if (i > 0 && masked[i] <= masked[i - 1]) {
            throw DomainError("mask indices must be strictly increasing");
        }
    }
    return {std::move(masked), total};
}

bool MaskSet::is_masked(int patch) const {
    return std::binary_search(masked.begin(), masked.end(), patch);
}

std::vector<int> MaskSet::visible() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(total) - masked.size());
    std::size_t k = 0;
    for (int j = 0; j < total; ++j) {
        if (k < masked.size() && masked[k] == j) {
            ++k;
        } else {
            out.push_back(j);
        }
    }
    return out;
}

int masked_count(int total_patches, double mask_ratio) {
    if (total_patches < 1) throw DomainError("need at least one patch to mask");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
        throw DomainError("mask ratio must lie in [0, 1)");
    }
    const auto rounded = static_cast<int>(std::llround(mask_ratio * total_patches));
    return std::min(rounded, total_patches - 1);
}

MaskSet sample_mask(int total_patches, double mask_ratio, std::uint64_t seed) {
    const int count = masked_count(total_patches, mask_ratio);
    std::vector<int> order(static_cast<std::size_t>(total_patches));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int k = 0; k < count; ++k) {
        const auto j = static_cast<std::size_t>(k) +
                       static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(total_patches - k)));
        std::swap(order[static_cast<std::size_t>(k)], order[j]);
    }
    std::vector<int> masked(order.begin(), order.begin() + count);
    std::sort(masked.begin(), masked.end());
    return {std::move(masked), total_patches};
}

Matrix patchify(std::span<const double> pixels, int width, int height, int channels,
                int patch_size) {
    if (patch_size < 1 || width % patch_size != 0 || height % patch_size != 0) {
        throw DomainError("image " + std::to_string(width) + "x" + std::to_string(height) +
                          " is not divisible into " + std::to_string(patch_size) + "px patches");
    }
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
        throw DomainError("pixel buffer does not match image dimensions");
    }
    const int gx = width / patch_size;
    const int gy = height / patch_size;
    const auto pdim = static_cast<std::size_t>(patch_size) * patch_size * channels;
    Matrix patches(static_cast<std::size_t>(gx) * gy, pdim);
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            auto dst = patches.row(static_cast<std::size_t>(py) * gx + px).begin();
            for (int y = 0; y < patch_size; ++y) {
                const auto src = pixels.begin() +
                                 ((static_cast<std::ptrdiff_t>(py) * patch_size + y) * width +
                                  static_cast<std::ptrdiff_t>(px) * patch_size) * channels;
                dst = std::copy(src, src + patch_size * channels, dst);
            }
        }
    }
    return patches;
}

Matrix patchify(const ImageRecord& image, int patch_size) {
    const std::vector<double> pixels(image.pixels.begin(), image.pixels.end());
    return patchify(pixels, image.width, image.height, image.channels, patch_size);
}

std::vector<double> unpatchify(const Matrix& patches, int width, int height, int channels,
                               int patch_size) {
    if (patch_size < 1 || width % patch_size != 0 || height % patch_size != 0) {
        throw DomainError("image dimensions not divisible by patch size");
    }
    const int gx = width / patch_size;
    const int gy = height / patch_size;
    if (patches.rows() != static_cast<std::size_t>(gx) * gy ||
        patches.cols() != static_cast<std::size_t>(patch_size) * patch_size * channels) {
        throw DomainError("patch matrix does not match image dimensions");
    }
    std::vector<double> pixels(static_cast<std::size_t>(width) * height * channels);
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            auto src = patches.row(static_cast<std::size_t>(py) * gx + px).begin();
            for (int y = 0; y < patch_size; ++y) {
                const auto dst = pixels.begin() +
                                 ((static_cast<std::ptrdiff_t>(py) * patch_size + y) * width +
                                  static_cast<std::ptrdiff_t>(px) * patch_size) * channels;
                std::copy(src, src + patch_size * channels, dst);
                src += patch_size * channels;
            }
        }
    }
    return pixels;
}

namespace {

void check_inputs(const ParameterStore& params, const MaeModelConfig& config,
                  const Matrix& patches, const MaskSet& mask) {
    config.validate();
    if (params.size() != parameter_count(config)) {
        throw DomainError("parameter store does not match the model config");
    }
    if (patches.rows() != static_cast<std::size_t>(config.patch_count()) ||
        patches.cols() != static_cast<std::size_t>(config.patch_dim())) {
        throw DomainError("patch matrix is " + std::to_string(patches.rows()) + "x" +
                          std::to_string(patches.cols()) + ", model expects " +
                          std::to_string(config.patch_count()) + "x" +
                          std::to_string(config.patch_dim()));
    }
    if (mask.total != config.patch_count()) {
        throw DomainError("mask covers " + std::to_string(mask.total) + " patches, model has " +
                          std::to_string(config.patch_count()));
    }
}

// Adds d(loss)/d(params) into grad and returns the loss.
double accumulate_gradient(std::span<const double> p, const net::ModelSlots& slots,
                           const MaeModelConfig& config, const Matrix& patches,
                           const MaskSet& mask, std::span<double> grad) {
    const auto enc = net::encode(p, slots, config, patches, mask.visible());
    const auto dec = net::decode(p, slots, config, enc.latents, mask);
    const double loss = mae_loss(dec.prediction, patches, mask);

    const auto pdim = patches.cols();
    const double scale = 2.0 / (static_cast<double>(pdim) * static_cast<double>(mask.masked.size()));
    Matrix d_pred(dec.prediction.rows(), pdim);
    for (int j : mask.masked) {
        const auto r = static_cast<std::size_t>(j);
        for (std::size_t c = 0; c < pdim; ++c) {
            d_pred(r, c) = scale * (dec.prediction(r, c) - patches(r, c));
        }
    }
    const Matrix d_latents = net::decode_backward(p, slots, config, mask, dec, d_pred, grad);
    net::encode_backward(p, slots, config, enc, d_latents, grad);
    return loss;
}

}  // namespace

ForwardResult forward(const ParameterStore& params, const MaeModelConfig& config,
                      const Matrix& patches, const MaskSet& mask) {
    check_inputs(params, config, patches, mask);
    const auto slots = net::resolve_slots(params.layout(), config);
    auto enc = net::encode(params.values(), slots, config, patches, mask.visible());
    auto dec = net::decode(params.values(), slots, config, enc.latents, mask);
    return {std::move(dec.prediction), std::move(enc.latents)};
}

double mae_loss(const Matrix& reconstruction, const Matrix& target, const MaskSet& mask) {
    if (mask.masked.empty()) throw DomainError("reconstruction loss needs at least one masked patch");
    if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols()) {
        throw DomainError("reconstruction and target shapes differ");
    }
    if (static_cast<std::size_t>(mask.total) != target.rows()) {
        throw DomainError("mask does not match the patch count");
    }
    double total = 0.0;
    for (int j : mask.masked) {
        const auto r = static_cast<std::size_t>(j);
        double sq = 0.0;
        for (std::size_t c = 0; c < target.cols(); ++c) {
            const double e = reconstruction(r, c) - target(r, c);
            sq += e * e;
        }
        total += sq / static_cast<double>(target.cols());
    }
    return total / static_cast<double>(mask.masked.size());
}

LossAndGradient loss_and_gradient(const ParameterStore& params, const MaeModelConfig& config,
                                  const Matrix& patches, const MaskSet& mask) {
    check_inputs(params, config, patches, mask);
    if (mask.masked.empty()) throw DomainError("reconstruction loss needs at least one masked patch");
    const auto slots = net::resolve_slots(params.layout(), config);
    LossAndGradient out;
    out.gradient.assign(params.size(), 0.0);
    out.loss = accumulate_gradient(params.values(), slots, config, patches, mask, out.gradient);
    return out;
}

std::vector<double> gradient(const ParameterStore& params, const MaeModelConfig& config,
                             const Matrix& patches, const MaskSet& mask) {
    return loss_and_gradient(params, config, patches, mask).gradient;
}

TrainResult train(ParameterStore params, const MaeModelConfig& config,
                  const CorpusManifest& manifest, const TrainSchedule& schedule) {
    config.validate();
    if (params.size() != parameter_count(config)) {
        throw DomainError("parameter store does not match the model config");
    }
    if (schedule.epochs < 0 || schedule.batch_size < 1) {
        throw DomainError("training schedule needs epochs >= 0 and batch_size >= 1");
    }
    if (!std::isfinite(schedule.learning_rate)) throw DomainError("learning rate must be finite");
    if (manifest.empty()) throw DomainError("cannot train on an empty manifest");

    std::vector<Matrix> patches;
    std::vector<MaskSet> masks;
    patches.reserve(manifest.size());
    masks.reserve(manifest.size());
    for (const auto& rec : manifest.records) {
        if (rec.width != config.image_side || rec.height != config.image_side ||
            rec.channels != config.channels) {
            throw DomainError("record " + rec.id + " is " + std::to_string(rec.width) + "x" +
                              std::to_string(rec.height) + "x" + std::to_string(rec.channels) +
                              ", model expects side " + std::to_string(config.image_side));
        }
        patches.push_back(patchify(rec, config.patch_size));
        masks.push_back(sample_mask(config.patch_count(), schedule.mask_ratio,
                                    hash_words({schedule.seed, fnv1a64(rec.id)})));
        if (masks.back().masked.empty()) {
            throw DomainError("model grid of " + std::to_string(config.patch_count()) +
                              " patches leaves nothing to mask");
        }
    }

    const auto slots = net::resolve_slots(params.layout(), config);
    const std::size_t n = manifest.size();
    const auto batch_size = static_cast<std::size_t>(schedule.batch_size);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(params.size());
    std::vector<double> image_loss(n, 0.0);

    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(schedule.epochs));
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        Rng shuffle_rng(hash_words({schedule.seed, fnv1a64("epoch"),
                                    static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        int batch = 0;
        for (std::size_t start = 0; start < n; start += batch_size, ++batch) {
            const std::size_t stop = std::min(n, start + batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_total = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                image_loss[i] =
                    accumulate_gradient(params.values(), slots, config, patches[i], masks[i], grad);
                batch_total += image_loss[i];
            }
            if (!std::isfinite(batch_total)) throw TrainingDiverged(epoch, batch);
            const double step = schedule.learning_rate / static_cast<double>(stop - start);
            auto values = params.values();
            for (std::size_t j = 0; j < values.size(); ++j) values[j] -= step * grad[j];
        }
        // Summed in corpus order so the trace does not depend on the shuffle.
        const double epoch_total = std::accumulate(image_loss.begin(), image_loss.end(), 0.0);
        result.loss_trace.push_back(epoch_total / static_cast<double>(n));
    }
    result.params = std::move(params);
    return result;
}

}  // namespace maescale
