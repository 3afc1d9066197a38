#include "mae_network.hpp"

#include <numeric>
#include <string>

#include "maescale/error.hpp"

namespace maescale::net {

using kernels::LinearSlot;
using kernels::NormSlot;

namespace {

LinearSlot linear_slot(const ParameterLayout& layout, const std::string& prefix) {
    const auto& w = layout.slot(prefix + ".weight");
    const auto& b = layout.slot(prefix + ".bias");
    return {w.offset, b.offset, w.rows, w.cols};
}

NormSlot norm_slot(const ParameterLayout& layout, const std::string& prefix) {
    const auto& g = layout.slot(prefix + ".gain");
    const auto& b = layout.slot(prefix + ".bias");
    return {g.offset, b.offset, g.cols};
}

BlockSlots block_slots(const ParameterLayout& layout, const std::string& prefix) {
    return {norm_slot(layout, prefix + ".norm1"), linear_slot(layout, prefix + ".attn.qkv"),
            linear_slot(layout, prefix + ".attn.proj"), norm_slot(layout, prefix + ".norm2"),
            linear_slot(layout, prefix + ".mlp.fc1"), linear_slot(layout, prefix + ".mlp.fc2")};
}

Matrix block_forward(std::span<const double> p, const BlockSlots& s, int heads, const Matrix& x,
                     BlockTrace& t) {
    t.normed1 = kernels::layer_norm(x, p, s.norm1, t.norm1);
    const Matrix qkv = kernels::linear(t.normed1, p, s.qkv);
    t.attended = kernels::attention(qkv, heads, t.attn);
    t.mid = kernels::linear(t.attended, p, s.proj);
    kernels::add_in_place(t.mid, x);
    t.normed2 = kernels::layer_norm(t.mid, p, s.norm2, t.norm2);
    t.hidden_pre = kernels::linear(t.normed2, p, s.fc1);
    t.hidden = t.hidden_pre;
    for (double& v : t.hidden.data()) v = kernels::gelu(v);
    Matrix out = kernels::linear(t.hidden, p, s.fc2);
    kernels::add_in_place(out, t.mid);
    return out;
}

Matrix block_backward(std::span<const double> p, const BlockSlots& s, int heads,
                      const BlockTrace& t, const Matrix& d_out, std::span<double> g) {
    Matrix d_hidden;
    kernels::linear_backward(t.hidden, d_out, p, s.fc2, g, &d_hidden);
    auto dh = d_hidden.data();
    const auto pre = t.hidden_pre.data();
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= kernels::gelu_derivative(pre[i]);

    Matrix d_normed2;
    kernels::linear_backward(t.normed2, d_hidden, p, s.fc1, g, &d_normed2);
    Matrix d_mid = kernels::layer_norm_backward(d_normed2, p, s.norm2, t.norm2, g);
    kernels::add_in_place(d_mid, d_out);

    Matrix d_attended;
    kernels::linear_backward(t.attended, d_mid, p, s.proj, g, &d_attended);
    const Matrix d_qkv = kernels::attention_backward(d_attended, heads, t.attn);
    Matrix d_normed1;
    kernels::linear_backward(t.normed1, d_qkv, p, s.qkv, g, &d_normed1);
    Matrix d_in = kernels::layer_norm_backward(d_normed1, p, s.norm1, t.norm1, g);
    kernels::add_in_place(d_in, d_mid);
    return d_in;
}

}  // namespace

ModelSlots resolve_slots(const ParameterLayout& layout, const MaeModelConfig& config) {
    ModelSlots s;
    s.patch_embed = linear_slot(layout, "patch_embed");
    s.encoder_position = layout.slot("encoder.position").offset;
    for (int l = 0; l < config.depth; ++l) {
        s.encoder.push_back(block_slots(layout, "encoder." + std::to_string(l)));
    }
    s.encoder_norm = norm_slot(layout, "encoder.norm");
    s.decoder_embed = linear_slot(layout, "decoder_embed");
    s.mask_token = layout.slot("mask_token").offset;
    s.decoder_position = layout.slot("decoder.position").offset;
    for (int l = 0; l < config.decoder_depth; ++l) {
        s.decoder.push_back(block_slots(layout, "decoder." + std::to_string(l)));
    }
    s.decoder_norm = norm_slot(layout, "decoder.norm");
    s.head = linear_slot(layout, "head");
    return s;
}

EncoderTrace encode(std::span<const double> params, const ModelSlots& slots,
                    const MaeModelConfig& config, const Matrix& patches,
                    const std::vector<int>& tokens) {
    const auto dim = static_cast<std::size_t>(config.embed_dim);
    EncoderTrace trace;
    trace.tokens = tokens;
    trace.embedded_input = Matrix(tokens.size(), patches.cols());
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        const auto src = patches.row(static_cast<std::size_t>(tokens[r]));
        std::copy(src.begin(), src.end(), trace.embedded_input.row(r).begin());
    }
    Matrix x = kernels::linear(trace.embedded_input, params, slots.patch_embed);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        const double* pos = params.data() + slots.encoder_position +
                            static_cast<std::size_t>(tokens[r]) * dim;
        auto xr = x.row(r);
        for (std::size_t i = 0; i < dim; ++i) xr[i] += pos[i];
    }
    trace.blocks.resize(slots.encoder.size());
    for (std::size_t l = 0; l < slots.encoder.size(); ++l) {
        x = block_forward(params, slots.encoder[l], config.heads, x, trace.blocks[l]);
    }
    trace.pre_norm = std::move(x);
    trace.latents = kernels::layer_norm(trace.pre_norm, params, slots.encoder_norm, trace.norm);
    return trace;
}

void encode_backward(std::span<const double> params, const ModelSlots& slots,
                     const MaeModelConfig& config, const EncoderTrace& trace,
                     const Matrix& d_latents, std::span<double> grad) {
    const auto dim = static_cast<std::size_t>(config.embed_dim);
    Matrix d = kernels::layer_norm_backward(d_latents, params, slots.encoder_norm, trace.norm, grad);
    for (std::size_t l = slots.encoder.size(); l-- > 0;) {
        d = block_backward(params, slots.encoder[l], config.heads, trace.blocks[l], d, grad);
    }
    for (std::size_t r = 0; r < trace.tokens.size(); ++r) {
        double* g_pos = grad.data() + slots.encoder_position +
                        static_cast<std::size_t>(trace.tokens[r]) * dim;
        const auto dr = d.row(r);
        for (std::size_t i = 0; i < dim; ++i) g_pos[i] += dr[i];
    }
    kernels::linear_backward(trace.embedded_input, d, params, slots.patch_embed, grad, nullptr);
}

DecoderTrace decode(std::span<const double> params, const ModelSlots& slots,
                    const MaeModelConfig& config, const Matrix& latents, const MaskSet& mask) {
    const auto ddim = static_cast<std::size_t>(config.decoder_dim);
    const auto n = static_cast<std::size_t>(config.patch_count());
    DecoderTrace trace;
    trace.latents = latents;
    const Matrix z = kernels::linear(latents, params, slots.decoder_embed);
    const double* token = params.data() + slots.mask_token;

    Matrix x(n, ddim);
    std::size_t next_visible = 0;
    std::size_t next_masked = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const bool masked = next_masked < mask.masked.size() &&
                            static_cast<std::size_t>(mask.masked[next_masked]) == j;
        const double* src = masked ? token : z.row(next_visible).data();
        if (masked) {
            ++next_masked;
        } else {
            ++next_visible;
        }
        const double* pos = params.data() + slots.decoder_position + j * ddim;
        auto xr = x.row(j);
        for (std::size_t i = 0; i < ddim; ++i) xr[i] = src[i] + pos[i];
    }
    trace.blocks.resize(slots.decoder.size());
    for (std::size_t l = 0; l < slots.decoder.size(); ++l) {
        x = block_forward(params, slots.decoder[l], config.heads, x, trace.blocks[l]);
    }
    trace.pre_norm = std::move(x);
    trace.normed = kernels::layer_norm(trace.pre_norm, params, slots.decoder_norm, trace.norm);
    trace.prediction = kernels::linear(trace.normed, params, slots.head);
    return trace;
}

Matrix decode_backward(std::span<const double> params, const ModelSlots& slots,
                       const MaeModelConfig& config, const MaskSet& mask,
                       const DecoderTrace& trace, const Matrix& d_prediction,
                       std::span<double> grad) {
    const auto ddim = static_cast<std::size_t>(config.decoder_dim);
    const auto n = static_cast<std::size_t>(config.patch_count());
    Matrix d_normed;
    kernels::linear_backward(trace.normed, d_prediction, params, slots.head, grad, &d_normed);
    Matrix d = kernels::layer_norm_backward(d_normed, params, slots.decoder_norm, trace.norm, grad);
    for (std::size_t l = slots.decoder.size(); l-- > 0;) {
        d = block_backward(params, slots.decoder[l], config.heads, trace.blocks[l], d, grad);
    }

    Matrix d_z(trace.latents.rows(), ddim);
    double* g_token = grad.data() + slots.mask_token;
    std::size_t next_visible = 0;
    std::size_t next_masked = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto dr = d.row(j);
        double* g_pos = grad.data() + slots.decoder_position + j * ddim;
        for (std::size_t i = 0; i < ddim; ++i) g_pos[i] += dr[i];
        const bool masked = next_masked < mask.masked.size() &&
                            static_cast<std::size_t>(mask.masked[next_masked]) == j;
        if (masked) {
            ++next_masked;
            for (std::size_t i = 0; i < ddim; ++i) g_token[i] += dr[i];
        } else {
            auto zr = d_z.row(next_visible++);
            std::copy(dr.begin(), dr.end(), zr.begin());
        }
    }
    Matrix d_latents;
    kernels::linear_backward(trace.latents, d_z, params, slots.decoder_embed, grad, &d_latents);
    return d_latents;
}

std::vector<double> pooled_features(std::span<const double> params, const ModelSlots& slots,
                                    const MaeModelConfig& config, const Matrix& patches) {
    std::vector<int> all(static_cast<std::size_t>(config.patch_count()));
    std::iota(all.begin(), all.end(), 0);
    const EncoderTrace trace = encode(params, slots, config, patches, all);
    std::vector<double> feature(static_cast<std::size_t>(config.embed_dim), 0.0);
    for (std::size_t r = 0; r < trace.latents.rows(); ++r) {
        const auto lr = trace.latents.row(r);
        for (std::size_t i = 0; i < feature.size(); ++i) feature[i] += lr[i];
    }
    for (double& v : feature) v /= static_cast<double>(trace.latents.rows());
    return feature;
}

}  // namespace maescale::net
