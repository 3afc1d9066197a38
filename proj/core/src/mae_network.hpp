#pragma once

// Encoder/decoder passes with their traces. Shared by the pretraining code and
// the fine-tuning evaluation, which backpropagates through the encoder alone.

#include <span>
#include <vector>

#include "maescale/mae.hpp"
#include "tensor.hpp"

namespace maescale::net {

struct BlockSlots {
    kernels::NormSlot norm1;
    kernels::LinearSlot qkv;
    kernels::LinearSlot proj;
    kernels::NormSlot norm2;
    kernels::LinearSlot fc1;
    kernels::LinearSlot fc2;
};

struct ModelSlots {
    kernels::LinearSlot patch_embed;
    std::size_t encoder_position = 0;  // patch_count x embed_dim
    std::vector<BlockSlots> encoder;
    kernels::NormSlot encoder_norm;
    kernels::LinearSlot decoder_embed;
    std::size_t mask_token = 0;        // decoder_dim
    std::size_t decoder_position = 0;  // patch_count x decoder_dim
    std::vector<BlockSlots> decoder;
    kernels::NormSlot decoder_norm;
    kernels::LinearSlot head;
};

ModelSlots resolve_slots(const ParameterLayout& layout, const MaeModelConfig& config);

struct BlockTrace {
    kernels::NormTrace norm1;
    Matrix normed1;
    kernels::AttentionTrace attn;
    Matrix attended;
    Matrix mid;
    kernels::NormTrace norm2;
    Matrix normed2;
    Matrix hidden_pre;
    Matrix hidden;
};

struct EncoderTrace {
    std::vector<int> tokens;  // patch indices fed to the encoder
    Matrix embedded_input;    // rows of the patch matrix at `tokens`
    std::vector<BlockTrace> blocks;
    Matrix pre_norm;
    kernels::NormTrace norm;
    Matrix latents;
};

struct DecoderTrace {
    Matrix latents;
    std::vector<BlockTrace> blocks;
    Matrix pre_norm;
    kernels::NormTrace norm;
    Matrix normed;
    Matrix prediction;
};

EncoderTrace encode(std::span<const double> params, const ModelSlots& slots,
                    const MaeModelConfig& config, const Matrix& patches,
                    const std::vector<int>& tokens);

void encode_backward(std::span<const double> params, const ModelSlots& slots,
                     const MaeModelConfig& config, const EncoderTrace& trace,
                     const Matrix& d_latents, std::span<double> grad);

DecoderTrace decode(std::span<const double> params, const ModelSlots& slots,
                    const MaeModelConfig& config, const Matrix& latents, const MaskSet& mask);

// Returns the gradient with respect to the encoder latents.
Matrix decode_backward(std::span<const double> params, const ModelSlots& slots,
                       const MaeModelConfig& config, const MaskSet& mask,
                       const DecoderTrace& trace, const Matrix& d_prediction,
                       std::span<double> grad);

// Mean of the encoder latents with every patch visible.
std::vector<double> pooled_features(std::span<const double> params, const ModelSlots& slots,
                                    const MaeModelConfig& config, const Matrix& patches);

}  // namespace maescale::net
