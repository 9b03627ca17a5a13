#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eegprobe/signal_io.hpp"
#include "eegprobe/tensor.hpp"

namespace eegprobe {

struct EncoderConfig {
  std::size_t in_channels = 0;
  std::size_t in_samples = 400;
  std::size_t gat_dim = 32;
  std::size_t gat_heads = 1;  // single head; kept for config compatibility
  std::size_t conv_channels = 32;
  std::size_t conv_kernel = 25;
  std::size_t conv_stride = 5;
  std::size_t embed_dim = 1024;
  double leaky_alpha = 0.2;
  std::uint64_t seed = 0;

  std::size_t conv_out_samples() const {
    return (in_samples - conv_kernel) / conv_stride + 1;
  }
  std::size_t flat_dim() const { return conv_channels * conv_out_samples(); }

  void validate() const;
  static EncoderConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

// All learnable arrays. Tensors are handles; copying the struct shares them.
struct EncoderParams {
  ad::Tensor gat_w;   // in_samples x gat_dim, shared across channels
  ad::Tensor gat_a;   // 2*gat_dim x 1 attention vector
  ad::Tensor conv_w;  // conv_channels x in_channels x conv_kernel
  ad::Tensor conv_b;  // conv_channels x 1
  ad::Tensor lin_w;   // flat_dim x embed_dim
  ad::Tensor lin_b;   // 1 x embed_dim

  std::vector<std::pair<std::string, ad::Tensor*>> named_arrays();
  std::vector<std::pair<std::string, const ad::Tensor*>> named_arrays() const;
  EncoderParams clone(bool requires_grad) const;
  void set_requires_grad_clone();  // deep-copy each array as a grad leaf
};

// Glorot-uniform weights, zero biases, deterministic per config.seed.
EncoderParams init_params(const EncoderConfig& config);

// Attention weights over the complete channel graph: h = x.W,
// e_ij = LeakyReLU(a . [h_i || h_j]), alpha = row_softmax(e). Returns C x C.
ad::Tensor gat_attention(ad::Tape& tape, const ad::Tensor& x,
                         const EncoderParams& params, const EncoderConfig& config);

// Attention-aggregated node features: alpha . (x.W). Returns C x gat_dim.
ad::Tensor gat_layer(ad::Tape& tape, const ad::Tensor& x, const EncoderParams& params,
                     const EncoderConfig& config);

// One segment end to end: the attention weights mix the raw signal
// (x' = alpha . x), then temporal convolution, leaky ReLU, flatten, linear,
// unit normalization. Returns 1 x embed_dim.
ad::Tensor encode_segment(ad::Tape& tape, const ad::Tensor& x,
                          const EncoderParams& params, const EncoderConfig& config);

// Batch of raw segments (n x C x T, segment-major) -> n x embed_dim.
ad::Tensor encode(ad::Tape& tape, std::span<const double> batch, std::size_t n,
                  const EncoderParams& params, const EncoderConfig& config);

struct EmbeddingBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // rows x cols

  const double* row(std::size_t i) const { return values.data() + i * cols; }
};

// Gradient-free encoding of a whole segment set.
EmbeddingBatch encode_batch(const SegmentSet& segments, const EncoderParams& params,
                            const EncoderConfig& config);

// Zero all channels on samples [t1, t2); requires 0 <= t1 < t2 <= 400.
SegmentSet mask_timesteps(const SegmentSet& segments, std::size_t t1, std::size_t t2);

// Single binary file: little-endian u64 header length, JSON header
// (config + array directory), float64 payloads in directory order.
void save_params(const std::filesystem::path& path, const EncoderParams& params,
                 const EncoderConfig& config);
std::pair<EncoderParams, EncoderConfig> load_params(const std::filesystem::path& path);

}  // namespace eegprobe
