#include "eegprobe/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "eegprobe/errors.hpp"
#include "eegprobe/rng.hpp"

namespace eegprobe {

namespace {

ad::Tensor glorot(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in,
                  std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(-limit, limit);
  return ad::Tensor::from_data(std::move(data), std::move(shape), true);
}

}  // namespace

void EncoderConfig::validate() const {
  if (in_channels == 0) throw ConfigError("encoder config: in_channels must be set");
  if (in_samples == 0) throw ConfigError("encoder config: in_samples must be positive");
  if (conv_kernel == 0 || conv_kernel > in_samples) {
    throw ConfigError("encoder config: conv_kernel must be in 1..in_samples");
  }
  if (conv_stride == 0) throw ConfigError("encoder config: conv_stride must be positive");
  if (gat_dim == 0 || conv_channels == 0) {
    throw ConfigError("encoder config: gat_dim and conv_channels must be positive");
  }
  if (gat_heads != 1) {
    throw ConfigError("encoder config: only a single attention head is supported");
  }
  if (embed_dim != 1024) throw ConfigError("encoder config: embed_dim is fixed at 1024");
  if (!(leaky_alpha >= 0.0 && leaky_alpha < 1.0)) {
    throw ConfigError("encoder config: leaky_alpha must be in [0, 1)");
  }
}

EncoderConfig EncoderConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("encoder config parse error: ") + e.what());
  }
  EncoderConfig c;
  try {
    c.in_channels = j.value("in_channels", 0u);
    c.in_samples = j.value("in_samples", 400u);
    c.gat_dim = j.value("gat_dim", 32u);
    c.gat_heads = j.value("gat_heads", 1u);
    c.conv_channels = j.value("conv_channels", 32u);
    c.conv_kernel = j.value("conv_kernel", 25u);
    c.conv_stride = j.value("conv_stride", 5u);
    c.embed_dim = j.value("embed_dim", 1024u);
    c.leaky_alpha = j.value("leaky_alpha", 0.2);
    c.seed = j.value("seed", 0ull);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("encoder config schema error: ") + e.what());
  }
  return c;
}

std::string EncoderConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["in_channels"] = in_channels;
  j["in_samples"] = in_samples;
  j["gat_dim"] = gat_dim;
  j["gat_heads"] = gat_heads;
  j["conv_channels"] = conv_channels;
  j["conv_kernel"] = conv_kernel;
  j["conv_stride"] = conv_stride;
  j["embed_dim"] = embed_dim;
  j["leaky_alpha"] = leaky_alpha;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

std::vector<std::pair<std::string, ad::Tensor*>> EncoderParams::named_arrays() {
  return {{"gat_w", &gat_w},   {"gat_a", &gat_a},   {"conv_w", &conv_w},
          {"conv_b", &conv_b}, {"lin_w", &lin_w},   {"lin_b", &lin_b}};
}

std::vector<std::pair<std::string, const ad::Tensor*>> EncoderParams::named_arrays() const {
  return {{"gat_w", &gat_w},   {"gat_a", &gat_a},   {"conv_w", &conv_w},
          {"conv_b", &conv_b}, {"lin_w", &lin_w},   {"lin_b", &lin_b}};
}

EncoderParams EncoderParams::clone(bool requires_grad) const {
  EncoderParams out;
  out.gat_w = gat_w.clone(requires_grad);
  out.gat_a = gat_a.clone(requires_grad);
  out.conv_w = conv_w.clone(requires_grad);
  out.conv_b = conv_b.clone(requires_grad);
  out.lin_w = lin_w.clone(requires_grad);
  out.lin_b = lin_b.clone(requires_grad);
  return out;
}

void EncoderParams::set_requires_grad_clone() { *this = clone(true); }

EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  EncoderParams p;
  p.gat_w = glorot(rng, {config.in_samples, config.gat_dim}, config.in_samples,
                   config.gat_dim);
  p.gat_a = glorot(rng, {2 * config.gat_dim, 1}, 2 * config.gat_dim, 1);
  p.conv_w = glorot(rng, {config.conv_channels, config.in_channels, config.conv_kernel},
                    config.in_channels * config.conv_kernel,
                    config.conv_channels * config.conv_kernel);
  p.conv_b = ad::Tensor::zeros({config.conv_channels, 1}, true);
  p.lin_w = glorot(rng, {config.flat_dim(), config.embed_dim}, config.flat_dim(),
                   config.embed_dim);
  p.lin_b = ad::Tensor::zeros({1, config.embed_dim}, true);
  return p;
}

ad::Tensor gat_attention(ad::Tape& tape, const ad::Tensor& x,
                         const EncoderParams& params, const EncoderConfig& config) {
  if (x.rank() != 2 || x.shape()[0] != config.in_channels ||
      x.shape()[1] != config.in_samples) {
    throw DimensionError("gat_attention: segment shape does not match config");
  }
  const std::size_t c = config.in_channels;
  const std::size_t g = config.gat_dim;
  ad::Tensor h = tape.matmul(x, params.gat_w);  // C x g

  std::vector<std::size_t> src_idx(g), dst_idx(g);
  for (std::size_t i = 0; i < g; ++i) {
    src_idx[i] = i;
    dst_idx[i] = g + i;
  }
  ad::Tensor a_src = tape.select_rows(params.gat_a, src_idx);  // g x 1
  ad::Tensor a_dst = tape.select_rows(params.gat_a, dst_idx);

  ad::Tensor u = tape.matmul(h, a_src);  // C x 1
  ad::Tensor v = tape.matmul(h, a_dst);  // C x 1
  // e_ij = u_i + v_j over the complete graph (self-loops included)
  ad::Tensor ones_row = ad::Tensor::full({1, c}, 1.0);
  ad::Tensor ones_col = ad::Tensor::full({c, 1}, 1.0);
  ad::Tensor e = tape.add(tape.matmul(u, ones_row), tape.matmul(ones_col, tape.transpose(v)));
  return tape.row_softmax(tape.leaky_relu(e, config.leaky_alpha));
}

ad::Tensor gat_layer(ad::Tape& tape, const ad::Tensor& x, const EncoderParams& params,
                     const EncoderConfig& config) {
  ad::Tensor alpha = gat_attention(tape, x, params, config);
  ad::Tensor h = tape.matmul(x, params.gat_w);
  return tape.matmul(alpha, h);
}

ad::Tensor encode_segment(ad::Tape& tape, const ad::Tensor& x,
                          const EncoderParams& params, const EncoderConfig& config) {
  ad::Tensor alpha = gat_attention(tape, x, params, config);
  ad::Tensor mixed = tape.matmul(alpha, x);  // attention-mixed raw signal, C x T
  ad::Tensor conv = tape.conv1d(mixed, params.conv_w, config.conv_stride);
  conv = tape.leaky_relu(tape.add_col(conv, params.conv_b), config.leaky_alpha);
  ad::Tensor flat = tape.reshape(conv, {1, config.flat_dim()});
  ad::Tensor z = tape.add(tape.matmul(flat, params.lin_w), params.lin_b);
  return tape.l2_normalize_rows(z);
}

ad::Tensor encode(ad::Tape& tape, std::span<const double> batch, std::size_t n,
                  const EncoderParams& params, const EncoderConfig& config) {
  config.validate();
  const std::size_t seg_values = config.in_channels * config.in_samples;
  if (batch.size() != n * seg_values) {
    throw DimensionError("encode: batch size does not match n x C x T");
  }
  std::vector<ad::Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> seg(batch.begin() + i * seg_values,
                            batch.begin() + (i + 1) * seg_values);
    ad::Tensor x = ad::Tensor::from_data(std::move(seg),
                                         {config.in_channels, config.in_samples});
    rows.push_back(encode_segment(tape, x, params, config));
  }
  return tape.concat_rows(rows);
}

EmbeddingBatch encode_batch(const SegmentSet& segments, const EncoderParams& params,
                            const EncoderConfig& config) {
  if (segments.channels != config.in_channels) {
    throw DimensionError("encode_batch: segment channels " +
                         std::to_string(segments.channels) + " do not match config " +
                         std::to_string(config.in_channels));
  }
  EmbeddingBatch out;
  out.rows = segments.size();
  out.cols = config.embed_dim;
  out.values.reserve(out.rows * out.cols);
  // Per-segment tapes keep eval memory flat.
  for (std::size_t i = 0; i < segments.size(); ++i) {
    ad::Tape tape;
    auto seg = segments.segment(i);
    ad::Tensor x = ad::Tensor::from_data(std::vector<double>(seg.begin(), seg.end()),
                                         {config.in_channels, config.in_samples});
    ad::Tensor emb = encode_segment(tape, x, params, config);
    out.values.insert(out.values.end(), emb.data().begin(), emb.data().end());
  }
  return out;
}

SegmentSet mask_timesteps(const SegmentSet& segments, std::size_t t1, std::size_t t2) {
  const std::size_t T = SegmentSet::kSamplesPerSegment;
  if (!(t1 < t2 && t2 <= T)) {
    throw ConfigError("mask_timesteps: window must satisfy 0 <= t1 < t2 <= 400 (got " +
                      std::to_string(t1) + ":" + std::to_string(t2) + ")");
  }
  SegmentSet out = segments;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto seg = out.segment(i);
    for (std::size_t c = 0; c < out.channels; ++c) {
      std::fill(seg.begin() + c * T + t1, seg.begin() + c * T + t2, 0.0);
    }
  }
  return out;
}

void save_params(const std::filesystem::path& path, const EncoderParams& params,
                 const EncoderConfig& config) {
  nlohmann::ordered_json header;
  header["format"] = "eegprobe-params/1";
  header["config"] = nlohmann::ordered_json::parse(config.to_json_text());
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, tensor] : params.named_arrays()) {
    nlohmann::ordered_json ja;
    ja["name"] = name;
    ja["shape"] = tensor->shape();
    ja["offset"] = offset;
    ja["count"] = tensor->size();
    offset += tensor->size();
    arrays.push_back(std::move(ja));
  }
  header["arrays"] = std::move(arrays);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, tensor] : params.named_arrays()) {
    out.write(reinterpret_cast<const char*>(tensor->data().data()),
              static_cast<std::streamsize>(tensor->size() * sizeof(double)));
  }
  if (!out) throw FormatError("short write to " + path.string());
}

std::pair<EncoderParams, EncoderConfig> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len == 0 || header_len > (1u << 20)) {
    throw FormatError("corrupt model header in " + path.string());
  }
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated model header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model header parse error in " + path.string() + ": " + e.what());
  }
  EncoderConfig config;
  EncoderParams params;
  try {
    if (header.at("format").get<std::string>() != "eegprobe-params/1") {
      throw FormatError("unsupported model format in " + path.string());
    }
    config = EncoderConfig::from_json_text(header.at("config").dump());
    auto named = params.named_arrays();
    const auto& arrays = header.at("arrays");
    if (arrays.size() != named.size()) {
      throw FormatError("model array directory has unexpected size in " + path.string());
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& ja = arrays[i];
      if (ja.at("name").get<std::string>() != named[i].first) {
        throw FormatError("model array order mismatch in " + path.string());
      }
      const auto shape = ja.at("shape").get<std::vector<std::size_t>>();
      const auto count = ja.at("count").get<std::size_t>();
      std::vector<double> data(count);
      in.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
      if (!in) {
        throw FormatError("model payload truncated (array '" + named[i].first + "') in " +
                          path.string());
      }
      *named[i].second = ad::Tensor::from_data(std::move(data), shape, true);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model header schema error in " + path.string() + ": " + e.what());
  }
  config.validate();
  return {std::move(params), config};
}

}  // namespace eegprobe
