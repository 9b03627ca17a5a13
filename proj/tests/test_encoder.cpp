#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "eegprobe/encoder.hpp"
#include "eegprobe/errors.hpp"
#include "eegprobe/rng.hpp"

using namespace eegprobe;
using eegprobe::ad::Tape;
using eegprobe::ad::Tensor;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.in_channels = 3;
  c.in_samples = 16;
  c.gat_dim = 2;
  c.conv_channels = 2;
  c.conv_kernel = 4;
  c.conv_stride = 4;
  c.seed = 5;
  return c;
}

std::vector<double> random_batch(Rng& rng, const EncoderConfig& c, std::size_t n) {
  std::vector<double> batch(n * c.in_channels * c.in_samples);
  for (double& v : batch) v = rng.gaussian();
  return batch;
}

}  // namespace

TEST_CASE("init_params is seeded and Glorot-bounded") {
  EncoderConfig c = tiny_config();
  EncoderParams a = init_params(c);
  EncoderParams b = init_params(c);
  CHECK(a.gat_w.data() == b.gat_w.data());
  CHECK(a.lin_w.data() == b.lin_w.data());

  c.seed = 6;
  EncoderParams other = init_params(c);
  CHECK(a.gat_w.data() != other.gat_w.data());

  const double limit =
      std::sqrt(6.0 / static_cast<double>(c.in_samples + c.gat_dim));
  for (double v : a.gat_w.data()) {
    CHECK(std::abs(v) <= limit);
  }
  for (double v : a.conv_b.data()) CHECK(v == 0.0);
  for (double v : a.lin_b.data()) CHECK(v == 0.0);
}

TEST_CASE("gat_layer with one channel collapses to its own features") {
  EncoderConfig c = tiny_config();
  c.in_channels = 1;
  EncoderParams p = init_params(c);
  Rng rng(3);
  Tape tape;
  std::vector<double> seg(c.in_samples);
  for (double& v : seg) v = rng.gaussian();
  Tensor x = Tensor::from_data(seg, {1, c.in_samples});
  Tensor alpha = gat_attention(tape, x, p, c);
  CHECK(alpha.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  Tensor out = gat_layer(tape, x, p, c);
  Tensor h = tape.matmul(x, p.gat_w);
  for (std::size_t j = 0; j < c.gat_dim; ++j) {
    CHECK(out.at(0, j) == doctest::Approx(h.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("identical channels give identical node features") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  Rng rng(8);
  std::vector<double> row(c.in_samples);
  for (double& v : row) v = rng.gaussian();
  std::vector<double> seg;
  for (std::size_t i = 0; i < c.in_channels; ++i) seg.insert(seg.end(), row.begin(), row.end());
  Tape tape;
  Tensor x = Tensor::from_data(seg, {c.in_channels, c.in_samples});
  Tensor out = gat_layer(tape, x, p, c);
  for (std::size_t i = 1; i < c.in_channels; ++i) {
    for (std::size_t j = 0; j < c.gat_dim; ++j) {
      CHECK(out.at(i, j) == doctest::Approx(out.at(0, j)).epsilon(1e-14));
    }
  }
}

TEST_CASE("two-channel instance matches a scalar reference computation") {
  EncoderConfig c = tiny_config();
  c.in_channels = 2;
  c.in_samples = 4;
  c.conv_kernel = 2;
  c.conv_stride = 2;
  EncoderParams p = init_params(c);
  Rng rng(12);
  std::vector<double> seg(2 * 4);
  for (double& v : seg) v = rng.gaussian();

  // Reference computed element by element.
  const auto& w = p.gat_w.data();   // 4 x 2
  const auto& a = p.gat_a.data();   // 4 x 1
  double h[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int t = 0; t < 4; ++t) s += seg[static_cast<std::size_t>(i * 4 + t)] * w[static_cast<std::size_t>(t * 2 + j)];
      h[i][j] = s;
    }
  }
  auto leaky = [&](double v) { return v > 0.0 ? v : c.leaky_alpha * v; };
  double e[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      e[i][j] = leaky(a[0] * h[i][0] + a[1] * h[i][1] + a[2] * h[j][0] + a[3] * h[j][1]);
    }
  }
  double alpha_ref[2][2];
  for (int i = 0; i < 2; ++i) {
    const double mx = std::max(e[i][0], e[i][1]);
    const double z0 = std::exp(e[i][0] - mx), z1 = std::exp(e[i][1] - mx);
    alpha_ref[i][0] = z0 / (z0 + z1);
    alpha_ref[i][1] = z1 / (z0 + z1);
  }
  double out_ref[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      out_ref[i][j] = alpha_ref[i][0] * h[0][j] + alpha_ref[i][1] * h[1][j];
    }
  }

  Tape tape;
  Tensor x = Tensor::from_data(seg, {2, 4});
  Tensor out = gat_layer(tape, x, p, c);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ==
            doctest::Approx(out_ref[i][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("channel permutation equivariance of gat_layer") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  Rng rng(19);
  std::vector<double> seg(c.in_channels * c.in_samples);
  for (double& v : seg) v = rng.gaussian();
  const std::vector<std::size_t> perm = {2, 0, 1};
  std::vector<double> permuted(seg.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    std::copy_n(seg.data() + perm[i] * c.in_samples, c.in_samples,
                permuted.data() + i * c.in_samples);
  }
  Tape tape;
  Tensor out = gat_layer(tape, Tensor::from_data(seg, {3, c.in_samples}), p, c);
  Tensor out_p = gat_layer(tape, Tensor::from_data(permuted, {3, c.in_samples}), p, c);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < c.gat_dim; ++j) {
      CHECK(out_p.at(i, j) == doctest::Approx(out.at(perm[i], j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encode produces unit rows deterministically") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  Rng rng(23);
  const auto batch = random_batch(rng, c, 4);
  Tape t1;
  Tensor e1 = encode(t1, batch, 4, p, c);
  REQUIRE(e1.shape() == std::vector<std::size_t>{4, 1024});
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 1024; ++j) s += e1.at(i, j) * e1.at(i, j);
    CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-9);
  }
  Tape t2;
  Tensor e2 = encode(t2, batch, 4, p, c);
  CHECK(e1.data() == e2.data());
}

TEST_CASE("encode is invariant to batch order up to row permutation") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  Rng rng(29);
  const auto batch = random_batch(rng, c, 3);
  const std::size_t seg = c.in_channels * c.in_samples;
  std::vector<double> swapped(batch);
  std::copy_n(batch.data() + 2 * seg, seg, swapped.data());
  std::copy_n(batch.data(), seg, swapped.data() + 2 * seg);
  Tape t1, t2;
  Tensor a = encode(t1, batch, 3, p, c);
  Tensor b = encode(t2, swapped, 3, p, c);
  for (std::size_t j = 0; j < 1024; ++j) {
    CHECK(a.at(0, j) == b.at(2, j));
    CHECK(a.at(1, j) == b.at(1, j));
    CHECK(a.at(2, j) == b.at(0, j));
  }
}

TEST_CASE("gradient flows to every parameter") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  Rng rng(31);
  const auto batch = random_batch(rng, c, 3);
  Tape tape;
  Tensor emb = encode(tape, batch, 3, p, c);
  std::vector<double> wdata(emb.size());
  for (double& v : wdata) v = rng.gaussian();
  Tensor w = Tensor::from_data(wdata, emb.shape());
  tape.backward(tape.sum(tape.mul(emb, w)));
  for (const auto& [name, tensor] : p.named_arrays()) {
    INFO(name);
    REQUIRE(tensor->has_grad());
    bool any = false;
    for (double g : tensor->grad()) {
      if (g != 0.0) {
        any = true;
        break;
      }
    }
    CHECK(any);
  }
}

TEST_CASE("full encoder gradients match finite differences") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  Rng rng(37);
  const auto batch = random_batch(rng, c, 2);
  std::vector<double> wdata(2 * c.embed_dim);
  for (double& v : wdata) v = rng.gaussian();

  for (const auto& [name, tensor] : p.named_arrays()) {
    auto f = [&, name = name](Tape& t, const Tensor& v) {
      EncoderParams probe = p;
      for (auto& [n2, t2] : probe.named_arrays()) {
        if (n2 == name) *t2 = v;
      }
      Tensor emb = encode(t, batch, 2, probe, c);
      Tensor w = Tensor::from_data(wdata, {2, c.embed_dim});
      return t.sum(t.mul(emb, w));
    };
    const double err = ad::finite_diff_check(f, *tensor, 1e-5);
    INFO(name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("mask_timesteps") {
  SegmentSet set;
  set.channels = 2;
  set.data.resize(2 * 2 * 400);
  Rng rng(41);
  for (double& v : set.data) v = rng.gaussian();
  set.video_label = {0, 1};
  set.emotion_label = {-1, -1};
  set.subject_id = {1, 1};
  set.split = {Split::Train, Split::Train};

  SUBCASE("full mask zeroes everything") {
    SegmentSet out = mask_timesteps(set, 0, 400);
    for (double v : out.data) CHECK(v == 0.0);
  }
  SUBCASE("partial mask zeroes only the window") {
    SegmentSet out = mask_timesteps(set, 100, 300);
    for (std::size_t s = 0; s < 2; ++s) {
      auto orig = set.segment(s);
      auto seg = out.segment(s);
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t t = 0; t < 400; ++t) {
          const double v = seg[c * 400 + t];
          if (t >= 100 && t < 300) {
            CHECK(v == 0.0);
          } else {
            CHECK(v == orig[c * 400 + t]);
          }
        }
      }
    }
  }
  SUBCASE("degenerate and inverted windows are rejected") {
    CHECK_THROWS_AS(mask_timesteps(set, 0, 0), ConfigError);
    CHECK_THROWS_AS(mask_timesteps(set, 300, 100), ConfigError);
    CHECK_THROWS_AS(mask_timesteps(set, 0, 401), ConfigError);
  }
}

TEST_CASE("params round-trip through the binary file") {
  EncoderConfig c = tiny_config();
  EncoderParams p = init_params(c);
  const auto path = std::filesystem::temp_directory_path() / "eegprobe_params_test.bin";
  save_params(path, p, c);
  auto [loaded, config2] = load_params(path);
  CHECK(config2.in_channels == c.in_channels);
  CHECK(config2.conv_kernel == c.conv_kernel);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(loaded.named_arrays()[i].second->data() == p.named_arrays()[i].second->data());
  }
  Rng rng(43);
  const auto batch = random_batch(rng, c, 2);
  Tape t1, t2;
  CHECK(encode(t1, batch, 2, p, c).data() == encode(t2, batch, 2, loaded, c).data());
}

TEST_CASE("encoder config validation") {
  EncoderConfig c = tiny_config();
  c.embed_dim = 512;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.conv_kernel = 17;  // > in_samples
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.gat_heads = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
