#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "eegprobe/errors.hpp"
#include "eegprobe/montage.hpp"
#include "eegprobe/preprocess.hpp"
#include "eegprobe/rng.hpp"
#include "eegprobe/signal_io.hpp"

using namespace eegprobe;

namespace {

Recording waveform_recording(std::size_t channels, std::size_t samples, double fs,
                             const std::function<double(std::size_t, std::size_t)>& f) {
  Recording r;
  r.subject_id = 1;
  r.sample_rate_hz = fs;
  r.channels = channels;
  r.samples = samples;
  for (std::size_t c = 0; c < channels; ++c) {
    r.channel_labels.push_back("ch" + std::to_string(c + 1));
  }
  r.data.resize(channels * samples);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < samples; ++t) r.row(c)[t] = f(c, t);
  }
  return r;
}

double rms_middle(const double* x, std::size_t n) {
  const std::size_t lo = n / 4, hi = n - n / 4;
  double s = 0.0;
  for (std::size_t t = lo; t < hi; ++t) s += x[t] * x[t];
  return std::sqrt(s / static_cast<double>(hi - lo));
}

// Steady-state gain of a filter at freq_hz, measured over the middle half of
// a long sine.
double sine_gain_db(const std::function<Recording(const Recording&)>& filter,
                    double freq_hz, double fs) {
  const std::size_t n = static_cast<std::size_t>(fs) * 40;
  Recording in = waveform_recording(1, n, fs, [&](std::size_t, std::size_t t) {
    return std::sin(2.0 * M_PI * freq_hz * static_cast<double>(t) / fs);
  });
  Recording out = filter(in);
  return 20.0 * std::log10(rms_middle(out.row(0), n) / rms_middle(in.row(0), n));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("interpolate_bad_channels") {
  const Montage seed = load_builtin("seed_v1");
  Rng rng(1);
  Recording rec = waveform_recording(62, 50, 200.0, [&](std::size_t, std::size_t) {
    return rng.gaussian();
  });

  SUBCASE("empty bad set is the identity") {
    Recording out = interpolate_bad_channels(rec, {}, seed);
    CHECK(out.data == rec.data);
  }
  SUBCASE("bad channel becomes the mean of its lobe mates") {
    // lobes_temporal_left = {15, 24, 33}; make channel 15 (0-based 14) bad.
    Recording out = interpolate_bad_channels(rec, {14}, seed);
    for (std::size_t t = 0; t < rec.samples; ++t) {
      const double expect = 0.5 * (rec.row(23)[t] + rec.row(32)[t]);
      CHECK(out.row(14)[t] == doctest::Approx(expect).epsilon(1e-12));
    }
    // Other channels untouched.
    CHECK(std::equal(out.row(0), out.row(0) + rec.samples, rec.row(0)));
  }
  SUBCASE("identical lobe mates reproduce their signal") {
    for (std::size_t t = 0; t < rec.samples; ++t) {
      rec.row(23)[t] = rec.row(32)[t] = 3.25;
    }
    Recording out = interpolate_bad_channels(rec, {14}, seed);
    for (std::size_t t = 0; t < rec.samples; ++t) CHECK(out.row(14)[t] == 3.25);
  }
  SUBCASE("whole lobe bad is an error naming the channel") {
    CHECK_THROWS_WITH_AS(interpolate_bad_channels(rec, {14, 23, 32}, seed),
                         doctest::Contains("15"), ConfigError);
  }
  SUBCASE("channel outside every lobe region is an error") {
    // seed_v1 channel 25 is only in hemisphere/ear regions, not lobes_*.
    CHECK_THROWS_AS(interpolate_bad_channels(rec, {24}, seed), ConfigError);
  }
}

TEST_CASE("reref_average") {
  SUBCASE("two channels [1,3] become [-1,1]") {
    Recording rec = waveform_recording(2, 4, 200.0, [](std::size_t c, std::size_t) {
      return c == 0 ? 1.0 : 3.0;
    });
    Recording out = reref_average(rec);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(out.row(0)[t] == doctest::Approx(-1.0));
      CHECK(out.row(1)[t] == doctest::Approx(1.0));
    }
  }
  SUBCASE("identical channels go to zero") {
    Recording rec = waveform_recording(3, 5, 200.0, [](std::size_t, std::size_t t) {
      return 0.5 * static_cast<double>(t);
    });
    Recording out = reref_average(rec);
    for (double v : out.data) CHECK(v == doctest::Approx(0.0));
  }
  SUBCASE("column means vanish; EOG untouched; idempotent") {
    Rng rng(3);
    Recording rec = waveform_recording(5, 100, 200.0, [&](std::size_t, std::size_t) {
      return rng.gaussian();
    });
    rec.eog_channels = {4};
    Recording out = reref_average(rec);
    for (std::size_t t = 0; t < rec.samples; ++t) {
      double mean = 0.0;
      for (std::size_t c = 0; c < 4; ++c) mean += out.row(c)[t];
      CHECK(std::abs(mean / 4.0) < 1e-12);
      CHECK(out.row(4)[t] == rec.row(4)[t]);
    }
    Recording twice = reref_average(out);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      CHECK(std::abs(twice.data[i] - out.data[i]) < 1e-12);
    }
  }
  SUBCASE("single channel is rejected") {
    Recording rec = waveform_recording(1, 10, 200.0, [](std::size_t, std::size_t) {
      return 1.0;
    });
    CHECK_THROWS_AS(reref_average(rec), ConfigError);
  }
}

TEST_CASE("notch filter frequency response") {
  const double fs = 200.0;
  auto notch = [&](const Recording& r) { return notch_filter(r, 50.0, 30.0); };
  CHECK(sine_gain_db(notch, 50.0, fs) <= -30.0);
  CHECK(std::abs(sine_gain_db(notch, 10.0, fs)) < 1.0);
  CHECK(std::abs(sine_gain_db(notch, 40.0, fs)) < 1.0);
  CHECK(std::abs(sine_gain_db(notch, 60.0, fs)) < 1.0);

  Recording rec = waveform_recording(1, 100, fs, [](std::size_t, std::size_t) {
    return 1.0;
  });
  CHECK_THROWS_AS(notch_filter(rec, 120.0, 30.0), ConfigError);
}

TEST_CASE("high-pass filter frequency response") {
  const double fs = 200.0;
  auto hp = [&](const Recording& r) { return highpass_filter(r, 0.5); };
  CHECK(std::abs(sine_gain_db(hp, 2.0, fs)) < 1.0);
  CHECK(std::abs(sine_gain_db(hp, 10.0, fs)) < 1.0);
  // DC is fully in the stopband.
  Recording dc = waveform_recording(1, 2000, fs, [](std::size_t, std::size_t) {
    return 5.0;
  });
  Recording out = highpass_filter(dc, 0.5);
  double peak = 0.0;
  for (std::size_t t = 500; t < 1500; ++t) peak = std::max(peak, std::abs(out.row(0)[t]));
  CHECK(peak < 1e-3 * 5.0);

  CHECK_THROWS_AS(highpass_filter(dc, 100.0), ConfigError);
}

TEST_CASE("zero-phase: symmetric pulse keeps its peak") {
  const double fs = 200.0;
  Recording rec = waveform_recording(1, 1000, fs, [](std::size_t, std::size_t t) {
    const double d = static_cast<double>(t) - 500.0;
    return std::exp(-d * d / (2.0 * 20.0 * 20.0));
  });
  for (const Recording& out :
       {notch_filter(rec, 50.0, 30.0), highpass_filter(rec, 0.5)}) {
    std::size_t argmax = 0;
    for (std::size_t t = 1; t < out.samples; ++t) {
      if (out.row(0)[t] > out.row(0)[argmax]) argmax = t;
    }
    CHECK(std::abs(static_cast<long long>(argmax) - 500) <= 1);
  }
}

TEST_CASE("resample") {
  SUBCASE("equal rate is the identity") {
    Rng rng(9);
    Recording rec = waveform_recording(2, 123, 200.0, [&](std::size_t, std::size_t) {
      return rng.gaussian();
    });
    Recording out = resample(rec, 200.0);
    CHECK(out.data == rec.data);
    CHECK(out.samples == rec.samples);
  }
  SUBCASE("2 s at 2048 Hz becomes 400 samples") {
    Recording rec = waveform_recording(1, 4096, 2048.0, [](std::size_t, std::size_t) {
      return 0.0;
    });
    Recording out = resample(rec, 200.0);
    CHECK(out.samples == 400);
    CHECK(out.sample_rate_hz == 200.0);
  }
  SUBCASE("10 Hz sine survives 2048 -> 200 Hz") {
    const double fs = 2048.0;
    Recording rec = waveform_recording(1, 4096, fs, [&](std::size_t, std::size_t t) {
      return std::sin(2.0 * M_PI * 10.0 * static_cast<double>(t) / fs);
    });
    Recording out = resample(rec, 200.0);
    std::vector<double> got, want;
    for (std::size_t t = 32; t + 32 < out.samples; ++t) {
      got.push_back(out.row(0)[t]);
      want.push_back(std::sin(2.0 * M_PI * 10.0 * static_cast<double>(t) / 200.0));
    }
    CHECK(pearson(got, want) > 0.999);
  }
  SUBCASE("upsampling is rejected") {
    Recording rec = waveform_recording(1, 100, 200.0, [](std::size_t, std::size_t) {
      return 0.0;
    });
    CHECK_THROWS_AS(resample(rec, 400.0), ConfigError);
  }
}

TEST_CASE("eog_regress") {
  const std::size_t n = 2000;
  SUBCASE("contaminated channel loses its EOG correlation") {
    Rng rng(17);
    std::vector<double> eog(n), clean(n);
    for (std::size_t t = 0; t < n; ++t) {
      eog[t] = rng.gaussian();
      clean[t] = rng.gaussian();
    }
    Recording rec = waveform_recording(2, n, 200.0, [&](std::size_t c, std::size_t t) {
      return c == 0 ? 0.8 * eog[t] + clean[t] : eog[t];
    });
    rec.eog_channels = {1};
    Recording out = eog_regress(rec);
    CHECK(out.channels == 1);
    std::vector<double> res(out.row(0), out.row(0) + n);
    CHECK(std::abs(pearson(res, eog)) < 0.05);
  }
  SUBCASE("independent channel just loses its mean") {
    Recording rec = waveform_recording(2, n, 200.0, [&](std::size_t c, std::size_t t) {
      const double x = 2.0 * M_PI * static_cast<double>(t) / static_cast<double>(n);
      return c == 0 ? std::cos(8.0 * x) + 0.7 : std::sin(5.0 * x);
    });
    rec.eog_channels = {1};
    Recording out = eog_regress(rec);
    for (std::size_t t = 0; t < n; ++t) {
      const double x = 2.0 * M_PI * static_cast<double>(t) / static_cast<double>(n);
      CHECK(out.row(0)[t] == doctest::Approx(std::cos(8.0 * x)).epsilon(1e-9));
    }
  }
  SUBCASE("perfect fit leaves near-zero residual") {
    Rng rng(23);
    std::vector<double> eog(n);
    for (double& v : eog) v = rng.gaussian();
    Recording rec = waveform_recording(2, n, 200.0, [&](std::size_t, std::size_t t) {
      return eog[t];
    });
    rec.eog_channels = {1};
    Recording out = eog_regress(rec);
    double rms_out = 0, rms_in = 0;
    for (std::size_t t = 0; t < n; ++t) {
      rms_out += out.row(0)[t] * out.row(0)[t];
      rms_in += eog[t] * eog[t];
    }
    CHECK(std::sqrt(rms_out / rms_in) < 1e-9);
  }
  SUBCASE("duplicated EOG channels fall back to pseudo-inverse with a warning") {
    Rng rng(29);
    std::vector<double> eog(n);
    for (double& v : eog) v = rng.gaussian();
    Recording rec = waveform_recording(3, n, 200.0, [&](std::size_t c, std::size_t t) {
      return c == 0 ? 0.5 * eog[t] + rng.uniform() : eog[t];
    });
    rec.eog_channels = {1, 2};
    std::vector<std::string> warnings;
    Recording out = eog_regress(rec, &warnings);
    CHECK(out.channels == 1);
    CHECK(warnings.size() == 1);
    std::vector<double> res(out.row(0), out.row(0) + n);
    CHECK(std::abs(pearson(res, eog)) < 0.05);
  }
  SUBCASE("no EOG channels is an error") {
    Recording rec = waveform_recording(2, 10, 200.0, [](std::size_t, std::size_t) {
      return 1.0;
    });
    CHECK_THROWS_AS(eog_regress(rec), ConfigError);
  }
}

TEST_CASE("segment") {
  Rng rng(31);
  Recording rec = waveform_recording(3, 1000, 200.0, [&](std::size_t, std::size_t) {
    return rng.gaussian();
  });
  const auto segs = segment(rec);
  CHECK(segs.size() == 2);  // 200 samples discarded
  // Concatenated segments reproduce the first 800 samples bit-exactly.
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 400; ++t) {
      CHECK(segs[0][c * 400 + t] == rec.row(c)[t]);
      CHECK(segs[1][c * 400 + t] == rec.row(c)[400 + t]);
    }
  }

  Recording exact = waveform_recording(2, 400, 200.0, [&](std::size_t, std::size_t) {
    return rng.gaussian();
  });
  const auto one = segment(exact);
  REQUIRE(one.size() == 1);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 400; ++t) CHECK(one[0][c * 400 + t] == exact.row(c)[t]);
  }

  Recording tiny = waveform_recording(1, 399, 200.0, [](std::size_t, std::size_t) {
    return 0.0;
  });
  CHECK(segment(tiny).empty());

  Recording wrong_rate = waveform_recording(1, 500, 500.0, [](std::size_t, std::size_t) {
    return 0.0;
  });
  CHECK_THROWS_AS(segment(wrong_rate), ConfigError);
}

TEST_CASE("segment_labeled uses annotation midpoints") {
  Recording rec = waveform_recording(2, 1200, 200.0, [](std::size_t, std::size_t t) {
    return static_cast<double>(t);
  });
  rec.subject_id = 7;
  rec.annotations = {{0.0, 4.0, 1, 0}, {4.0, 6.0, 0, 2}};
  SegmentSet set = segment_labeled(rec);
  REQUIRE(set.size() == 3);
  CHECK(set.video_label == std::vector<int>{1, 1, 0});
  CHECK(set.emotion_label == std::vector<int>{0, 0, 2});
  CHECK(set.subject_id == std::vector<int>{7, 7, 7});

  rec.annotations.clear();
  CHECK_THROWS_AS(segment_labeled(rec), FormatError);
}

namespace {

SegmentSet labeled_set(int classes, int per_class, int subjects) {
  SegmentSet set;
  set.channels = 1;
  int n = classes * per_class * subjects;
  set.data.assign(static_cast<std::size_t>(n) * 400, 0.0);
  for (int s = 0; s < subjects; ++s) {
    for (int k = 0; k < classes; ++k) {
      for (int r = 0; r < per_class; ++r) {
        set.video_label.push_back(k);
        set.emotion_label.push_back(-1);
        set.subject_id.push_back(s + 1);
        set.split.push_back(Split::Train);
      }
    }
  }
  return set;
}

}  // namespace

TEST_CASE("split_within: 10 per class gives 8/1/1") {
  SegmentSet set = labeled_set(3, 10, 1);
  SegmentSet out = split_within(set, {0.8, 0.1, 0.1}, 5);
  for (int k = 0; k < 3; ++k) {
    int train = 0, val = 0, test = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out.video_label[i] != k) continue;
      if (out.split[i] == Split::Train) ++train;
      if (out.split[i] == Split::Val) ++val;
      if (out.split[i] == Split::Test) ++test;
    }
    CHECK(train == 8);
    CHECK(val == 1);
    CHECK(test == 1);
  }
}

TEST_CASE("split_within is deterministic and partitions the set") {
  SegmentSet set = labeled_set(4, 13, 2);
  SegmentSet a = split_within(set, {0.8, 0.1, 0.1}, 123);
  SegmentSet b = split_within(set, {0.8, 0.1, 0.1}, 123);
  CHECK(a.split == b.split);
  SegmentSet c = split_within(set, {0.8, 0.1, 0.1}, 124);
  CHECK(a.split != c.split);
  CHECK(a.count_split(Split::Train) + a.count_split(Split::Val) +
            a.count_split(Split::Test) ==
        a.size());

  SegmentSet small = labeled_set(1, 2, 1);
  CHECK_THROWS_WITH_AS(split_within(small, {0.8, 0.1, 0.1}, 1),
                       doctest::Contains("class 0"), ConfigError);
}

TEST_CASE("split_leave_two") {
  SegmentSet set = labeled_set(2, 4, 15);
  SegmentSet out = split_leave_two(set, {14, 15});
  std::set<int> test_subjects, train_subjects;
  for (std::size_t i = 0; i < out.size(); ++i) {
    (out.split[i] == Split::Test ? test_subjects : train_subjects)
        .insert(out.subject_id[i]);
  }
  CHECK(test_subjects == std::set<int>{14, 15});
  CHECK(train_subjects.count(14) == 0);
  CHECK(train_subjects.count(15) == 0);
  CHECK(out.count_split(Split::Val) == 0);
  CHECK(out.size() == set.size());

  CHECK_THROWS_AS(split_leave_two(set, {14, 99}), ConfigError);
}

TEST_CASE("pipeline runs in order and never mutates its input") {
  SynthSpec spec;
  spec.n_subjects = 1;
  spec.n_classes = 2;
  spec.segments_per_class_per_subject = 2;
  spec.channels = 62;
  spec.signal_region = "noseback_left";
  spec.window_start = 100;
  spec.window_end = 300;
  spec.class_freqs_hz = {8.0, 16.0};
  spec.snr_db = 0.0;
  spec.seed = 3;
  auto recs = synth_recordings(spec);
  const std::vector<double> before = recs[0].data;
  PreprocessConfig config;
  const Montage seed = load_builtin("seed_v1");
  Recording out = preprocess_recording(recs[0], config, seed);
  CHECK(recs[0].data == before);
  CHECK(out.sample_rate_hz == 200.0);
  CHECK(out.samples == recs[0].samples);  // 200 -> 200 keeps length
  SegmentSet segs = segment_labeled(out);
  CHECK(segs.size() == 4);
}
