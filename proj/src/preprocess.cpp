#include "eegprobe/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eegprobe/errors.hpp"
#include "eegprobe/rng.hpp"

namespace eegprobe {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Normalized biquad (a0 = 1), direct form II transposed.
struct Biquad {
  double b0, b1, b2, a1, a2;

  // State matched to a constant input x0, so a DC signal produces its exact
  // steady-state response from the first sample.
  void apply(std::vector<double>& x) const {
    if (x.empty()) return;
    const double x0 = x.front();
    const double y0 = x0 * (b0 + b1 + b2) / (1.0 + a1 + a2);
    double z1 = (b1 + b2) * x0 - (a1 + a2) * y0;
    double z2 = b2 * x0 - a2 * y0;
    for (double& v : x) {
      const double in = v;
      const double out = b0 * in + z1;
      z1 = b1 * in - a1 * out + z2;
      z2 = b2 * in - a2 * out;
      v = out;
    }
  }

  void filtfilt(std::vector<double>& x) const {
    apply(x);
    std::reverse(x.begin(), x.end());
    apply(x);
    std::reverse(x.begin(), x.end());
  }
};

Biquad design_notch(double f0, double q, double fs) {
  const double w0 = 2.0 * kPi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {1.0 / a0, -2.0 * c / a0, 1.0 / a0, -2.0 * c / a0, (1.0 - alpha) / a0};
}

Biquad design_highpass(double fc, double q, double fs) {
  const double w0 = 2.0 * kPi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0,
          -2.0 * c / a0, (1.0 - alpha) / a0};
}

Recording filter_all_channels(const Recording& rec, const std::vector<Biquad>& sections) {
  rec.validate();
  Recording out = rec;
  for (std::size_t c = 0; c < out.channels; ++c) {
    std::vector<double> chan(out.row(c), out.row(c) + out.samples);
    for (const Biquad& bq : sections) bq.filtfilt(chan);
    std::copy(chan.begin(), chan.end(), out.row(c));
  }
  return out;
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-18) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Jacobi eigendecomposition for small symmetric matrices; returns true if a
// pseudo-inverse (dropped eigenvalue) was needed.
bool symmetric_solve(std::vector<std::vector<double>> g, std::vector<double>& rhs) {
  const std::size_t n = g.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += g[p][q] * g[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(g[p][q]) < 1e-300) continue;
        const double theta = (g[q][q] - g[p][p]) / (2.0 * g[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double gip = g[i][p], giq = g[i][q];
          g[i][p] = c * gip - s * giq;
          g[i][q] = s * gip + c * giq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double gpi = g[p][i], gqi = g[q][i];
          g[p][i] = c * gpi - s * gqi;
          g[q][i] = s * gpi + c * gqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  double max_eig = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_eig = std::max(max_eig, std::abs(g[i][i]));
  const double tol = max_eig * 1e-10;
  bool deficient = false;
  // x = V diag(1/lambda) V^T rhs, dropping tiny eigenvalues
  std::vector<double> proj(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) proj[i] += v[j][i] * rhs[j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(g[i][i]) <= tol) {
      proj[i] = 0.0;
      deficient = true;
    } else {
      proj[i] /= g[i][i];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) x[i] += v[i][j] * proj[j];
  }
  rhs = std::move(x);
  return deficient;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (!(0.0 < highpass_hz && highpass_hz < notch_hz &&
        notch_hz < target_rate_hz / 2.0)) {
    throw ConfigError("preprocess config must satisfy 0 < highpass < notch < target/2");
  }
  if (!(notch_q > 0.0)) throw ConfigError("notch_q must be positive");
  for (const auto& [subject, chans] : bad_channels) {
    for (int c : chans) {
      if (c < 1) {
        throw ConfigError("bad channel numbers are 1-based; got " + std::to_string(c) +
                          " for subject " + std::to_string(subject));
      }
    }
  }
}

PreprocessConfig PreprocessConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("preprocess config parse error: ") + e.what());
  }
  PreprocessConfig c;
  try {
    c.notch_hz = j.value("notch_hz", 50.0);
    c.notch_q = j.value("notch_q", 30.0);
    c.highpass_hz = j.value("highpass_hz", 0.5);
    c.target_rate_hz = j.value("target_rate_hz", 200.0);
    if (j.contains("bad_channels")) {
      for (const auto& [subject, chans] : j.at("bad_channels").items()) {
        c.bad_channels[std::stoi(subject)] = chans.get<std::vector<int>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("preprocess config schema error: ") + e.what());
  }
  c.validate();
  return c;
}

PreprocessConfig PreprocessConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open preprocess config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string PreprocessConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["notch_hz"] = notch_hz;
  j["notch_q"] = notch_q;
  j["highpass_hz"] = highpass_hz;
  j["target_rate_hz"] = target_rate_hz;
  nlohmann::ordered_json bads = nlohmann::ordered_json::object();
  for (const auto& [subject, chans] : bad_channels) {
    bads[std::to_string(subject)] = chans;
  }
  j["bad_channels"] = std::move(bads);
  return j.dump(2) + "\n";
}

Recording interpolate_bad_channels(const Recording& rec,
                                   const std::vector<std::size_t>& bad,
                                   const Montage& montage) {
  rec.validate();
  Recording out = rec;
  if (bad.empty()) return out;
  std::set<std::size_t> bad_set;
  for (std::size_t b : bad) {
    if (b >= rec.channels) {
      throw ConfigError("bad channel index " + std::to_string(b) + " out of range");
    }
    bad_set.insert(b);
  }
  for (std::size_t b : bad_set) {
    const auto lobe = montage.lobe_region_of(static_cast<int>(b) + 1);
    if (!lobe) {
      throw ConfigError("cannot interpolate channel " + std::to_string(b + 1) +
                        ": no lobe region contains it in montage '" + montage.name + "'");
    }
    std::vector<std::size_t> good;
    for (int idx : montage.region(*lobe)) {
      const std::size_t c = static_cast<std::size_t>(idx - 1);
      if (c < rec.channels && bad_set.count(c) == 0) good.push_back(c);
    }
    if (good.empty()) {
      throw ConfigError("cannot interpolate channel " + std::to_string(b + 1) +
                        ": lobe region '" + *lobe + "' has no good channels");
    }
    double* dst = out.row(b);
    for (std::size_t t = 0; t < rec.samples; ++t) {
      double s = 0.0;
      for (std::size_t g : good) s += rec.row(g)[t];
      dst[t] = s / static_cast<double>(good.size());
    }
  }
  return out;
}

Recording reref_average(const Recording& rec) {
  rec.validate();
  std::vector<bool> is_eog(rec.channels, false);
  for (std::size_t e : rec.eog_channels) is_eog[e] = true;
  std::size_t n_eeg = 0;
  for (std::size_t c = 0; c < rec.channels; ++c) n_eeg += is_eog[c] ? 0 : 1;
  if (n_eeg < 2) throw ConfigError("average re-reference needs at least 2 non-EOG channels");
  Recording out = rec;
  for (std::size_t t = 0; t < rec.samples; ++t) {
    double mean = 0.0;
    for (std::size_t c = 0; c < rec.channels; ++c) {
      if (!is_eog[c]) mean += rec.row(c)[t];
    }
    mean /= static_cast<double>(n_eeg);
    for (std::size_t c = 0; c < rec.channels; ++c) {
      if (!is_eog[c]) out.row(c)[t] = rec.row(c)[t] - mean;
    }
  }
  return out;
}

Recording notch_filter(const Recording& rec, double notch_hz, double q) {
  if (!(notch_hz > 0.0) || !(q > 0.0)) throw ConfigError("notch frequency and Q must be positive");
  if (notch_hz >= rec.sample_rate_hz / 2.0) {
    throw ConfigError("notch frequency must be below Nyquist");
  }
  return filter_all_channels(rec, {design_notch(notch_hz, q, rec.sample_rate_hz)});
}

Recording highpass_filter(const Recording& rec, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw ConfigError("high-pass cutoff must be positive");
  if (cutoff_hz >= rec.sample_rate_hz / 2.0) {
    throw ConfigError("high-pass cutoff must be below Nyquist");
  }
  // Butterworth-4 = cascade of two sections with Q = 1/(2 cos(pi/8)),
  // 1/(2 cos(3 pi/8)).
  const double q1 = 1.0 / (2.0 * std::cos(kPi / 8.0));
  const double q2 = 1.0 / (2.0 * std::cos(3.0 * kPi / 8.0));
  return filter_all_channels(rec, {design_highpass(cutoff_hz, q1, rec.sample_rate_hz),
                                   design_highpass(cutoff_hz, q2, rec.sample_rate_hz)});
}

Recording resample(const Recording& rec, double target_rate_hz) {
  rec.validate();
  if (!(target_rate_hz > 0.0)) throw ConfigError("target rate must be positive");
  if (target_rate_hz > rec.sample_rate_hz) {
    throw ConfigError("upsampling is unsupported (target " + std::to_string(target_rate_hz) +
                      " Hz above source " + std::to_string(rec.sample_rate_hz) + " Hz)");
  }
  if (target_rate_hz == rec.sample_rate_hz) return rec;

  const double ratio = target_rate_hz / rec.sample_rate_hz;
  const std::size_t out_samples = static_cast<std::size_t>(
      std::llround(static_cast<double>(rec.samples) * ratio));
  const double beta = 8.6;
  const double half_width = 64.0 / ratio;  // 64 zero-crossings of the scaled sinc
  const double i0_beta = bessel_i0(beta);

  Recording out = rec;
  out.sample_rate_hz = target_rate_hz;
  out.samples = out_samples;
  out.data.assign(rec.channels * out_samples, 0.0);
  for (std::size_t c = 0; c < rec.channels; ++c) {
    const double* src = rec.row(c);
    double* dst = out.row(c);
    for (std::size_t n = 0; n < out_samples; ++n) {
      const double p = static_cast<double>(n) / ratio;
      const auto lo = static_cast<long long>(std::ceil(p - half_width));
      const auto hi = static_cast<long long>(std::floor(p + half_width));
      const long long m0 = std::max<long long>(0, lo);
      const long long m1 = std::min<long long>(static_cast<long long>(rec.samples) - 1, hi);
      double acc = 0.0;
      for (long long m = m0; m <= m1; ++m) {
        const double t = p - static_cast<double>(m);
        const double u = t / half_width;
        const double arg = std::max(0.0, 1.0 - u * u);  // edge taps can round past 1
        const double window = bessel_i0(beta * std::sqrt(arg)) / i0_beta;
        acc += src[m] * ratio * sinc(ratio * t) * window;
      }
      dst[n] = acc;
    }
  }
  // Annotations are in seconds and survive unchanged.
  return out;
}

Recording eog_regress(const Recording& rec, std::vector<std::string>* warnings) {
  rec.validate();
  if (rec.eog_channels.empty()) {
    throw ConfigError("eog_regress: recording has no EOG channels");
  }
  const std::size_t k = rec.eog_channels.size();
  const std::size_t n = rec.samples;
  const std::size_t dims = k + 1;  // regressors + intercept

  // Gram matrix of [eog_1 .. eog_k, 1].
  std::vector<std::vector<double>> gram(dims, std::vector<double>(dims, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    const double* ei = rec.row(rec.eog_channels[i]);
    for (std::size_t j = i; j < k; ++j) {
      const double* ej = rec.row(rec.eog_channels[j]);
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += ei[t] * ej[t];
      gram[i][j] = gram[j][i] = s;
    }
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) s += ei[t];
    gram[i][k] = gram[k][i] = s;
  }
  gram[k][k] = static_cast<double>(n);

  std::vector<bool> is_eog(rec.channels, false);
  for (std::size_t e : rec.eog_channels) is_eog[e] = true;

  Recording out;
  out.subject_id = rec.subject_id;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.annotations = rec.annotations;
  out.channels = rec.channels - k;
  out.samples = n;
  out.data.resize(out.channels * n);
  bool warned = false;
  std::size_t oc = 0;
  for (std::size_t c = 0; c < rec.channels; ++c) {
    if (is_eog[c]) continue;
    out.channel_labels.push_back(rec.channel_labels[c]);
    const double* y = rec.row(c);
    std::vector<double> rhs(dims, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const double* ei = rec.row(rec.eog_channels[i]);
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += ei[t] * y[t];
      rhs[i] = s;
    }
    for (std::size_t t = 0; t < n; ++t) rhs[k] += y[t];
    const bool deficient = symmetric_solve(gram, rhs);
    if (deficient && !warned) {
      warned = true;
      if (warnings) {
        warnings->push_back("eog_regress: rank-deficient EOG regressors; using pseudo-inverse");
      }
    }
    double* dst = out.row(oc++);
    for (std::size_t t = 0; t < n; ++t) {
      double fit = rhs[k];
      for (std::size_t i = 0; i < k; ++i) fit += rhs[i] * rec.row(rec.eog_channels[i])[t];
      dst[t] = y[t] - fit;
    }
  }
  out.validate();
  return out;
}

std::vector<std::vector<double>> segment(const Recording& rec, double seconds) {
  rec.validate();
  if (std::abs(rec.sample_rate_hz - 200.0) > 1e-9) {
    throw ConfigError("segment: recording must be at 200 Hz (got " +
                      std::to_string(rec.sample_rate_hz) + ")");
  }
  const std::size_t window =
      static_cast<std::size_t>(std::llround(seconds * rec.sample_rate_hz));
  if (window == 0) throw ConfigError("segment: window must be positive");
  const std::size_t count = rec.samples / window;
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> seg(rec.channels * window);
    for (std::size_t c = 0; c < rec.channels; ++c) {
      std::copy_n(rec.row(c) + i * window, window, seg.data() + c * window);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

SegmentSet segment_labeled(const Recording& rec) {
  if (rec.annotations.empty()) {
    throw FormatError("recording of subject " + std::to_string(rec.subject_id) +
                      " has no annotations; segments cannot be labeled");
  }
  const auto windows = segment(rec);
  SegmentSet set;
  set.channels = rec.channels;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double mid_s = (static_cast<double>(i) + 0.5) *
                         static_cast<double>(SegmentSet::kSamplesPerSegment) /
                         rec.sample_rate_hz;
    const Recording::Annotation* hit = nullptr;
    for (const auto& a : rec.annotations) {
      if (a.start_s <= mid_s && mid_s < a.end_s) {
        hit = &a;
        break;
      }
    }
    if (!hit) continue;  // unannotated stretch
    set.data.insert(set.data.end(), windows[i].begin(), windows[i].end());
    set.video_label.push_back(hit->video);
    set.emotion_label.push_back(hit->emotion);
    set.subject_id.push_back(rec.subject_id);
    set.split.push_back(Split::Train);
  }
  return set;
}

Recording preprocess_recording(const Recording& rec, const PreprocessConfig& config,
                               const Montage& montage,
                               std::vector<std::string>* warnings) {
  config.validate();
  std::vector<std::size_t> bad;
  auto it = config.bad_channels.find(rec.subject_id);
  if (it != config.bad_channels.end()) {
    for (int c : it->second) bad.push_back(static_cast<std::size_t>(c - 1));
  }
  Recording r = interpolate_bad_channels(rec, bad, montage);
  r = reref_average(r);
  r = notch_filter(r, config.notch_hz, config.notch_q);
  r = highpass_filter(r, config.highpass_hz);
  r = resample(r, config.target_rate_hz);
  if (!r.eog_channels.empty()) r = eog_regress(r, warnings);
  return r;
}

SegmentSet split_within(const SegmentSet& set, std::array<double, 3> ratios,
                        std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < set.size(); ++i) by_class[set.video_label[i]].push_back(i);

  SegmentSet out = set;
  Rng rng(seed);
  for (auto& [label, indices] : by_class) {
    const std::size_t n = indices.size();
    if (n < 3) {
      throw ConfigError("video class " + std::to_string(label) + " has only " +
                        std::to_string(n) + " segments; need at least 3 to split");
    }
    rng.shuffle(indices);
    std::array<std::size_t, 3> counts;
    std::array<double, 3> remainders;
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = ratios[static_cast<std::size_t>(s)] * static_cast<double>(n);
      counts[static_cast<std::size_t>(s)] = static_cast<std::size_t>(std::floor(exact));
      remainders[static_cast<std::size_t>(s)] =
          exact - std::floor(exact);
      assigned += counts[static_cast<std::size_t>(s)];
    }
    // Largest remainder; ties resolved in train, val, test order.
    while (assigned < n) {
      int best = 0;
      for (int s = 1; s < 3; ++s) {
        if (remainders[static_cast<std::size_t>(s)] >
            remainders[static_cast<std::size_t>(best)]) {
          best = s;
        }
      }
      counts[static_cast<std::size_t>(best)] += 1;
      remainders[static_cast<std::size_t>(best)] = -1.0;
      assigned += 1;
    }
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      const Split tag = s == 0 ? Split::Train : s == 1 ? Split::Val : Split::Test;
      for (std::size_t i = 0; i < counts[static_cast<std::size_t>(s)]; ++i) {
        out.split[indices[pos++]] = tag;
      }
    }
  }
  return out;
}

SegmentSet split_leave_two(const SegmentSet& set, std::pair<int, int> test_subjects) {
  std::set<int> present(set.subject_id.begin(), set.subject_id.end());
  for (int s : {test_subjects.first, test_subjects.second}) {
    if (present.count(s) == 0) {
      throw ConfigError("unknown test subject " + std::to_string(s));
    }
  }
  SegmentSet out = set;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const int subj = set.subject_id[i];
    out.split[i] = (subj == test_subjects.first || subj == test_subjects.second)
                       ? Split::Test
                       : Split::Train;
  }
  return out;
}

}  // namespace eegprobe
