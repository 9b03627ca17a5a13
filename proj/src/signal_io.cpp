#include "eegprobe/signal_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eegprobe/errors.hpp"
#include "eegprobe/montage.hpp"
#include "eegprobe/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "pack raw files are little-endian; big-endian hosts are unsupported");

namespace eegprobe {

namespace {

constexpr double kPi = 3.14159265358979323846;

void write_f32_file(const std::filesystem::path& path, const std::vector<double>& values) {
  std::vector<float> f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out) throw FormatError("short write to " + path.string());
}

std::vector<double> read_f32_file(const std::filesystem::path& path,
                                  std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_count * sizeof(float)) {
    throw FormatError("file " + path.filename().string() + " holds " +
                      std::to_string(bytes / sizeof(float)) + " samples but manifest declares " +
                      std::to_string(expected_count));
  }
  in.seekg(0);
  std::vector<float> f(expected_count);
  in.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("short read from " + path.string());
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) out[i] = static_cast<double>(f[i]);
  return out;
}

nlohmann::ordered_json parse_json_file(const std::filesystem::path& path,
                                       const char* what) {
  std::ifstream in(path);
  if (!in) throw FormatError(std::string("missing ") + what + ": " + path.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt ") + what + " " + path.string() + ": " + e.what());
  }
}

}  // namespace

void Recording::validate() const {
  if (channels == 0 || samples == 0) throw FormatError("recording must have channels and samples");
  if (channel_labels.size() != channels) {
    throw FormatError("recording has " + std::to_string(channel_labels.size()) +
                      " channel labels for " + std::to_string(channels) + " channels");
  }
  if (data.size() != channels * samples) {
    throw FormatError("recording data size does not match channels x samples");
  }
  if (!(sample_rate_hz > 0.0)) throw FormatError("recording sample rate must be positive");
  std::set<std::size_t> seen;
  for (std::size_t e : eog_channels) {
    if (e >= channels) throw FormatError("EOG index out of range");
    if (!seen.insert(e).second) throw FormatError("duplicate EOG index");
  }
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw FormatError("invalid split tag '" + name + "' (expected train, val or test)");
}

std::size_t SegmentSet::count_split(Split s) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

SegmentSet SegmentSet::filter_split(Split s) const {
  SegmentSet out;
  out.channels = channels;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] != s) continue;
    auto seg = segment(i);
    out.data.insert(out.data.end(), seg.begin(), seg.end());
    out.video_label.push_back(video_label[i]);
    out.emotion_label.push_back(emotion_label[i]);
    out.subject_id.push_back(subject_id[i]);
    out.split.push_back(split[i]);
  }
  return out;
}

std::size_t SegmentSet::num_classes() const {
  std::set<int> labels(video_label.begin(), video_label.end());
  return labels.size();
}

void SegmentSet::validate() const {
  const std::size_t n = video_label.size();
  if (emotion_label.size() != n || subject_id.size() != n || split.size() != n) {
    throw FormatError("segment label arrays have inconsistent lengths");
  }
  if (channels == 0 && n > 0) throw FormatError("segment set has no channels");
  if (data.size() != n * channels * kSamplesPerSegment) {
    throw FormatError("segment data size does not match N x C x 400");
  }
  if (n == 0) return;
  std::set<int> labels(video_label.begin(), video_label.end());
  if (*labels.begin() != 0 ||
      *labels.rbegin() != static_cast<int>(labels.size()) - 1) {
    throw FormatError("video labels must be contiguous 0..K-1");
  }
}

void write_pack(const std::vector<Recording>& recordings,
                const std::filesystem::path& dir) {
  if (recordings.empty()) throw ConfigError("write_pack: empty recording list");
  std::set<int> subjects;
  for (const Recording& r : recordings) {
    r.validate();
    if (!subjects.insert(r.subject_id).second) {
      throw ConfigError("write_pack: duplicate subject id " + std::to_string(r.subject_id));
    }
  }
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "eegpack/1";
  nlohmann::ordered_json recs = nlohmann::ordered_json::array();
  for (const Recording& r : recordings) {
    const std::string file = "rec_" + std::to_string(r.subject_id) + ".f32raw";
    nlohmann::ordered_json jr;
    jr["subject_id"] = r.subject_id;
    jr["sample_rate_hz"] = r.sample_rate_hz;
    jr["channels"] = r.channels;
    jr["samples"] = r.samples;
    jr["channel_labels"] = r.channel_labels;
    jr["eog_channels"] = r.eog_channels;
    jr["file"] = file;
    nlohmann::ordered_json anns = nlohmann::ordered_json::array();
    for (const auto& a : r.annotations) {
      anns.push_back({{"start_s", a.start_s},
                      {"end_s", a.end_s},
                      {"video", a.video},
                      {"emotion", a.emotion}});
    }
    jr["annotations"] = std::move(anns);
    recs.push_back(std::move(jr));
    write_f32_file(dir / file, r.data);
  }
  manifest["recordings"] = std::move(recs);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

std::vector<Recording> read_pack(const std::filesystem::path& dir) {
  const auto manifest = parse_json_file(dir / "manifest.json", "manifest.json");
  std::vector<Recording> out;
  try {
    if (manifest.at("format").get<std::string>() != "eegpack/1") {
      throw FormatError("unsupported pack format in " + dir.string());
    }
    for (const auto& jr : manifest.at("recordings")) {
      Recording r;
      r.subject_id = jr.at("subject_id").get<int>();
      r.sample_rate_hz = jr.at("sample_rate_hz").get<double>();
      r.channels = jr.at("channels").get<std::size_t>();
      r.samples = jr.at("samples").get<std::size_t>();
      r.channel_labels = jr.at("channel_labels").get<std::vector<std::string>>();
      r.eog_channels = jr.at("eog_channels").get<std::vector<std::size_t>>();
      for (const auto& ja : jr.at("annotations")) {
        Recording::Annotation a;
        a.start_s = ja.at("start_s").get<double>();
        a.end_s = ja.at("end_s").get<double>();
        a.video = ja.at("video").get<int>();
        a.emotion = ja.at("emotion").get<int>();
        r.annotations.push_back(a);
      }
      r.data = read_f32_file(dir / jr.at("file").get<std::string>(),
                             r.channels * r.samples);
      r.validate();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest schema error in " + dir.string() + ": " + e.what());
  }
  return out;
}

void write_segments(const SegmentSet& set, const std::filesystem::path& dir) {
  set.validate();
  if (set.size() == 0) throw ConfigError("write_segments: empty segment set");
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["format"] = "eegsegments/1";
  j["n"] = set.size();
  j["channels"] = set.channels;
  j["samples_per_segment"] = SegmentSet::kSamplesPerSegment;
  j["video_label"] = set.video_label;
  j["emotion_label"] = set.emotion_label;
  j["subject_id"] = set.subject_id;
  std::vector<std::string> split_names;
  split_names.reserve(set.size());
  for (Split s : set.split) split_names.emplace_back(split_name(s));
  j["split"] = split_names;
  j["file"] = "segments.f32raw";
  write_f32_file(dir / "segments.f32raw", set.data);
  std::ofstream out(dir / "segments.json");
  if (!out) throw FormatError("cannot write segments.json in " + dir.string());
  out << j.dump(2) << "\n";
}

SegmentSet read_segments(const std::filesystem::path& dir) {
  const auto j = parse_json_file(dir / "segments.json", "segments.json");
  SegmentSet set;
  try {
    if (j.at("format").get<std::string>() != "eegsegments/1") {
      throw FormatError("unsupported segments format in " + dir.string());
    }
    const auto n = j.at("n").get<std::size_t>();
    set.channels = j.at("channels").get<std::size_t>();
    if (j.at("samples_per_segment").get<std::size_t>() != SegmentSet::kSamplesPerSegment) {
      throw FormatError("segments must hold exactly 400 samples each");
    }
    set.video_label = j.at("video_label").get<std::vector<int>>();
    set.emotion_label = j.at("emotion_label").get<std::vector<int>>();
    set.subject_id = j.at("subject_id").get<std::vector<int>>();
    for (const auto& s : j.at("split")) {
      set.split.push_back(split_from_name(s.get<std::string>()));
    }
    if (set.video_label.size() != n) {
      throw FormatError("segments.json declares n=" + std::to_string(n) +
                        " but video_label has " + std::to_string(set.video_label.size()));
    }
    set.data = read_f32_file(dir / j.at("file").get<std::string>(),
                             n * set.channels * SegmentSet::kSamplesPerSegment);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("segments schema error in " + dir.string() + ": " + e.what());
  }
  set.validate();
  return set;
}

void SynthSpec::validate() const {
  if (n_subjects <= 0 || n_classes <= 0 || segments_per_class_per_subject <= 0 ||
      channels <= 0) {
    throw ConfigError("synth spec: all counts must be positive");
  }
  if (!(0 <= window_start && window_start < window_end &&
        window_end <= static_cast<int>(SegmentSet::kSamplesPerSegment))) {
    throw ConfigError("synth spec: window must satisfy 0 <= t1 < t2 <= 400");
  }
  if (static_cast<int>(class_freqs_hz.size()) != n_classes) {
    throw ConfigError("synth spec: class_freqs_hz must list one frequency per class");
  }
  std::set<double> freqs(class_freqs_hz.begin(), class_freqs_hz.end());
  if (freqs.size() != class_freqs_hz.size()) {
    throw ConfigError("synth spec: class frequencies must be distinct");
  }
  if (signal_region.empty() == signal_channels.empty()) {
    throw ConfigError("synth spec: set exactly one of signal_region or signal_channels");
  }
  for (int c : signal_channels) {
    if (c < 1 || c > channels) {
      throw ConfigError("synth spec: signal channel " + std::to_string(c) +
                        " outside 1.." + std::to_string(channels));
    }
  }
  if (!(subject_offset_scale >= 0.0)) {
    throw ConfigError("synth spec: subject_offset_scale must be >= 0");
  }
}

SynthSpec SynthSpec::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("synth spec parse error: ") + e.what());
  }
  SynthSpec s;
  try {
    s.n_subjects = j.at("n_subjects").get<int>();
    s.n_classes = j.at("n_classes").get<int>();
    s.segments_per_class_per_subject = j.at("segments_per_class_per_subject").get<int>();
    s.channels = j.at("channels").get<int>();
    s.montage_name = j.value("montage_name", std::string("seed_v1"));
    s.signal_region = j.value("signal_region", std::string());
    s.signal_channels = j.value("signal_channels", std::vector<int>());
    const auto window = j.at("window").get<std::vector<int>>();
    if (window.size() != 2) throw FormatError("synth spec: window must be [t1, t2]");
    s.window_start = window[0];
    s.window_end = window[1];
    s.class_freqs_hz = j.at("class_freqs_hz").get<std::vector<double>>();
    if (j.at("snr_db").is_string()) {
      if (j.at("snr_db").get<std::string>() != "inf") {
        throw FormatError("synth spec: snr_db must be a number or \"inf\"");
      }
      s.snr_db = std::numeric_limits<double>::infinity();
    } else {
      s.snr_db = j.at("snr_db").get<double>();
    }
    s.subject_offset_scale = j.value("subject_offset_scale", 0.5);
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("synth spec schema error: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec SynthSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open synth spec " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string SynthSpec::to_json_text() const {
  nlohmann::ordered_json j;
  j["n_subjects"] = n_subjects;
  j["n_classes"] = n_classes;
  j["segments_per_class_per_subject"] = segments_per_class_per_subject;
  j["channels"] = channels;
  j["montage_name"] = montage_name;
  if (!signal_region.empty()) j["signal_region"] = signal_region;
  if (!signal_channels.empty()) j["signal_channels"] = signal_channels;
  j["window"] = {window_start, window_end};
  j["class_freqs_hz"] = class_freqs_hz;
  if (std::isinf(snr_db)) {
    j["snr_db"] = "inf";
  } else {
    j["snr_db"] = snr_db;
  }
  j["subject_offset_scale"] = subject_offset_scale;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

SegmentSet synth_segments(const SynthSpec& spec) {
  spec.validate();
  std::vector<int> signal_idx = spec.signal_channels;
  if (!spec.signal_region.empty()) {
    const Montage montage = load_builtin(spec.montage_name);
    signal_idx = montage.region(spec.signal_region);
    for (int idx : signal_idx) {
      if (idx > spec.channels) {
        throw ConfigError("synth spec: region '" + spec.signal_region + "' needs channel " +
                          std::to_string(idx) + " but spec has " +
                          std::to_string(spec.channels) + " channels");
      }
    }
  }
  std::vector<bool> is_signal(spec.channels, false);
  for (int idx : signal_idx) is_signal[static_cast<std::size_t>(idx - 1)] = true;

  const std::size_t T = SegmentSet::kSamplesPerSegment;
  const std::size_t C = static_cast<std::size_t>(spec.channels);
  const std::size_t per_subject =
      static_cast<std::size_t>(spec.n_classes) * spec.segments_per_class_per_subject;
  const std::size_t n = static_cast<std::size_t>(spec.n_subjects) * per_subject;
  const double sigma = std::isinf(spec.snr_db)
                           ? 0.0
                           : std::sqrt(0.5 * std::pow(10.0, -spec.snr_db / 10.0));

  SegmentSet set;
  set.channels = C;
  set.data.resize(n * C * T);
  set.video_label.reserve(n);
  set.emotion_label.assign(n, -1);
  set.subject_id.reserve(n);
  set.split.assign(n, Split::Train);

  Rng rng(spec.seed);
  std::size_t seg = 0;
  for (int s = 0; s < spec.n_subjects; ++s) {
    std::vector<double> offset(C);
    for (double& v : offset) v = rng.gaussian() * spec.subject_offset_scale;
    for (int k = 0; k < spec.n_classes; ++k) {
      const double freq = spec.class_freqs_hz[static_cast<std::size_t>(k)];
      for (int rep = 0; rep < spec.segments_per_class_per_subject; ++rep) {
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        double* base = set.data.data() + seg * C * T;
        for (std::size_t c = 0; c < C; ++c) {
          double* chan = base + c * T;
          for (std::size_t t = 0; t < T; ++t) {
            double v = offset[c];
            if (sigma > 0.0) v += sigma * rng.gaussian();
            chan[t] = v;
          }
          if (is_signal[c]) {
            for (int t = spec.window_start; t < spec.window_end; ++t) {
              chan[t] += std::sin(2.0 * kPi * freq * static_cast<double>(t) / 200.0 + phase);
            }
          }
        }
        set.video_label.push_back(k);
        set.subject_id.push_back(s + 1);
        ++seg;
      }
    }
  }
  set.validate();
  return set;
}

std::vector<Recording> synth_recordings(const SynthSpec& spec) {
  const SegmentSet set = synth_segments(spec);
  const std::size_t T = SegmentSet::kSamplesPerSegment;
  const std::size_t C = set.channels;
  const std::size_t per_subject =
      static_cast<std::size_t>(spec.n_classes) * spec.segments_per_class_per_subject;

  std::vector<Recording> out;
  out.reserve(static_cast<std::size_t>(spec.n_subjects));
  for (int s = 0; s < spec.n_subjects; ++s) {
    Recording rec;
    rec.subject_id = s + 1;
    rec.sample_rate_hz = 200.0;
    rec.channels = C;
    rec.samples = per_subject * T;
    rec.data.resize(C * rec.samples);
    for (std::size_t c = 0; c < C; ++c) {
      char label[32];
      std::snprintf(label, sizeof(label), "ch%02zu", c + 1);
      if (c == 0) rec.channel_labels.reserve(C);
      rec.channel_labels.emplace_back(label);
    }
    for (std::size_t i = 0; i < per_subject; ++i) {
      const std::size_t seg = static_cast<std::size_t>(s) * per_subject + i;
      auto data = set.segment(seg);
      for (std::size_t c = 0; c < C; ++c) {
        std::copy_n(data.data() + c * T, T, rec.row(c) + i * T);
      }
      Recording::Annotation a;
      a.start_s = static_cast<double>(i) * 2.0;
      a.end_s = a.start_s + 2.0;
      a.video = set.video_label[seg];
      a.emotion = set.emotion_label[seg];
      rec.annotations.push_back(a);
    }
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace eegprobe
