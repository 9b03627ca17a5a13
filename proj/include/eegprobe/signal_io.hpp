#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace eegprobe {

// One subject's continuous multichannel EEG (microvolts, float64 in memory).
struct Recording {
  struct Annotation {
    double start_s = 0.0;
    double end_s = 0.0;
    int video = -1;
    int emotion = -1;
  };

  int subject_id = 0;
  double sample_rate_hz = 0.0;
  std::vector<std::string> channel_labels;
  std::size_t channels = 0;
  std::size_t samples = 0;
  std::vector<double> data;                 // channels x samples, row-major
  std::vector<std::size_t> eog_channels;    // 0-based, distinct
  std::vector<Annotation> annotations;      // stimulus label intervals

  double* row(std::size_t c) { return data.data() + c * samples; }
  const double* row(std::size_t c) const { return data.data() + c * samples; }

  void validate() const;
};

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

// Fixed-length segments (channels x 400 samples each) with labels.
struct SegmentSet {
  static constexpr std::size_t kSamplesPerSegment = 400;

  std::size_t channels = 0;
  std::vector<double> data;  // n x channels x 400, segment-major
  std::vector<int> video_label;
  std::vector<int> emotion_label;  // -1 when the dataset has none
  std::vector<int> subject_id;
  std::vector<Split> split;

  std::size_t size() const { return video_label.size(); }
  std::size_t segment_values() const { return channels * kSamplesPerSegment; }
  std::span<const double> segment(std::size_t i) const {
    return {data.data() + i * segment_values(), segment_values()};
  }
  std::span<double> segment(std::size_t i) {
    return {data.data() + i * segment_values(), segment_values()};
  }

  std::size_t count_split(Split s) const;
  SegmentSet filter_split(Split s) const;
  // Distinct video labels present.
  std::size_t num_classes() const;

  void validate() const;
};

// Synthetic dataset with planted, controllable structure: each class is a
// sinusoid at its own frequency on a chosen channel subset inside a sample
// window, white Gaussian noise everywhere at snr_db, and a per-subject
// constant spatial offset so untrained features cluster by subject.
struct SynthSpec {
  int n_subjects = 0;
  int n_classes = 0;
  int segments_per_class_per_subject = 0;
  int channels = 0;
  std::string montage_name = "seed_v1";  // resolves signal_region
  std::string signal_region;             // region key, or empty
  std::vector<int> signal_channels;      // explicit 1-based set, or empty
  int window_start = 0;                  // [t1, t2) in samples, 0..400
  int window_end = 400;
  std::vector<double> class_freqs_hz;
  double snr_db = 0.0;                   // +inf turns noise off
  double subject_offset_scale = 0.5;
  std::uint64_t seed = 0;

  static SynthSpec from_json_text(const std::string& text);
  static SynthSpec from_json_file(const std::filesystem::path& path);
  std::string to_json_text() const;

  void validate() const;
};

// Pack layout: <dir>/manifest.json plus one rec_<subject>.f32raw per
// recording (little-endian float32, channels x samples row-major).
void write_pack(const std::vector<Recording>& recordings,
                const std::filesystem::path& dir);
std::vector<Recording> read_pack(const std::filesystem::path& dir);

// Segment layout: <dir>/segments.json + <dir>/segments.f32raw.
void write_segments(const SegmentSet& set, const std::filesystem::path& dir);
SegmentSet read_segments(const std::filesystem::path& dir);

SegmentSet synth_segments(const SynthSpec& spec);
// Same data, assembled per subject into continuous 200 Hz recordings with
// one annotation per 2-second segment.
std::vector<Recording> synth_recordings(const SynthSpec& spec);

}  // namespace eegprobe
