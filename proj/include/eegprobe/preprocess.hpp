#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eegprobe/montage.hpp"
#include "eegprobe/signal_io.hpp"

namespace eegprobe {

struct PreprocessConfig {
  double notch_hz = 50.0;
  double notch_q = 30.0;
  double highpass_hz = 0.5;
  double target_rate_hz = 200.0;
  // subject id -> 1-based channel numbers to interpolate
  std::map<int, std::vector<int>> bad_channels;

  void validate() const;
  static PreprocessConfig from_json_text(const std::string& text);
  static PreprocessConfig from_json_file(const std::filesystem::path& path);
  std::string to_json_text() const;
};

// All operations below are pure: the input recording is never mutated.

// Replace each bad channel (0-based) by the per-sample mean of the good
// channels sharing its lobe region.
Recording interpolate_bad_channels(const Recording& rec,
                                   const std::vector<std::size_t>& bad,
                                   const Montage& montage);

// Subtract the per-sample mean over non-EOG channels from every non-EOG
// channel; EOG channels pass through untouched.
Recording reref_average(const Recording& rec);

// Zero-phase (forward-backward) biquad notch.
Recording notch_filter(const Recording& rec, double notch_hz, double q);

// Zero-phase 4th-order Butterworth high-pass (two cascaded biquads).
Recording highpass_filter(const Recording& rec, double cutoff_hz);

// Band-limited downsampling with a Kaiser-windowed sinc (beta 8.6,
// 64 zero-crossings). Output length = round(samples * target/source).
Recording resample(const Recording& rec, double target_rate_hz);

// Per EEG channel, least-squares fit y ~ sum(beta_i * eog_i) + c over the
// whole recording and subtract the fit. EOG channels are dropped from the
// output. Rank-deficient regressors fall back to a pseudo-inverse and add a
// message to *warnings.
Recording eog_regress(const Recording& rec, std::vector<std::string>* warnings = nullptr);

// Consecutive non-overlapping windows; the trailing remainder is discarded.
// Requires a 200 Hz recording.
std::vector<std::vector<double>> segment(const Recording& rec, double seconds = 2.0);

// Segment and label from the recording's annotations: a segment takes the
// labels of the interval containing its midpoint; uncovered segments are
// dropped.
SegmentSet segment_labeled(const Recording& rec);

// The full chain: interpolate -> re-reference -> notch -> high-pass ->
// resample -> EOG regression (skipped when the recording has no EOG).
Recording preprocess_recording(const Recording& rec, const PreprocessConfig& config,
                               const Montage& montage,
                               std::vector<std::string>* warnings = nullptr);

// Per video class, seeded shuffle partitioned by ratios with
// largest-remainder rounding (ties favor train, then val).
SegmentSet split_within(const SegmentSet& set,
                        std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                        std::uint64_t seed = 0);

// All segments of the two subjects are tagged test, everything else train;
// the val split is left empty.
SegmentSet split_leave_two(const SegmentSet& set, std::pair<int, int> test_subjects);

}  // namespace eegprobe
