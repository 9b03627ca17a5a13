#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace eegprobe {

struct SegmentSet;

// Named cap regions as 1-based channel index sets. The built-in caps are
// transcribed verbatim from their published channel dictionaries, including
// idiosyncrasies (overlapping lobe sets, an `all` list shorter than the cap);
// anything surprising is recorded in listing_notes rather than repaired.
struct Montage {
  std::string name;
  int cap_channels = 0;
  std::vector<std::string> keys;                       // listing order
  std::map<std::string, std::vector<int>> listing;     // arrays as printed
  std::map<std::string, std::vector<int>> regions;     // sorted, deduplicated
  std::vector<std::string> listing_notes;

  bool has_region(const std::string& key) const;
  // Sorted unique 1-based indices; throws ConfigError for unknown keys.
  const std::vector<int>& region(const std::string& key) const;

  // Smallest lobes_* region containing the channel (ties: listing order).
  std::optional<std::string> lobe_region_of(int channel_1based) const;

  void validate() const;
};

// name is one of: seed_v1, shot_v1, seeddv.
Montage load_builtin(const std::string& name);

Montage montage_from_json_text(const std::string& text);
Montage montage_from_json_file(const std::filesystem::path& path);
// Canonical serialization (listing order, verbatim arrays, 2-space indent,
// trailing newline); load/serialize round-trips byte-exactly.
std::string montage_to_json_text(const Montage& montage);

// (key, region set size) in listing order.
std::vector<std::pair<std::string, std::size_t>> region_catalog(const Montage& montage);

// New SegmentSet keeping only the region's channels, ascending; labels and
// splits unchanged.
SegmentSet select_region(const SegmentSet& segments, const Montage& montage,
                         const std::string& key);

}  // namespace eegprobe
