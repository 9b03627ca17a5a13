#include "eegprobe/montage.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eegprobe/errors.hpp"
#include "eegprobe/signal_io.hpp"

namespace eegprobe {

namespace {

using RegionEntry = std::pair<const char*, std::vector<int>>;

// Channel dictionaries transcribed verbatim from the published cap listings,
// entry order and duplicates preserved.

const std::vector<RegionEntry>& seed_v1_listing() {
  static const std::vector<RegionEntry> listing = {
      {"all", {1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13, 14, 15, 16,
               17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32,
               33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48,
               49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62}},
      {"noseback_left", {1, 4, 6, 7, 8, 9, 15, 16, 17, 18, 24, 25, 26, 27, 33, 34,
                         35, 36, 42, 43, 44, 45, 51, 52, 53, 58, 59}},
      {"noseback_center", {2, 10, 19, 28, 37, 46, 54, 60}},
      {"noseback_right", {3, 5, 11, 12, 13, 14, 20, 21, 22, 23, 29, 30, 31, 32, 38,
                          39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62}},
      {"noseback_Q1_right", {3, 5, 11, 12, 13, 14, 20, 21, 22, 23}},
      {"noseback_Q2_left", {1, 4, 6, 7, 8, 9, 15, 16, 17, 18}},
      {"noseback_Q3_left", {33, 34, 35, 36, 42, 43, 44, 45, 51, 52, 53, 58, 59}},
      {"noseback_Q4_right", {38, 39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62}},
      {"leftrightear_center", {24, 25, 26, 27, 28, 29, 30, 31, 32}},
      {"noseback_front", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17,
                          18, 19, 20, 21, 22, 23}},
      {"noseback_back", {33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47,
                         48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62}},
      {"lobes_frontal_left", {1, 4, 6, 7, 8, 9, 16, 17, 18}},
      {"lobes_frontal_right", {3, 5, 11, 12, 13, 14, 20, 21, 22}},
      {"lobes_parietal_left", {34, 35, 36, 42, 43, 44, 45}},
      {"lobes_parietal_right", {36, 39, 40, 47, 48, 49, 50}},
      {"lobes_occipital_left", {51, 52, 53, 59}},
      {"lobes_occipital_right", {55, 56, 57, 61}},
      {"lobes_temporal_left", {15, 24, 33}},
      {"lobes_temporal_right", {23, 32, 41}},
      {"lobes_frontal", {1, 4, 6, 7, 8, 9, 16, 17, 18, 3, 5, 11, 12, 13, 14, 20, 21,
                         22, 2, 10, 19}},
      {"lobes_parietal", {34, 35, 36, 42, 43, 44, 45, 36, 39, 40, 47, 48, 49, 50, 37,
                          46}},
      {"lobes_occipital", {51, 52, 53, 59, 55, 56, 57, 61, 54, 60}},
      {"lobes_temporal", {15, 23, 24, 32, 33, 41}},
  };
  return listing;
}

const std::vector<RegionEntry>& shot_v1_listing() {
  static const std::vector<RegionEntry> listing = {
      {"all", {1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13, 14, 15, 16,
               17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32,
               33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48,
               49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 63, 64}},
      {"noseback_left", {1, 2, 3, 7, 6, 5, 4, 8, 9, 10, 11, 15, 14, 13, 12, 16, 17,
                         18, 19, 24, 23, 22, 21, 20, 25, 26, 27}},
      {"noseback_center", {33, 37, 38, 47, 48, 32, 31, 30, 29, 28}},
      {"noseback_right", {34, 36, 35, 39, 40, 41, 42, 46, 45, 44, 43, 49, 50, 51, 52,
                          56, 55, 54, 53, 57, 58, 59, 60, 61, 63, 62, 64}},
      {"noseback_Q1_right", {34, 36, 35, 39, 40, 41, 42, 46, 45, 44, 43}},
      {"noseback_Q2_left", {1, 2, 3, 7, 6, 5, 4, 8, 9, 10, 11}},
      {"noseback_Q3_left", {16, 17, 18, 19, 24, 23, 22, 21, 20, 25, 26, 27}},
      {"noseback_Q4_right", {56, 55, 54, 53, 57, 58, 59, 60, 61, 63, 62, 64}},
      {"leftrightear_center", {15, 14, 13, 12, 48, 49, 50, 51, 52}},
      {"noseback_front", {1, 33, 34, 2, 3, 37, 36, 35, 7, 6, 5, 4, 38, 39, 40, 41,
                          42, 8, 9, 10, 11, 47, 46, 45, 44, 43}},
      {"noseback_back", {16, 17, 18, 19, 32, 56, 55, 54, 53, 24, 23, 22, 21, 20, 31,
                         57, 58, 59, 60, 61, 25, 26, 30, 63, 62, 27, 29, 64, 28}},
      {"lobes_frontal_left", {1, 2, 3, 4, 5, 6, 7, 9, 10, 11}},
      {"lobes_frontal_right", {34, 35, 36, 39, 40, 41, 42, 46, 45, 44}},
      {"lobes_parietal_left", {17, 18, 19, 24, 23, 22, 21, 20}},
      {"lobes_parietal_right", {56, 55, 54, 57, 58, 59, 60, 61}},
      {"lobes_occipital_left", {25, 26, 27}},
      {"lobes_occipital_right", {63, 62, 64}},
      {"lobes_temporal_left", {8, 15, 16}},
      {"lobes_temporal_right", {43, 52, 53}},
      {"lobes_frontal", {1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 34, 35, 36, 39, 40, 41, 42,
                         46, 45, 44, 33, 37, 38, 47}},
      {"lobes_parietal", {17, 18, 19, 24, 23, 22, 21, 20, 56, 55, 54, 57, 58, 59, 60,
                          61, 32, 31}},
      {"lobes_occipital", {25, 26, 27, 63, 62, 64, 30, 29}},
      {"lobes_temporal", {8, 15, 16, 43, 52, 53}},
  };
  return listing;
}

const std::vector<RegionEntry>& seeddv_listing() {
  static const std::vector<RegionEntry> listing = {
      {"all", {1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13, 14, 15, 16,
               17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32,
               33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48,
               49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61}},
      {"noseback_left", {1, 4, 6, 7, 8, 9, 15, 16, 17, 18, 24, 25, 26, 27, 33, 34,
                         35, 36, 42, 43, 44, 45, 51, 52, 53, 58, 59}},
      {"noseback_center", {2, 10, 19, 28, 37, 46, 54, 60}},
      {"noseback_right", {3, 5, 11, 12, 13, 14, 20, 21, 22, 23, 29, 30, 31, 32, 38,
                          39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62}},
      {"noseback_Q1_right", {3, 5, 11, 12, 13, 14, 20, 21, 22, 23}},
      {"noseback_Q2_left", {1, 3, 6, 7, 8, 9, 15, 16, 17, 18}},
      {"noseback_Q3_left", {33, 34, 35, 36, 42, 43, 44, 45, 51, 52, 53, 56, 59}},
      {"noseback_Q4_right", {38, 39, 40, 41, 47, 48, 49, 50, 55, 56, 57, 61, 62}},
      {"leftrightear_center", {24, 25, 26, 27, 28, 29, 30, 31, 32}},
      {"noseback_front", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17,
                          18, 19, 20, 21, 22, 23}},
      {"noseback_back", {33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47,
                         48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62}},
      {"lobes_frontal_left", {1, 4, 6, 7, 8, 9, 16, 17, 18}},
      {"lobes_frontal_right", {3, 5, 11, 12, 13, 14, 20, 21, 22}},
      {"lobes_parietal_left", {34, 35, 36, 42, 43, 44, 45}},
      {"lobes_parietal_right", {38, 39, 40, 47, 48, 49, 50}},
      {"lobes_occipital_left", {51, 52, 53, 54}},
      {"lobes_occipital_right", {55, 56, 57, 61}},
      {"lobes_temporal_left", {15, 29, 33}},
      {"lobes_temporal_right", {23, 32, 41}},
      {"lobes_frontal", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 18,
                         19, 20, 21, 22}},
      {"lobes_parietal", {34, 35, 36, 37, 38, 39, 40, 42, 43, 44, 45, 46, 47, 48, 49,
                          50}},
      {"lobes_occipital", {51, 52, 53, 54, 55, 56, 57, 59, 60, 61}},
      {"lobes_temporal", {15, 29, 33, 23, 32, 41}},
  };
  return listing;
}

Montage build_montage(const std::string& name, int cap_channels,
                      const std::vector<RegionEntry>& listing,
                      std::vector<std::string> notes) {
  Montage m;
  m.name = name;
  m.cap_channels = cap_channels;
  m.listing_notes = std::move(notes);
  for (const auto& [key, indices] : listing) {
    m.keys.emplace_back(key);
    m.listing.emplace(key, indices);
    std::vector<int> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    m.regions.emplace(key, std::move(sorted));
  }
  m.validate();
  return m;
}

}  // namespace

bool Montage::has_region(const std::string& key) const {
  return regions.count(key) != 0;
}

const std::vector<int>& Montage::region(const std::string& key) const {
  auto it = regions.find(key);
  if (it == regions.end()) {
    throw ConfigError("montage '" + name + "' has no region '" + key + "'");
  }
  return it->second;
}

std::optional<std::string> Montage::lobe_region_of(int channel_1based) const {
  std::optional<std::string> best;
  std::size_t best_size = 0;
  for (const std::string& key : keys) {
    if (key.rfind("lobes_", 0) != 0) continue;
    const auto& set = regions.at(key);
    if (!std::binary_search(set.begin(), set.end(), channel_1based)) continue;
    if (!best || set.size() < best_size) {
      best = key;
      best_size = set.size();
    }
  }
  return best;
}

void Montage::validate() const {
  if (cap_channels <= 0) throw ConfigError("montage '" + name + "': cap_channels must be positive");
  if (!has_region("all")) throw ConfigError("montage '" + name + "': region 'all' is required");
  if (keys.size() != regions.size() || keys.size() != listing.size()) {
    throw ConfigError("montage '" + name + "': key bookkeeping is inconsistent");
  }
  for (const auto& [key, set] : regions) {
    if (set.empty()) throw ConfigError("montage '" + name + "': region '" + key + "' is empty");
    for (int idx : set) {
      if (idx < 1 || idx > cap_channels) {
        throw ConfigError("montage '" + name + "': region '" + key + "' index " +
                          std::to_string(idx) + " outside 1.." +
                          std::to_string(cap_channels));
      }
    }
  }
}

Montage load_builtin(const std::string& name) {
  if (name == "seed_v1") {
    return build_montage(
        "seed_v1", 62, seed_v1_listing(),
        {"lobes_parietal_left and lobes_parietal_right both contain channel 36, "
         "as printed",
         "lobes_parietal lists channel 36 twice, as printed"});
  }
  if (name == "shot_v1") {
    return build_montage("shot_v1", 64, shot_v1_listing(), {});
  }
  if (name == "seeddv") {
    return build_montage(
        "seeddv", 62, seeddv_listing(),
        {"'all' lists indices 1..61 while noseback_right, noseback_Q4_right and "
         "noseback_back include 62, as printed",
         "noseback_Q2_left contains channel 3, which also appears in "
         "noseback_Q1_right, as printed"});
  }
  throw ConfigError("unknown montage '" + name + "' (expected seed_v1, shot_v1 or seeddv)");
}

Montage montage_from_json_text(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("montage JSON parse error: ") + e.what());
  }
  std::vector<RegionEntry> listing;
  std::vector<std::pair<std::string, std::vector<int>>> storage;
  try {
    const std::string name = j.at("name").get<std::string>();
    const int cap = j.at("cap_channels").get<int>();
    for (const auto& [key, arr] : j.at("regions").items()) {
      storage.emplace_back(key, arr.get<std::vector<int>>());
    }
    listing.reserve(storage.size());
    for (const auto& [key, arr] : storage) listing.push_back({key.c_str(), arr});
    std::vector<std::string> notes;
    if (j.contains("listing_notes")) {
      notes = j.at("listing_notes").get<std::vector<std::string>>();
    }
    return build_montage(name, cap, listing, std::move(notes));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("montage JSON schema error: ") + e.what());
  }
}

Montage montage_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open montage file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return montage_from_json_text(buf.str());
}

std::string montage_to_json_text(const Montage& montage) {
  nlohmann::ordered_json j;
  j["name"] = montage.name;
  j["cap_channels"] = montage.cap_channels;
  nlohmann::ordered_json regions = nlohmann::ordered_json::object();
  for (const std::string& key : montage.keys) regions[key] = montage.listing.at(key);
  j["regions"] = std::move(regions);
  j["listing_notes"] = montage.listing_notes;
  return j.dump(2) + "\n";
}

std::vector<std::pair<std::string, std::size_t>> region_catalog(const Montage& montage) {
  std::vector<std::pair<std::string, std::size_t>> out;
  out.reserve(montage.keys.size());
  for (const std::string& key : montage.keys) {
    out.emplace_back(key, montage.regions.at(key).size());
  }
  return out;
}

SegmentSet select_region(const SegmentSet& segments, const Montage& montage,
                         const std::string& key) {
  const std::vector<int>& indices = montage.region(key);
  for (int idx : indices) {
    if (static_cast<std::size_t>(idx) > segments.channels) {
      throw FormatError("region '" + key + "' of montage '" + montage.name +
                        "' needs channel " + std::to_string(idx) + " but data has " +
                        std::to_string(segments.channels) + " channels");
    }
  }
  SegmentSet out;
  out.channels = indices.size();
  out.video_label = segments.video_label;
  out.emotion_label = segments.emotion_label;
  out.subject_id = segments.subject_id;
  out.split = segments.split;
  const std::size_t T = SegmentSet::kSamplesPerSegment;
  out.data.resize(segments.size() * indices.size() * T);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const double* src = segments.data.data() + s * segments.channels * T;
    double* dst = out.data.data() + s * indices.size() * T;
    for (std::size_t c = 0; c < indices.size(); ++c) {
      const std::size_t src_c = static_cast<std::size_t>(indices[c] - 1);
      std::copy_n(src + src_c * T, T, dst + c * T);
    }
  }
  return out;
}

}  // namespace eegprobe
