#include <doctest.h>

#include <algorithm>
#include <set>

#include "eegprobe/errors.hpp"
#include "eegprobe/montage.hpp"
#include "eegprobe/rng.hpp"
#include "eegprobe/signal_io.hpp"

using namespace eegprobe;

TEST_CASE("built-in montage spot checks") {
  const Montage seed = load_builtin("seed_v1");
  CHECK(seed.region("lobes_temporal_left") == std::vector<int>{15, 24, 33});
  CHECK(seed.region("all").size() == 62);
  CHECK(seed.region("all").front() == 1);
  CHECK(seed.region("all").back() == 62);

  const Montage shot = load_builtin("shot_v1");
  CHECK(shot.region("lobes_occipital_right") == std::vector<int>{62, 63, 64});
  CHECK(shot.listing.at("lobes_occipital_right") == std::vector<int>{63, 62, 64});
  CHECK(shot.region("all").size() == 64);

  CHECK_THROWS_AS(load_builtin("bogus"), ConfigError);
  CHECK_THROWS_AS(seed.region("nope"), ConfigError);
}

TEST_CASE("seeddv idiosyncrasies preserved as printed") {
  const Montage dv = load_builtin("seeddv");
  CHECK(dv.region("all").size() == 61);
  CHECK(dv.region("all").back() == 61);
  const auto& right = dv.region("noseback_right");
  CHECK(std::find(right.begin(), right.end(), 62) != right.end());
  CHECK(!dv.listing_notes.empty());
}

TEST_CASE("seed_v1 parietal overlap preserved as printed") {
  const Montage seed = load_builtin("seed_v1");
  const auto& left = seed.region("lobes_parietal_left");
  const auto& right = seed.region("lobes_parietal_right");
  CHECK(std::find(left.begin(), left.end(), 36) != left.end());
  CHECK(std::find(right.begin(), right.end(), 36) != right.end());
  // The printed combined list repeats 36; the region set holds it once.
  const auto& listing = seed.listing.at("lobes_parietal");
  CHECK(std::count(listing.begin(), listing.end(), 36) == 2);
  const auto& set = seed.region("lobes_parietal");
  CHECK(std::count(set.begin(), set.end(), 36) == 1);
}

TEST_CASE("seed_v1 hemisphere partition covers the cap") {
  const Montage seed = load_builtin("seed_v1");
  std::set<int> u;
  for (const char* key : {"noseback_left", "noseback_center", "noseback_right"}) {
    const auto& r = seed.region(key);
    u.insert(r.begin(), r.end());
  }
  std::set<int> all(seed.region("all").begin(), seed.region("all").end());
  CHECK(u == all);
}

TEST_CASE("region catalog is ordered and sized from the listing") {
  const Montage seed = load_builtin("seed_v1");
  const auto catalog = region_catalog(seed);
  CHECK(catalog.size() == 23);
  CHECK(catalog.front().first == "all");
  for (const auto& [key, count] : catalog) {
    CHECK(count == seed.region(key).size());
  }
}

TEST_CASE("montage JSON round-trips byte-exactly") {
  for (const char* name : {"seed_v1", "shot_v1", "seeddv"}) {
    const Montage m = load_builtin(name);
    const std::string text = montage_to_json_text(m);
    const Montage back = montage_from_json_text(text);
    CHECK(montage_to_json_text(back) == text);
    CHECK(back.keys == m.keys);
    CHECK(back.regions == m.regions);
    CHECK(back.cap_channels == m.cap_channels);
  }
}

namespace {

SegmentSet tiny_segments(std::size_t channels, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  SegmentSet set;
  set.channels = channels;
  set.data.resize(n * channels * SegmentSet::kSamplesPerSegment);
  for (double& v : set.data) v = rng.gaussian();
  for (std::size_t i = 0; i < n; ++i) {
    set.video_label.push_back(static_cast<int>(i % 2));
    set.emotion_label.push_back(-1);
    set.subject_id.push_back(1);
    set.split.push_back(Split::Train);
  }
  return set;
}

}  // namespace

TEST_CASE("select_region projects channels") {
  const Montage seed = load_builtin("seed_v1");
  SegmentSet set = tiny_segments(62, 4, 99);

  SegmentSet all = select_region(set, seed, "all");
  CHECK(all.channels == 62);
  CHECK(all.data == set.data);

  SegmentSet left = select_region(set, seed, "lobes_temporal_left");
  CHECK(left.channels == 3);
  // Selected rows equal the original rows at those indices, bit-exactly.
  const std::size_t T = SegmentSet::kSamplesPerSegment;
  const std::vector<int> idx{15, 24, 33};
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t c = 0; c < idx.size(); ++c) {
      auto src = set.segment(s).subspan((idx[c] - 1) * T, T);
      auto dst = left.segment(s).subspan(c * T, T);
      CHECK(std::equal(src.begin(), src.end(), dst.begin()));
    }
  }
}

TEST_CASE("select_region catches montage/data mismatch") {
  const Montage seed = load_builtin("seed_v1");
  SegmentSet small = tiny_segments(16, 2, 5);
  CHECK_THROWS_AS(select_region(small, seed, "noseback_right"), FormatError);
}

TEST_CASE("select_region composes like a projection") {
  const Montage seed = load_builtin("seed_v1");
  SegmentSet set = tiny_segments(62, 3, 17);
  // Selecting `all` twice is the identity.
  SegmentSet once = select_region(set, seed, "all");
  SegmentSet twice = select_region(once, seed, "all");
  CHECK(twice.data == set.data);
}
