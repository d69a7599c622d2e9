#pragma once

// Dataset trees laid out as <root>/<split>/<view>/<class_id>/<image>.png,
// a seeded synthetic generator for that layout, and the paired batch sampler.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "uavgeo/image.hpp"
#include "uavgeo/retrieval.hpp"

namespace uavgeo::data {

enum class Split { Train, Query, Gallery };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct ImageEntry {
  std::string class_id;
  retrieval::View view = retrieval::View::Drone;
  std::filesystem::path path;

  bool operator==(const ImageEntry&) const = default;
};

struct DatasetManifest {
  Split split = Split::Train;
  std::vector<std::string> classes;  ///< sorted
  std::vector<ImageEntry> images;    ///< sorted by (view, class, file name)

  std::size_t count(retrieval::View view) const;
  std::vector<ImageEntry> of_view(retrieval::View view) const;
  /// Index of a class id in `classes`, or -1.
  int label_of(const std::string& class_id) const;

  bool operator==(const DatasetManifest&) const = default;
};

/// Scans <root>/<split>/{drone,satellite}/<class_id>/*. In the train split every
/// class must have both views.
DatasetManifest scan_dataset(const std::filesystem::path& root, Split split);

/// Scans a single-view directory <dir>/<class_id>/*.
std::vector<ImageEntry> scan_view_dir(const std::filesystem::path& dir, retrieval::View view);

/// Line-oriented `class_id<TAB>view<TAB>path` cache.
void write_manifest_cache(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_cache(const std::filesystem::path& path, Split split);

/// Portable seeded draws (independent of the standard library's distributions).
double uniform(std::mt19937_64& rng, double lo, double hi);
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

struct ToySpec {
  int num_classes = 20;
  int drone_views_per_class = 8;   ///< training drone views
  int query_views_per_class = 4;   ///< held-out drone views for the test splits
  int image_size = 256;
  std::uint64_t seed = 7;
  double style_jitter = 1.0;       ///< 0 disables drone photometric variation
  double geometry_jitter = 1.0;    ///< 0 renders drone views with the satellite framing

  void validate() const;
};

/// Renders the satellite view of a class (deterministic in spec.seed and the class index).
RgbImage render_satellite(const ToySpec& spec, int class_index);
/// Renders drone view `view_index` of a class; `stream` separates train (0) and query (1) views.
RgbImage render_drone(const ToySpec& spec, int class_index, int view_index, int stream);

/// Writes train/{drone,satellite}, query/{drone,satellite} and gallery/{drone,satellite}.
/// Returns the train manifest.
DatasetManifest generate_toy(const ToySpec& spec, const std::filesystem::path& out_dir);

/// One drone image paired with a satellite image of the same class.
struct Pair {
  std::size_t drone = 0;      ///< index into the manifest's drone entries
  std::size_t satellite = 0;  ///< index into the manifest's satellite entries
  int label = 0;
};

class BatchSampler {
 public:
  BatchSampler(const DatasetManifest& manifest, int batch_size, std::uint64_t seed);

  const std::vector<ImageEntry>& drones() const { return drones_; }
  const std::vector<ImageEntry>& satellites() const { return satellites_; }
  const std::vector<Pair>& pairs() const { return pairs_; }
  int num_classes() const { return num_classes_; }
  /// ceil(pairs / batch_size); the final batch may be short so every pair is seen once.
  int steps_per_epoch() const;
  /// Seeded shuffle of all pairs, cut into batches.
  std::vector<std::vector<Pair>> epoch(int epoch_index) const;

 private:
  int batch_size_;
  std::uint64_t seed_;
  int num_classes_;
  std::vector<ImageEntry> drones_, satellites_;
  std::vector<Pair> pairs_;
};

}  // namespace uavgeo::data
