#include "uavgeo/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "uavgeo/error.hpp"

namespace fs = std::filesystem;

namespace uavgeo::data {

using retrieval::View;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    default: return "gallery";
  }
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "query") return Split::Query;
  if (s == "gallery") return Split::Gallery;
  throw ConfigError("unknown split '" + s + "'");
}

std::size_t DatasetManifest::count(View view) const {
  return static_cast<std::size_t>(std::count_if(images.begin(), images.end(), [&](const ImageEntry& e) { return e.view == view; }));
}

std::vector<ImageEntry> DatasetManifest::of_view(View view) const {
  std::vector<ImageEntry> out;
  for (const auto& e : images) {
    if (e.view == view) out.push_back(e);
  }
  return out;
}

int DatasetManifest::label_of(const std::string& class_id) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), class_id);
  return it != classes.end() && *it == class_id ? static_cast<int>(it - classes.begin()) : -1;
}

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png";
}

}  // namespace

std::vector<ImageEntry> scan_view_dir(const fs::path& dir, View view) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<ImageEntry> out;
  std::vector<fs::path> class_dirs;
  for (const auto& d : fs::directory_iterator(dir)) {
    if (d.is_directory()) class_dirs.push_back(d.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  for (const auto& cd : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(cd)) {
      if (f.is_regular_file() && is_image_file(f.path())) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) out.push_back({cd.filename().string(), view, std::move(f)});
  }
  return out;
}

DatasetManifest scan_dataset(const fs::path& root, Split split) {
  if (!fs::is_directory(root)) throw Error("dataset root does not exist: " + root.string());
  const fs::path split_dir = root / to_string(split);
  DatasetManifest m;
  m.split = split;
  std::map<std::string, std::set<View>> seen;
  for (View view : {View::Drone, View::Satellite}) {
    const fs::path vdir = split_dir / retrieval::to_string(view);
    if (!fs::is_directory(vdir)) continue;
    for (auto& e : scan_view_dir(vdir, view)) {
      seen[e.class_id].insert(view);
      m.images.push_back(std::move(e));
    }
  }
  if (m.images.empty()) throw Error("no images under " + split_dir.string());
  for (const auto& [cls, views] : seen) {
    m.classes.push_back(cls);
    if (split != Split::Train) continue;
    for (View v : {View::Drone, View::Satellite}) {
      if (!views.contains(v)) throw Error("class " + cls + " missing " + retrieval::to_string(v) + " view");
    }
  }
  return m;
}

void write_manifest_cache(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& e : manifest.images) os << e.class_id << '\t' << retrieval::to_string(e.view) << '\t' << e.path.string() << '\n';
}

DatasetManifest read_manifest_cache(const fs::path& path, Split split) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  DatasetManifest m;
  m.split = split;
  std::set<std::string> classes;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cls, view, p;
    if (!std::getline(fields, cls, '\t') || !std::getline(fields, view, '\t') || !std::getline(fields, p)) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": expected class<TAB>view<TAB>path");
    }
    if (view != "drone" && view != "satellite") throw ParseError("manifest line " + std::to_string(lineno) + ": unknown view " + view);
    m.images.push_back({cls, view == "drone" ? View::Drone : View::Satellite, p});
    classes.insert(cls);
  }
  m.classes.assign(classes.begin(), classes.end());
  return m;
}

// ---------------------------------------------------------------- randomness

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(n))) % n;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return std::mt19937_64(mix(mix(mix(seed) ^ a) ^ (b * 0x100000001B3ull)) ^ c);
}

// ---------------------------------------------------------------- toy scenes

using Rgb = std::array<double, 3>;

struct Rect {
  double cx, cy, hw, hh;
  Rgb color;
};

struct Road {
  double px, py, nx, ny, half_width;
};

enum class Shape { Disk, Ring, Cross, Square, Triangle, Bar };

struct Scene {
  static constexpr int kCells = 16;  // mosaic over [-2,2]^2
  std::array<Rgb, kCells * kCells> mosaic;
  std::vector<Road> roads;
  std::vector<Rect> buildings;
  Shape landmark;
  double lm_x, lm_y, lm_size, lm_angle;
  Rgb lm_color;
};

const std::array<Rgb, 6> kRoofs{{{225, 215, 205}, {175, 75, 60}, {45, 45, 55}, {245, 245, 235}, {70, 95, 160}, {120, 150, 80}}};

Scene make_scene(const ToySpec& spec, int class_index) {
  auto rng = stream_rng(spec.seed, 0x5CE9E, static_cast<std::uint64_t>(class_index));
  Scene s;
  for (auto& cell : s.mosaic) {
    for (double& ch : cell) ch = uniform(rng, 30, 220);
  }
  const int roads = 2 + static_cast<int>(uniform_index(rng, 2));
  for (int i = 0; i < roads; ++i) {
    const double a = uniform(rng, 0, std::numbers::pi);
    s.roads.push_back({uniform(rng, -1, 1), uniform(rng, -1, 1), std::cos(a), std::sin(a), uniform(rng, 0.025, 0.045)});
  }
  for (int i = 0; i < 12; ++i) {
    Rect r{uniform(rng, -1.7, 1.7), uniform(rng, -1.7, 1.7), uniform(rng, 0.06, 0.18), uniform(rng, 0.06, 0.18), {}};
    const Rgb& base = kRoofs[uniform_index(rng, kRoofs.size())];
    for (int c = 0; c < 3; ++c) r.color[c] = std::clamp(base[c] + uniform(rng, -15, 15), 0.0, 255.0);
    s.buildings.push_back(r);
  }
  s.landmark = static_cast<Shape>(class_index % 6);
  s.lm_x = uniform(rng, -0.1, 0.1);
  s.lm_y = uniform(rng, -0.1, 0.1);
  s.lm_size = uniform(rng, 0.25, 0.42);
  s.lm_angle = uniform(rng, 0, std::numbers::pi / 2);
  const Rgb& base = kRoofs[uniform_index(rng, kRoofs.size())];
  for (int c = 0; c < 3; ++c) s.lm_color[c] = std::clamp(base[c] + uniform(rng, -20, 20), 0.0, 255.0);
  return s;
}

bool in_landmark(const Scene& s, double u, double v) {
  const double ca = std::cos(s.lm_angle), sa = std::sin(s.lm_angle);
  const double x = ((u - s.lm_x) * ca + (v - s.lm_y) * sa) / s.lm_size;
  const double y = (-(u - s.lm_x) * sa + (v - s.lm_y) * ca) / s.lm_size;
  const double r = std::hypot(x, y);
  switch (s.landmark) {
    case Shape::Disk: return r <= 1.0;
    case Shape::Ring: return r <= 1.0 && r >= 0.6;
    case Shape::Cross: return (std::abs(x) <= 1.0 && std::abs(y) <= 0.3) || (std::abs(y) <= 1.0 && std::abs(x) <= 0.3);
    case Shape::Square: return std::abs(x) <= 0.8 && std::abs(y) <= 0.8 && !(std::abs(x) <= 0.35 && std::abs(y) <= 0.35);
    case Shape::Triangle: return y >= -0.7 && y <= 0.9 && std::abs(x) <= (0.9 - y) * 0.6;
    case Shape::Bar: return std::abs(x) <= 1.1 && std::abs(y) <= 0.35;
  }
  return false;
}

Rgb scene_color(const Scene& s, double u, double v) {
  if (in_landmark(s, u, v)) return s.lm_color;
  for (auto it = s.buildings.rbegin(); it != s.buildings.rend(); ++it) {
    if (std::abs(u - it->cx) <= it->hw && std::abs(v - it->cy) <= it->hh) return it->color;
  }
  for (const auto& r : s.roads) {
    if (std::abs((u - r.px) * r.nx + (v - r.py) * r.ny) <= r.half_width) return {105, 105, 100};
  }
  const int cx = std::clamp(static_cast<int>(std::floor((u + 2.0) / 4.0 * Scene::kCells)), 0, Scene::kCells - 1);
  const int cy = std::clamp(static_cast<int>(std::floor((v + 2.0) / 4.0 * Scene::kCells)), 0, Scene::kCells - 1);
  return s.mosaic[cy * Scene::kCells + cx];
}

// Satellite tiles share one dark, low-key tone curve per channel.
constexpr Rgb kSatelliteGamma{1.45, 1.35, 1.40};

struct Photometric {
  Rgb gamma;
  Rgb gain;
};

struct Framing {
  double scale = 1.0, angle = 0.0, tx = 0.0, ty = 0.0;
};

RgbImage render(const Scene& scene, const ToySpec& spec, const Framing& f, const Photometric& ph, std::mt19937_64& noise) {
  const int S = spec.image_size;
  RgbImage img(S, S);
  const double ca = std::cos(f.angle), sa = std::sin(f.angle);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double px = (x + 0.5) / S * 2.0 - 1.0;
      const double py = (y + 0.5) / S * 2.0 - 1.0;
      const double u = f.scale * (ca * px - sa * py) + f.tx;
      const double v = f.scale * (sa * px + ca * py) + f.ty;
      const Rgb base = scene_color(scene, u, v);
      for (int c = 0; c < 3; ++c) {
        const double textured = std::clamp(base[c] + uniform(noise, -18, 18), 0.0, 255.0);
        const double toned = 255.0 * std::pow(textured / 255.0, ph.gamma[c]) * ph.gain[c];
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(toned), 0L, 255L));
      }
    }
  }
  return img;
}

}  // namespace

void ToySpec::validate() const {
  if (num_classes < 2) throw ConfigError("toy dataset needs at least 2 classes");
  if (drone_views_per_class < 1 || query_views_per_class < 0) throw ConfigError("toy view counts must be positive");
  if (image_size < 16) throw ConfigError("toy image size must be at least 16");
  if (style_jitter < 0 || geometry_jitter < 0) throw ConfigError("toy jitter must be non-negative");
}

RgbImage render_satellite(const ToySpec& spec, int class_index) {
  const Scene scene = make_scene(spec, class_index);
  auto noise = stream_rng(spec.seed, 0x5A7, static_cast<std::uint64_t>(class_index));
  return render(scene, spec, Framing{}, Photometric{kSatelliteGamma, {1, 1, 1}}, noise);
}

RgbImage render_drone(const ToySpec& spec, int class_index, int view_index, int stream) {
  const Scene scene = make_scene(spec, class_index);
  auto rng = stream_rng(spec.seed, 0xD90E + static_cast<std::uint64_t>(stream), static_cast<std::uint64_t>(class_index),
                        static_cast<std::uint64_t>(view_index));
  const double gj = spec.geometry_jitter;
  Framing f;
  f.scale = 1.0 + gj * (uniform(rng, 0.75, 1.15) - 1.0);
  f.angle = gj * uniform(rng, -25.0, 25.0) * std::numbers::pi / 180.0;
  f.tx = gj * uniform(rng, -0.08, 0.08);
  f.ty = gj * uniform(rng, -0.08, 0.08);

  // Drone exposures run darker than the satellite tone curve (shadowed or backlit shots).
  const double sj = spec.style_jitter;
  const double gamma = uniform(rng, 1.6, 2.5);
  const double brightness = uniform(rng, 0.85, 1.1);
  Photometric ph;
  for (int c = 0; c < 3; ++c) {
    const double tint = uniform(rng, 0.92, 1.08);
    ph.gamma[c] = kSatelliteGamma[c] + sj * (gamma - kSatelliteGamma[c]);
    ph.gain[c] = 1.0 + sj * (brightness * tint - 1.0);
  }
  return render(scene, spec, f, ph, rng);
}

namespace {

std::string class_dir_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", k);
  return buf;
}

}  // namespace

DatasetManifest generate_toy(const ToySpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("cannot create output directory " + out_dir.string());
  {
    const fs::path probe = out_dir / ".write_probe";
    std::ofstream os(probe);
    if (!os) throw Error("output directory is not writable: " + out_dir.string());
    os.close();
    fs::remove(probe);
  }

  for (int k = 0; k < spec.num_classes; ++k) {
    const std::string cls = class_dir_name(k);
    const RgbImage sat = render_satellite(spec, k);
    for (const char* dir : {"train/satellite", "gallery/satellite", "query/satellite"}) {
      write_png(sat, out_dir / dir / cls / (cls + ".png"));
    }
    for (int v = 0; v < spec.drone_views_per_class; ++v) {
      char name[32];
      std::snprintf(name, sizeof name, "image-%02d.png", v + 1);
      write_png(render_drone(spec, k, v, 0), out_dir / "train/drone" / cls / name);
    }
    for (int v = 0; v < spec.query_views_per_class; ++v) {
      char name[32];
      std::snprintf(name, sizeof name, "image-%02d.png", v + 1);
      const RgbImage drone = render_drone(spec, k, v, 1);
      write_png(drone, out_dir / "query/drone" / cls / name);
      write_png(drone, out_dir / "gallery/drone" / cls / name);
    }
  }
  return scan_dataset(out_dir, Split::Train);
}

// ---------------------------------------------------------------- sampler

BatchSampler::BatchSampler(const DatasetManifest& manifest, int batch_size, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed), num_classes_(static_cast<int>(manifest.classes.size())) {
  drones_ = manifest.of_view(View::Drone);
  satellites_ = manifest.of_view(View::Satellite);
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > drones_.size()) {
    throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds the " + std::to_string(drones_.size()) + " training pairs");
  }
  std::map<std::string, std::vector<std::size_t>> sat_of;
  for (std::size_t i = 0; i < satellites_.size(); ++i) sat_of[satellites_[i].class_id].push_back(i);
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < drones_.size(); ++i) {
    const auto& cls = drones_[i].class_id;
    auto it = sat_of.find(cls);
    if (it == sat_of.end()) throw Error("class " + cls + " missing satellite view");
    const std::size_t k = seen[cls]++;
    pairs_.push_back({i, it->second[k % it->second.size()], manifest.label_of(cls)});
  }
}

int BatchSampler::steps_per_epoch() const {
  return static_cast<int>((pairs_.size() + batch_size_ - 1) / batch_size_);
}

std::vector<std::vector<Pair>> BatchSampler::epoch(int epoch_index) const {
  auto rng = stream_rng(seed_, 0x5A3B1E, static_cast<std::uint64_t>(epoch_index));
  std::vector<Pair> order = pairs_;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<std::vector<Pair>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace uavgeo::data
