#include "uavgeo/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "uavgeo/error.hpp"

namespace uavgeo::net {

std::string to_string(DescriptorKind kind) { return kind == DescriptorKind::JointBn ? "joint_bn" : "compressed"; }

DescriptorKind descriptor_kind_from_string(const std::string& s) {
  if (s == "joint_bn") return DescriptorKind::JointBn;
  if (s == "compressed") return DescriptorKind::Compressed;
  throw ConfigError("model.descriptor must be joint_bn or compressed, got '" + s + "'");
}

void ModelConfig::validate() const {
  if (num_classes < 1) throw ConfigError("model.num_classes must be >= 1");
  if (!(gem_p >= 1.0)) throw ConfigError("model.gem_p must be >= 1");
  geometry::PartitionSpec{partition_ratio}.validate();
  if (input_size < 32 || input_size % 16 != 0) throw ConfigError("model.input_size must be a multiple of 16, at least 32");
  if (base_width < 1) throw ConfigError("model.base_width must be >= 1");
  for (int b : blocks) {
    if (b < 1) throw ConfigError("model.blocks entries must be >= 1");
  }
}

namespace {

std::string join_blocks(const std::array<int, 4>& blocks) {
  std::string s;
  for (std::size_t i = 0; i < blocks.size(); ++i) s += (i ? "," : "") + std::to_string(blocks[i]);
  return s;
}

std::string join_stages(const std::set<Stage>& stages) {
  std::string s;
  for (Stage st : stages) s += (s.empty() ? "" : ",") + std::string("stage") + std::to_string(static_cast<int>(st));
  return s;
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("checkpoint config lacks " + key);
  return it->second;
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"model.num_classes", std::to_string(num_classes)},
      {"model.gem_p", fmt_double(gem_p)},
      {"model.gem_learnable", gem_learnable ? "true" : "false"},
      {"partition.ratio", fmt_double(partition_ratio)},
      {"model.hab_stages", join_stages(hab_stages)},
      {"model.input_size", std::to_string(input_size)},
      {"model.base_width", std::to_string(base_width)},
      {"model.blocks", join_blocks(blocks)},
      {"model.descriptor", to_string(descriptor)},
      {"model.init_seed", std::to_string(init_seed)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  try {
    c.num_classes = std::stoi(require(kv, "model.num_classes"));
    c.gem_p = std::stod(require(kv, "model.gem_p"));
    c.gem_learnable = require(kv, "model.gem_learnable") == "true";
    c.partition_ratio = std::stod(require(kv, "partition.ratio"));
    c.hab_stages.clear();
    std::istringstream st(require(kv, "model.hab_stages"));
    std::string item;
    while (std::getline(st, item, ',')) {
      if (item.empty()) continue;
      if (item == "stage3") c.hab_stages.insert(Stage::Stage3);
      else if (item == "stage4") c.hab_stages.insert(Stage::Stage4);
      else if (item == "stage5") c.hab_stages.insert(Stage::Stage5);
      else throw ConfigError("unknown attention stage '" + item + "'");
    }
    c.input_size = std::stoi(require(kv, "model.input_size"));
    c.base_width = std::stoi(require(kv, "model.base_width"));
    std::istringstream bl(require(kv, "model.blocks"));
    for (int& b : c.blocks) {
      if (!std::getline(bl, item, ',')) throw ConfigError("model.blocks needs four entries");
      b = std::stoi(item);
    }
    c.descriptor = descriptor_kind_from_string(require(kv, "model.descriptor"));
    c.init_seed = std::stoull(require(kv, "model.init_seed"));
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed model config value");
  } catch (const std::out_of_range&) {
    throw ConfigError("model config value out of range");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- input

void normalize_planar(std::vector<double>& planar) {
  const std::size_t plane = planar.size() / 3;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      double& v = planar[c * plane + i];
      v = (v / 255.0 - kPixelMean[c]) / kPixelStd[c];
    }
  }
}

Tensor stack_images(const std::vector<std::vector<double>>& planar, int size) {
  Tensor t(static_cast<int>(planar.size()), 3, size, size);
  for (std::size_t n = 0; n < planar.size(); ++n) {
    if (planar[n].size() != t.sample_size()) throw Error("image tensor size mismatch");
    std::copy(planar[n].begin(), planar[n].end(), t.sample(static_cast<int>(n)));
  }
  return t;
}

Tensor image_to_tensor(const RgbImage& image, int size) {
  auto planar = resample_planar(image, 0, 0, image.width, image.height, size, size);
  normalize_planar(planar);
  return stack_images({planar}, size);
}

// ---------------------------------------------------------------- model

Model::Model(ModelConfig config)
    : config_(std::move(config)),
      gem_center_(config_.gem_p, config_.gem_learnable, "gem_center"),
      gem_surround_(config_.gem_p, config_.gem_learnable, "gem_surround") {
  config_.validate();
  const int w = config_.base_width;
  stem_conv_ = nn::Conv2d(3, w, 7, 2, 3, false, "stem.conv");
  stem_bn_ = nn::BatchNorm(w, "stem.bn");

  // Strides: stage2 keeps the post-pool resolution, stages 3 and 4 halve it,
  // stage5 keeps it (stride 1 instead of ResNet's 2), so the net downsamples by 16.
  const std::array<int, 4> strides{1, 2, 2, 1};
  int in = w;
  for (int s = 0; s < 4; ++s) {
    StageBlocks stage;
    const int width = w << s;
    for (int b = 0; b < config_.blocks[s]; ++b) {
      const std::string name = "stage" + std::to_string(s + 2) + "." + std::to_string(b);
      stage.blocks.emplace_back(in, width, b == 0 ? strides[s] : 1, name);
      in = width * nn::Bottleneck::kExpansion;
    }
    if (s >= 1 && config_.hab_stages.contains(static_cast<Stage>(s + 2))) {
      stage.hab.emplace(geometry::PartitionSpec{config_.partition_ratio}, "stage" + std::to_string(s + 2) + ".hab");
    }
    stages_.push_back(std::move(stage));
  }

  const int C = config_.feature_channels();
  neck_bn_ = nn::BatchNorm(2 * C, "neck.bn");
  compress_ = nn::Linear(2 * C, C, "neck.compress");
  classifier_ = nn::Linear(C, config_.num_classes, "classifier");

  std::mt19937_64 rng(config_.init_seed);
  stem_conv_.init_kaiming(rng);
  for (auto& stage : stages_) {
    for (auto& block : stage.blocks) block.init(rng);
    if (stage.hab) stage.hab->init(rng);
  }
  compress_.init_normal(rng, std::sqrt(1.0 / (2 * C)));
  // A much smaller head leaves the class-probability columns almost constant at
  // the start, and the correlation gradient scales with their inverse spread.
  classifier_.init_normal(rng, 0.05);
}

nn::Hab* Model::hab(Stage stage) {
  auto& s = stages_[static_cast<int>(stage) - 2];
  return s.hab ? &*s.hab : nullptr;
}

Tensor Model::backbone_forward(const Tensor& images, nn::Mode mode) {
  if (images.c() != 3) throw Error("expected 3 input channels, got " + std::to_string(images.c()));
  Tensor x = stem_pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(images), mode)));
  for (auto& stage : stages_) {
    for (auto& block : stage.blocks) x = block.forward(x, mode);
    if (stage.hab) x = stage.hab->forward(x, mode);
  }
  return x;
}

ForwardOutput Model::forward(const Tensor& images, nn::Mode mode) {
  ForwardOutput out;
  out.feature_map = backbone_forward(images, mode);
  const Tensor& fm = out.feature_map;
  batch_ = fm.n();
  if (fm.h() != map_h_ || fm.w() != map_w_) {
    map_h_ = fm.h();
    map_w_ = fm.w();
    const auto box = geometry::center_box(map_h_, map_w_, geometry::PartitionSpec{config_.partition_ratio});
    center_region_ = nn::region_from_box(map_h_, map_w_, box);
    surround_region_ = nn::region_from_mask(geometry::surround_mask(map_h_, map_w_, box));
  }
  out.center = gem_center_.forward(fm, center_region_);
  out.surround = gem_surround_.forward(fm, surround_region_);

  const int C = fm.c();
  out.joint = Tensor::matrix(batch_, 2 * C);
  for (int n = 0; n < batch_; ++n) {
    std::copy(out.center.sample(n), out.center.sample(n) + C, out.joint.sample(n));
    std::copy(out.surround.sample(n), out.surround.sample(n) + C, out.joint.sample(n) + C);
  }
  out.joint_bn = neck_bn_.forward(out.joint, mode);
  out.compressed = compress_.forward(out.joint_bn);
  out.logits = classifier_.forward(out.compressed);
  return out;
}

void Model::backward(const Tensor& d_joint_bn, const Tensor& d_logits) {
  Tensor g = compress_.backward(classifier_.backward(d_logits));
  if (!d_joint_bn.empty()) g += d_joint_bn;
  const Tensor d_joint = neck_bn_.backward(g);

  const int C = config_.feature_channels();
  Tensor d_center = Tensor::matrix(batch_, C);
  Tensor d_surround = Tensor::matrix(batch_, C);
  for (int n = 0; n < batch_; ++n) {
    std::copy(d_joint.sample(n), d_joint.sample(n) + C, d_center.sample(n));
    std::copy(d_joint.sample(n) + C, d_joint.sample(n) + 2 * C, d_surround.sample(n));
  }
  Tensor dx = gem_center_.backward(d_center);
  dx += gem_surround_.backward(d_surround);

  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    if (it->hab) dx = it->hab->backward(dx);
    for (auto b = it->blocks.rbegin(); b != it->blocks.rend(); ++b) dx = b->backward(dx);
  }
  stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(stem_pool_.backward(dx))));
}

Tensor Model::classify(const Tensor& compressed) {
  if (static_cast<int>(compressed.sample_size()) != classifier_.in_features()) {
    throw Error("classifier dimension mismatch: expected " + std::to_string(classifier_.in_features()) + ", got " +
                std::to_string(compressed.sample_size()));
  }
  return classifier_.forward(compressed);
}

namespace {

std::vector<double> row(const Tensor& t, int n) { return {t.sample(n), t.sample(n) + t.sample_size()}; }

}  // namespace

std::vector<Descriptor> Model::embed_batch(const std::vector<RgbImage>& images, int batch_size) {
  std::vector<Descriptor> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    std::vector<std::vector<double>> planar;
    for (std::size_t i = start; i < end; ++i) {
      auto p = resample_planar(images[i], 0, 0, images[i].width, images[i].height, config_.input_size, config_.input_size);
      normalize_planar(p);
      planar.push_back(std::move(p));
    }
    const ForwardOutput f = forward(stack_images(planar, config_.input_size), nn::Mode::Eval);
    for (int n = 0; n < f.joint.n(); ++n) {
      out.push_back({row(f.center, n), row(f.surround, n), row(f.joint, n), row(f.joint_bn, n), row(f.compressed, n)});
    }
  }
  return out;
}

Descriptor Model::embed(const RgbImage& image) { return embed_batch({image}, 1).front(); }

nn::StateRefs Model::state() {
  nn::StateRefs refs;
  stem_conv_.collect(refs);
  stem_bn_.collect(refs);
  for (auto& stage : stages_) {
    for (auto& block : stage.blocks) block.collect(refs);
    if (stage.hab) stage.hab->collect(refs);
  }
  gem_center_.collect(refs);
  gem_surround_.collect(refs);
  neck_bn_.collect(refs);
  compress_.collect(refs);
  classifier_.collect(refs);
  return refs;
}

void Model::zero_grad() {
  for (auto* p : state().params) p->zero_grad();
}

SharedOutput shared_forward(Model& model, const Tensor& drone_batch, const Tensor& satellite_batch, nn::Mode mode) {
  const int nd = drone_batch.n();
  const ForwardOutput all = model.forward(Tensor::concat_batch(drone_batch, satellite_batch), mode);
  auto split = [&](int begin, int end) {
    ForwardOutput o;
    o.feature_map = all.feature_map.slice_batch(begin, end);
    o.center = all.center.slice_batch(begin, end);
    o.surround = all.surround.slice_batch(begin, end);
    o.joint = all.joint.slice_batch(begin, end);
    o.joint_bn = all.joint_bn.slice_batch(begin, end);
    o.compressed = all.compressed.slice_batch(begin, end);
    o.logits = all.logits.slice_batch(begin, end);
    return o;
  };
  return {split(0, nd), split(nd, all.logits.n())};
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'U', 'A', 'V', 'G', 'E', 'O', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("truncated checkpoint");
  return v;
}
void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 24)) throw Error("corrupt checkpoint string");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw Error("truncated checkpoint");
  return s;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  put_str(os, name);
  for (int d : {t.n(), t.c(), t.h(), t.w()}) put_u32(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> get_tensor(std::istream& is) {
  std::string name = get_str(is);
  int dims[4];
  for (int& d : dims) d = static_cast<int>(get_u32(is));
  Tensor t(dims[0], dims[1], dims[2], dims[3]);
  is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw Error("truncated checkpoint tensor " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path, const std::map<std::string, Tensor>& extras) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    std::string cfg;
    for (const auto& [k, v] : model.config().to_map()) cfg += k + "=" + v + "\n";
    put_str(os, cfg);

    const auto refs = model.state();
    put_u32(os, static_cast<std::uint32_t>(refs.params.size() + refs.buffers.size() + extras.size()));
    for (const auto* p : refs.params) put_tensor(os, p->name, p->value);
    for (const auto& [name, t] : refs.buffers) put_tensor(os, name, *t);
    for (const auto& [name, t] : extras) put_tensor(os, "extra:" + name, t);
    if (!os) throw Error("cannot write " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(path.string() + " is not a checkpoint");
  if (get_u32(is) != kVersion) throw Error("unsupported checkpoint version");

  std::map<std::string, std::string> kv;
  std::istringstream cfg(get_str(is));
  std::string line;
  while (std::getline(cfg, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig config = ModelConfig::from_map(kv);
  if (expected) {
    auto a = config.to_map();
    auto b = expected->to_map();
    for (const char* key : {"model.num_classes", "model.gem_learnable", "model.hab_stages", "model.base_width", "model.blocks",
                            "model.input_size", "partition.ratio", "model.gem_p"}) {
      if (a[key] != b[key]) {
        throw ConfigError(std::string("checkpoint/config mismatch on ") + key + ": checkpoint has " + a[key] + ", config has " + b[key]);
      }
    }
  }

  LoadedCheckpoint out{Model(config), {}};
  std::map<std::string, Tensor> stored;
  const std::uint32_t count = get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = get_tensor(is);
    if (name.rfind("extra:", 0) == 0) {
      out.extras.emplace(name.substr(6), std::move(t));
    } else {
      stored.emplace(std::move(name), std::move(t));
    }
  }

  auto assign = [&](const std::string& name, Tensor& dst) {
    auto it = stored.find(name);
    if (it == stored.end()) throw Error("checkpoint lacks tensor " + name);
    if (!it->second.same_shape(dst)) throw Error("checkpoint tensor " + name + " has shape " + it->second.shape_string());
    dst = it->second;
  };
  auto refs = out.model.state();
  for (auto* p : refs.params) assign(p->name, p->value);
  for (auto& [name, t] : refs.buffers) assign(name, *t);
  return out;
}

}  // namespace uavgeo::net
