// uavgeo: preprocess | train | evaluate | gen-toy | plot-mapping
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "uavgeo/config.hpp"
#include "uavgeo/data.hpp"
#include "uavgeo/error.hpp"
#include "uavgeo/network.hpp"
#include "uavgeo/plot.hpp"
#include "uavgeo/retrieval.hpp"
#include "uavgeo/style_align.hpp"
#include "uavgeo/trainer.hpp"

namespace fs = std::filesystem;
using namespace uavgeo;

namespace {

struct CommonOptions {
  std::string config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--preset", preset, "named preset (toy)");
    app->add_option("--seed", seed, "overrides the seed key");
    app->add_option("--set", overrides, "key=value override, repeatable")->allow_extra_args(false);
  }

  config::RunConfig resolve(const std::vector<std::string>& extra = {}) const {
    config::Sources src;
    if (!preset.empty()) src.preset = preset;
    if (!config_file.empty()) src.file = config_file;
    src.overrides = extra;
    src.overrides.insert(src.overrides.end(), overrides.begin(), overrides.end());
    src.seed = seed;
    return config::resolve(src);
  }

  bool any() const { return !config_file.empty() || !preset.empty() || !overrides.empty(); }
};

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool under_drone_dir(const fs::path& p) {
  for (const auto& part : p) {
    if (part == "drone") return true;
  }
  return false;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string satellite_dir, drone_dir, out_dir, mapping_out;
};

int cmd_preprocess(const PreprocessArgs& a, const CommonOptions& common) {
  const auto cfg = common.resolve();
  if (!fs::is_directory(a.satellite_dir)) throw ConfigError("no satellite mappings: " + a.satellite_dir + " is not a directory");
  if (!fs::is_directory(a.drone_dir)) throw ConfigError("drone directory " + a.drone_dir + " does not exist");
  const auto sat_files = png_files(a.satellite_dir);
  if (sat_files.empty()) throw ConfigError("no satellite mappings: no images under " + a.satellite_dir);

  std::vector<RgbImage> sats;
  std::vector<style::ColorMapping> maps;
  for (const auto& f : sat_files) {
    sats.push_back(read_png(f));
    maps.push_back(style::mapping_from_image(sats.back()));
  }
  const auto mapping = cfg.sas_pooled ? style::pooled_mapping(sats) : style::average_mapping(maps);
  style::save_mapping(mapping, a.mapping_out);

  // Collect first: the output tree may live under the input tree.
  std::vector<fs::path> inputs;
  for (const auto& e : fs::recursive_directory_iterator(a.drone_dir)) {
    if (e.is_regular_file()) inputs.push_back(e.path());
  }
  std::sort(inputs.begin(), inputs.end());
  const fs::path out_root = fs::weakly_canonical(a.out_dir);
  std::size_t mapped = 0, copied = 0;
  for (const auto& in : inputs) {
    if (fs::weakly_canonical(in).string().rfind(out_root.string() + "/", 0) == 0) continue;
    const fs::path rel = fs::relative(in, a.drone_dir);
    const fs::path dst = fs::path(a.out_dir) / rel;
    fs::create_directories(dst.parent_path());
    if (in.extension() == ".png" && under_drone_dir(fs::path(a.drone_dir).filename() / rel)) {
      write_png(style::apply_mapping(read_png(in), mapping), dst);
      ++mapped;
    } else {
      fs::copy_file(in, dst, fs::copy_options::overwrite_existing);
      ++copied;
    }
  }
  std::printf("mapping from %zu satellite images -> %s\n%zu drone images mapped, %zu files copied into %s\n", sat_files.size(),
              a.mapping_out.c_str(), mapped, copied, a.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonOptions& common, const std::string& data_root, const std::string& out_dir) {
  std::vector<std::string> extra;
  if (!data_root.empty()) extra.push_back("data.root=" + data_root);
  if (!out_dir.empty()) extra.push_back("train.out_dir=" + out_dir);
  const auto cfg = common.resolve(extra);
  std::printf("%s\n", train::metrics_header().c_str());
  const auto result = train::run_training(cfg, [](const train::EpochStats& s) {
    std::printf("%s\n", train::metrics_row(s).c_str());
    std::fflush(stdout);
  });
  std::printf("best epoch %d, final train R@1 %.4f\ncheckpoints: %s %s\n", result.best_epoch, result.final_train_recall1,
              result.best_checkpoint.c_str(), result.final_checkpoint.c_str());
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint, data_root, query_dir, gallery_dir, direction = "drone2sat", mapping, out_dir = "eval";
};

int cmd_evaluate(const EvaluateArgs& a, const CommonOptions& common) {
  const auto direction = retrieval::direction_from_string(a.direction);
  std::optional<config::RunConfig> cfg;
  if (common.any()) cfg = common.resolve();
  const auto qv = retrieval::query_view(direction);
  const auto gv = retrieval::gallery_view(direction);

  fs::path qdir = a.query_dir, gdir = a.gallery_dir;
  if (!a.data_root.empty()) {
    if (!a.query_dir.empty() || !a.gallery_dir.empty()) throw ConfigError("use either --data-root or --query-dir/--gallery-dir");
    qdir = fs::path(a.data_root) / "query" / retrieval::to_string(qv);
    gdir = fs::path(a.data_root) / "gallery" / retrieval::to_string(gv);
  }
  if (qdir.empty() || gdir.empty()) throw ConfigError("evaluate needs --data-root or both --query-dir and --gallery-dir");
  std::optional<style::ColorMapping> mapping;
  if (!a.mapping.empty()) mapping = style::load_mapping(a.mapping);

  std::optional<net::ModelConfig> expected;
  if (cfg && cfg->model.num_classes != 0) expected = cfg->model;
  auto loaded = net::load_checkpoint(a.checkpoint, expected ? &*expected : nullptr);
  net::Model& model = loaded.model;
  const auto kind = cfg ? cfg->model.descriptor : model.config().descriptor;

  auto load_view = [&](const fs::path& dir, retrieval::View view) {
    const auto entries = fs::is_directory(dir) ? data::scan_view_dir(dir, view) : std::vector<data::ImageEntry>{};
    std::vector<RgbImage> images;
    for (const auto& e : entries) {
      auto img = read_png(e.path);
      if (mapping && view == retrieval::View::Drone) img = style::apply_mapping(img, *mapping);
      images.push_back(std::move(img));
    }
    return std::make_pair(entries, images);
  };
  if (!fs::is_directory(qdir)) throw Error("no queries: " + qdir.string() + " is not a directory");
  auto [qentries, qimages] = load_view(qdir, qv);
  if (qentries.empty()) throw Error("no queries under " + qdir.string());
  auto [gentries, gimages] = load_view(gdir, gv);
  if (gentries.empty()) throw Error("empty gallery under " + gdir.string());

  retrieval::GalleryIndex gallery;
  const auto gdesc = model.embed_batch(gimages);
  for (std::size_t i = 0; i < gdesc.size(); ++i) gallery.add(gdesc[i].retrieval(kind), gentries[i].class_id, gv);
  std::vector<std::vector<double>> qdesc;
  std::vector<std::string> qids, qnames;
  const auto qd = model.embed_batch(qimages);
  for (std::size_t i = 0; i < qd.size(); ++i) {
    qdesc.push_back(qd[i].retrieval(kind));
    qids.push_back(qentries[i].class_id);
    qnames.push_back(qentries[i].path.string());
  }
  const auto report = retrieval::evaluate(qdesc, qids, gallery, direction);
  retrieval::write_report(report, a.out_dir, qnames);
  std::printf("%s", retrieval::format_report(report).c_str());
  return 0;
}

// ---------------------------------------------------------------- gen-toy / plot-mapping

int cmd_gen_toy(const data::ToySpec& spec, const std::string& out) {
  spec.validate();
  const auto m = data::generate_toy(spec, out);
  std::printf("%zu classes, %zu drone + %zu satellite training images in %s\n", m.classes.size(), m.count(retrieval::View::Drone),
              m.count(retrieval::View::Satellite), out.c_str());
  return 0;
}

int cmd_plot_mapping(const std::string& mapping_file, const std::string& out) {
  const auto mapping = style::load_mapping(mapping_file);
  write_png(plot::plot_mapping(mapping), out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view drone/satellite geo-localization toolkit"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  CommonOptions pre_common;
  auto* preprocess = app.add_subcommand("preprocess", "Build the satellite colour mapping and map drone images");
  preprocess->add_option("--satellite-dir", pre.satellite_dir, "satellite images (searched recursively)")->required();
  preprocess->add_option("--drone-dir", pre.drone_dir, "tree to mirror; PNGs under a 'drone' directory are mapped")->required();
  preprocess->add_option("--out-dir", pre.out_dir, "output tree")->required();
  preprocess->add_option("--mapping-out", pre.mapping_out, "mapping file to write")->required();
  pre_common.attach(preprocess);

  CommonOptions train_common;
  std::string data_root, train_out;
  auto* train = app.add_subcommand("train", "Train on <data.root>/train");
  train_common.attach(train);
  train->add_option("--data-root", data_root, "shorthand for --set data.root=...");
  train->add_option("--out-dir", train_out, "shorthand for --set train.out_dir=...");

  EvaluateArgs ev;
  CommonOptions ev_common;
  auto* evaluate = app.add_subcommand("evaluate", "Rank a gallery for every query and report Recall@K / AP");
  evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data-root", ev.data_root, "dataset root with query/ and gallery/ splits");
  evaluate->add_option("--query-dir", ev.query_dir, "query view directory (<class_id>/<image>)");
  evaluate->add_option("--gallery-dir", ev.gallery_dir, "gallery view directory (<class_id>/<image>)");
  evaluate->add_option("--direction", ev.direction, "drone2sat or sat2drone");
  evaluate->add_option("--mapping", ev.mapping, "colour mapping applied to drone images before embedding");
  evaluate->add_option("--out-dir", ev.out_dir, "report directory");
  ev_common.attach(evaluate);

  data::ToySpec toy;
  std::string toy_out;
  auto* gen = app.add_subcommand("gen-toy", "Render a synthetic dataset");
  gen->add_option("--out", toy_out, "output root")->required();
  gen->add_option("--classes", toy.num_classes, "number of classes");
  gen->add_option("--views", toy.drone_views_per_class, "training drone views per class");
  gen->add_option("--query-views", toy.query_views_per_class, "held-out drone views per class");
  gen->add_option("--size", toy.image_size, "image side in pixels");
  gen->add_option("--seed", toy.seed, "generator seed");
  gen->add_option("--style-jitter", toy.style_jitter, "drone photometric variation (0 disables)");
  gen->add_option("--geometry-jitter", toy.geometry_jitter, "drone framing variation (0 disables)");

  std::string mapping_file, plot_out;
  auto* plot = app.add_subcommand("plot-mapping", "Draw the three lookup curves of a mapping file");
  plot->add_option("--mapping", mapping_file, "mapping file")->required();
  plot->add_option("--out", plot_out, "PNG to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*preprocess) return cmd_preprocess(pre, pre_common);
    if (*train) return cmd_train(train_common, data_root, train_out);
    if (*evaluate) return cmd_evaluate(ev, ev_common);
    if (*gen) return cmd_gen_toy(toy, toy_out);
    if (*plot) return cmd_plot_mapping(mapping_file, plot_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
