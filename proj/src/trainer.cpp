#include "uavgeo/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "uavgeo/error.hpp"
#include "uavgeo/losses.hpp"
#include "uavgeo/optimizer.hpp"
#include "uavgeo/retrieval.hpp"

namespace fs = std::filesystem;

namespace uavgeo::train {

std::string metrics_header() { return "epoch,lr,center,ce,dc,aux,total,train_acc,recall1,seconds"; }

std::string metrics_row(const EpochStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.6f,", s.epoch, s.lr, s.center, s.ce, s.dc, s.aux, s.total,
                s.train_acc);
  std::string row = buf;
  if (s.recall1 >= 0) {
    std::snprintf(buf, sizeof buf, "%.6f", s.recall1);
    row += buf;
  }
  std::snprintf(buf, sizeof buf, ",%.2f", s.seconds);
  return row + buf;
}

std::vector<double> augment_image(const RgbImage& image, int size, std::mt19937_64& rng) {
  const double scale = data::uniform(rng, 0.85, 1.0);
  const double w = image.width * scale, h = image.height * scale;
  const double x0 = data::uniform(rng, 0.0, image.width - w);
  const double y0 = data::uniform(rng, 0.0, image.height - h);
  const bool flip = data::uniform(rng, 0.0, 1.0) < 0.5;
  auto planar = resample_planar(image, x0, y0, w, h, size, size, flip);
  net::normalize_planar(planar);
  return planar;
}

namespace {

bool all_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<RgbImage> load_all(const std::vector<data::ImageEntry>& entries) {
  std::vector<RgbImage> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(read_png(e.path));
  return out;
}

double recall1(net::Model& model, const std::vector<RgbImage>& drones, const std::vector<std::string>& drone_ids,
               const std::vector<RgbImage>& sats, const std::vector<std::string>& sat_ids) {
  const auto kind = model.config().descriptor;
  retrieval::GalleryIndex gallery;
  const auto sd = model.embed_batch(sats);
  for (std::size_t i = 0; i < sd.size(); ++i) gallery.add(sd[i].retrieval(kind), sat_ids[i], retrieval::View::Satellite);
  std::vector<std::vector<double>> q;
  for (const auto& d : model.embed_batch(drones)) q.push_back(d.retrieval(kind));
  const auto report = retrieval::evaluate(q, drone_ids, gallery, retrieval::Direction::DroneToSatellite, {1});
  return report.recall_at.at(1);
}

std::vector<std::string> ids_of(const std::vector<data::ImageEntry>& entries) {
  std::vector<std::string> ids;
  for (const auto& e : entries) ids.push_back(e.class_id);
  return ids;
}

void clip_gradients(const std::vector<nn::Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto* p : params) {
    for (double& g : p->grad.values()) g *= s;
  }
}

}  // namespace

double manifest_recall1(net::Model& model, const data::DatasetManifest& manifest) {
  const auto drones = manifest.of_view(retrieval::View::Drone);
  const auto sats = manifest.of_view(retrieval::View::Satellite);
  return recall1(model, load_all(drones), ids_of(drones), load_all(sats), ids_of(sats));
}

TrainResult run_training(const config::RunConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (cfg.data_root.empty()) throw ConfigError("data.root is not set");
  const auto manifest = data::scan_dataset(cfg.data_root, data::Split::Train);
  const int num_classes = static_cast<int>(manifest.classes.size());
  if (cfg.model.num_classes != 0 && cfg.model.num_classes != num_classes) {
    throw ConfigError("model.num_classes is " + std::to_string(cfg.model.num_classes) + " but the training split has " +
                      std::to_string(num_classes) + " classes");
  }
  data::BatchSampler sampler(manifest, cfg.batch_size, cfg.seed);

  net::ModelConfig mc = cfg.model;
  mc.num_classes = num_classes;
  mc.init_seed = cfg.seed;

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  {
    auto kv = cfg.to_map();
    kv["model.num_classes"] = std::to_string(num_classes);
    std::ofstream os(out / "config.txt", std::ios::binary);
    os << config::format_kv(kv);
  }

  const auto drone_imgs = load_all(sampler.drones());
  const auto sat_imgs = load_all(sampler.satellites());
  const auto drone_ids = ids_of(sampler.drones());
  const auto sat_ids = ids_of(sampler.satellites());

  net::Model model(mc);
  optim::Sgd sgd(cfg.optim);
  loss::ClassCenters centers(num_classes, 2 * mc.feature_channels());
  std::mt19937_64 aug_rng(cfg.seed * 0x9E3779B97F4A7C15ull + 17);
  const int S = mc.input_size;

  std::ofstream metrics(out / "metrics.csv", std::ios::binary);
  metrics << metrics_header() << '\n';

  TrainResult result;
  result.best_checkpoint = out / "best.ckpt";
  result.final_checkpoint = out / "final.ckpt";
  double best_total = std::numeric_limits<double>::infinity();
  long long step = 0;

  for (int e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = e + 1;
    stats.lr = optim::step_lr(cfg.optim, e);
    long long correct = 0, seen = 0;
    const auto batches = sampler.epoch(e);

    for (const auto& batch : batches) {
      ++step;
      std::vector<std::vector<double>> dp, sp;
      std::vector<int> labels;
      for (const auto& pr : batch) {
        dp.push_back(cfg.augment ? augment_image(drone_imgs[pr.drone], S, aug_rng)
                                 : resample_planar(drone_imgs[pr.drone], 0, 0, drone_imgs[pr.drone].width,
                                                   drone_imgs[pr.drone].height, S, S));
        labels.push_back(pr.label);
      }
      for (const auto& pr : batch) {
        sp.push_back(cfg.augment ? augment_image(sat_imgs[pr.satellite], S, aug_rng)
                                 : resample_planar(sat_imgs[pr.satellite], 0, 0, sat_imgs[pr.satellite].width,
                                                   sat_imgs[pr.satellite].height, S, S));
      }
      if (!cfg.augment) {
        for (auto& p : dp) net::normalize_planar(p);
        for (auto& p : sp) net::normalize_planar(p);
      }
      std::vector<int> all_labels = labels;
      all_labels.insert(all_labels.end(), labels.begin(), labels.end());

      model.zero_grad();
      const Tensor images = Tensor::concat_batch(net::stack_images(dp, S), net::stack_images(sp, S));
      const net::ForwardOutput f = model.forward(images, nn::Mode::Train);
      auto diverged = [&] {
        return Error("diverged at step " + std::to_string(step) + " (epoch " + std::to_string(e + 1) + "): non-finite loss");
      };
      // Blown-up weights show up here first; the losses would only report a symptom.
      if (!all_finite(f.logits) || !all_finite(f.joint_bn)) throw diverged();

      Tensor d_feat(f.joint_bn.n(), f.joint_bn.c(), 1, 1);
      Tensor d_logits(f.logits.n(), f.logits.c(), 1, 1);
      loss::LossParts parts;

      const auto lc = loss::center_loss(f.joint_bn, all_labels, centers, 1.0);
      parts.center = lc.value;
      if (cfg.loss.w_center > 0) d_feat.axpy(cfg.loss.w_center, lc.grad);

      const auto lce = loss::cross_entropy(f.logits, all_labels);
      parts.ce = lce.value;
      if (cfg.loss.w_ce > 0) d_logits.axpy(cfg.loss.w_ce, lce.grad);

      const auto ldc = loss::deconstruction_from_logits(f.logits, cfg.loss.lambda_dc);
      parts.dc = ldc.value;
      if (cfg.loss.w_dc > 0) d_logits.axpy(cfg.loss.w_dc, ldc.grad);

      if (cfg.aux == config::AuxLoss::Triplet) {
        const auto lt = loss::batch_hard_triplet(f.joint_bn, all_labels, cfg.triplet_margin);
        parts.aux = cfg.w_aux * lt.value;
        d_feat.axpy(cfg.w_aux, lt.grad);
      }

      double total = 0.0;
      try {
        total = loss::total_loss(parts, cfg.loss);
      } catch (const Error&) {
        throw diverged();
      }

      model.backward(d_feat, d_logits);
      if (cfg.grad_clip > 0) clip_gradients(model.parameters(), cfg.grad_clip);
      sgd.step(model.parameters(), stats.lr);
      model.clamp_gem_p(1.0);
      centers.update(f.joint_bn, all_labels, cfg.center_lr);

      for (int n = 0; n < f.logits.n(); ++n) {
        const double* row = f.logits.sample(n);
        int arg = 0;
        for (int c = 1; c < f.logits.c(); ++c) {
          if (row[c] > row[arg]) arg = c;
        }
        correct += arg == all_labels[n];
        ++seen;
      }
      stats.center += parts.center;
      stats.ce += parts.ce;
      stats.dc += parts.dc;
      stats.aux += parts.aux;
      stats.total += total;
    }

    const double steps = static_cast<double>(batches.size());
    stats.center /= steps;
    stats.ce /= steps;
    stats.dc /= steps;
    stats.aux /= steps;
    stats.total /= steps;
    stats.train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
    if (cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0 && e + 1 < cfg.epochs) {
      stats.recall1 = recall1(model, drone_imgs, drone_ids, sat_imgs, sat_ids);
    }

    if (stats.total < best_total) {
      best_total = stats.total;
      result.best_epoch = e + 1;
      save_checkpoint(model, result.best_checkpoint, {{"centers", centers.centers}});
    }
    if (e + 1 == cfg.epochs) {
      save_checkpoint(model, result.final_checkpoint, {{"centers", centers.centers}});
      result.final_train_recall1 = recall1(model, drone_imgs, drone_ids, sat_imgs, sat_ids);
      stats.recall1 = result.final_train_recall1;
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << metrics_row(stats) << '\n';
    metrics.flush();
    result.epochs.push_back(stats);
    if (progress) progress(stats);
  }

  std::ofstream kv(out / "train_recall.kv", std::ios::binary);
  kv << "recall@1=" << result.final_train_recall1 << "\nbest_epoch=" << result.best_epoch << '\n';
  return result;
}

}  // namespace uavgeo::train
