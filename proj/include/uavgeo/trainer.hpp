#pragma once

// Joint drone/satellite training loop and train-set retrieval check.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "uavgeo/config.hpp"
#include "uavgeo/data.hpp"
#include "uavgeo/network.hpp"

namespace uavgeo::train {

struct EpochStats {
  int epoch = 0;  ///< 1-based
  double lr = 0.0;
  double center = 0.0;  ///< unweighted, averaged over steps
  double ce = 0.0;
  double dc = 0.0;
  double aux = 0.0;
  double total = 0.0;   ///< weighted
  double train_acc = 0.0;  ///< classifier accuracy on the training batches
  double recall1 = -1.0;   ///< train-set drone->satellite R@1 when evaluated, else -1
  double seconds = 0.0;
};

/// CSV header row of the metrics log.
std::string metrics_header();
std::string metrics_row(const EpochStats& s);

struct TrainResult {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double final_train_recall1 = 0.0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
};

using ProgressFn = std::function<void(const EpochStats&)>;

/// Trains on <data_root>/train and writes config.txt, metrics.csv, best.ckpt,
/// final.ckpt and train_recall.kv into cfg.out_dir.
TrainResult run_training(const config::RunConfig& cfg, const ProgressFn& progress = {});

/// Drone->satellite R@1 of `model` over a manifest's own images.
double manifest_recall1(net::Model& model, const data::DatasetManifest& manifest);

/// Crop-and-flip augmentation followed by resize to `size` and normalisation; planar 3 x size x size.
std::vector<double> augment_image(const RgbImage& image, int size, std::mt19937_64& rng);

}  // namespace uavgeo::train
