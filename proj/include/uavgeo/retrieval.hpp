#pragma once

// Euclidean query-to-gallery matching with Recall@K and average precision.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace uavgeo::retrieval {

enum class View { Drone, Satellite };
enum class Direction { DroneToSatellite, SatelliteToDrone };

std::string to_string(View v);
std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);
View query_view(Direction d);
View gallery_view(Direction d);

struct GalleryIndex {
  std::vector<std::vector<double>> descriptors;
  std::vector<std::string> ids;  ///< geo-tag per entry
  std::vector<View> views;

  void add(std::vector<double> descriptor, std::string id, View view);
  std::size_t size() const { return descriptors.size(); }
  std::size_t dim() const { return descriptors.empty() ? 0 : descriptors.front().size(); }
};

struct RankedEntry {
  int index = 0;
  double distance = 0.0;
};

/// Gallery sorted by ascending L2 distance; ties keep gallery order.
std::vector<RankedEntry> rank_gallery(std::span<const double> query, const GalleryIndex& index);

/// Fraction of queries whose first true match is at rank <= k (ranks are 1-based).
double recall_at_k(std::span<const int> ranks, int k);

/// Mean over relevant positions of precision at that position.
double average_precision(const std::vector<bool>& relevance);

struct QueryResult {
  std::string id;
  int first_match_rank = 0;  ///< 1-based; 0 when excluded
  double ap = 0.0;
  bool excluded = false;
};

struct RetrievalReport {
  Direction direction = Direction::DroneToSatellite;
  std::size_t gallery_size = 0;
  std::vector<QueryResult> queries;
  std::map<int, double> recall_at;  ///< K -> fraction
  int top1percent_k = 1;
  double recall_top1percent = 0.0;
  double ap_mean = 0.0;
  int excluded = 0;

  int evaluated() const { return static_cast<int>(queries.size()) - excluded; }
};

/// ceil(1% of the gallery), at least 1.
int top1percent_k(std::size_t gallery_size);

/// Queries without any same-id gallery entry are excluded and counted.
RetrievalReport evaluate(const std::vector<std::vector<double>>& query_descriptors, const std::vector<std::string>& query_ids,
                         const GalleryIndex& gallery, Direction direction, const std::vector<int>& ks = {1, 5, 10});

/// Human-readable table.
std::string format_report(const RetrievalReport& report);
/// `key=value` lines: recall@1, recall@5, recall@10, recall@top1percent, ap, plus counts.
std::string format_report_kv(const RetrievalReport& report);
/// Writes report.txt, report.kv and ranks.tsv into `dir`.
void write_report(const RetrievalReport& report, const std::filesystem::path& dir, const std::vector<std::string>& query_names = {});

}  // namespace uavgeo::retrieval
