#include "uavgeo/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "uavgeo/error.hpp"

namespace uavgeo::retrieval {

std::string to_string(View v) { return v == View::Drone ? "drone" : "satellite"; }

std::string to_string(Direction d) { return d == Direction::DroneToSatellite ? "drone->satellite" : "satellite->drone"; }

Direction direction_from_string(const std::string& s) {
  if (s == "drone2sat" || s == "drone->satellite" || s == "d2s") return Direction::DroneToSatellite;
  if (s == "sat2drone" || s == "satellite->drone" || s == "s2d") return Direction::SatelliteToDrone;
  throw ConfigError("direction must be drone2sat or sat2drone, got '" + s + "'");
}

View query_view(Direction d) { return d == Direction::DroneToSatellite ? View::Drone : View::Satellite; }
View gallery_view(Direction d) { return d == Direction::DroneToSatellite ? View::Satellite : View::Drone; }

void GalleryIndex::add(std::vector<double> descriptor, std::string id, View view) {
  if (!descriptors.empty() && descriptor.size() != dim()) throw Error("gallery descriptor dimension mismatch");
  descriptors.push_back(std::move(descriptor));
  ids.push_back(std::move(id));
  views.push_back(view);
}

std::vector<RankedEntry> rank_gallery(std::span<const double> query, const GalleryIndex& index) {
  if (index.size() == 0) throw Error("empty gallery");
  if (query.size() != index.dim()) {
    throw Error("descriptor dimension mismatch: query " + std::to_string(query.size()) + ", gallery " + std::to_string(index.dim()));
  }
  std::vector<RankedEntry> ranked(index.size());
  for (std::size_t g = 0; g < index.size(); ++g) {
    const auto& d = index.descriptors[g];
    double s = 0;
    for (std::size_t k = 0; k < d.size(); ++k) s += (query[k] - d[k]) * (query[k] - d[k]);
    ranked[g] = {static_cast<int>(g), std::sqrt(s)};
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedEntry& a, const RankedEntry& b) { return a.distance < b.distance; });
  return ranked;
}

double recall_at_k(std::span<const int> ranks, int k) {
  if (k < 1) throw Error("K must be >= 1");
  if (ranks.empty()) throw Error("no queries");
  std::size_t hits = 0;
  for (int r : ranks) {
    if (r < 1) throw Error("ranks are 1-based");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double average_precision(const std::vector<bool>& relevance) {
  double sum = 0;
  int found = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(i + 1);
  }
  if (found == 0) throw Error("no ground truth in gallery");
  return sum / found;
}

int top1percent_k(std::size_t gallery_size) {
  return std::max(1, static_cast<int>((gallery_size + 99) / 100));
}

RetrievalReport evaluate(const std::vector<std::vector<double>>& query_descriptors, const std::vector<std::string>& query_ids,
                         const GalleryIndex& gallery, Direction direction, const std::vector<int>& ks) {
  if (query_descriptors.empty()) throw Error("no queries");
  if (query_descriptors.size() != query_ids.size()) throw Error("query id count mismatch");
  for (View v : gallery.views) {
    if (v != gallery_view(direction)) throw Error("gallery view does not match direction " + to_string(direction));
  }

  RetrievalReport report;
  report.direction = direction;
  report.gallery_size = gallery.size();
  report.top1percent_k = top1percent_k(gallery.size());

  std::vector<int> ranks;
  double ap_sum = 0;
  for (std::size_t q = 0; q < query_descriptors.size(); ++q) {
    QueryResult res;
    res.id = query_ids[q];
    const auto ranked = rank_gallery(query_descriptors[q], gallery);
    std::vector<bool> relevance(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) relevance[i] = gallery.ids[ranked[i].index] == res.id;
    const auto first = std::find(relevance.begin(), relevance.end(), true);
    if (first == relevance.end()) {
      res.excluded = true;
      ++report.excluded;
    } else {
      res.first_match_rank = static_cast<int>(first - relevance.begin()) + 1;
      res.ap = average_precision(relevance);
      ranks.push_back(res.first_match_rank);
      ap_sum += res.ap;
    }
    report.queries.push_back(std::move(res));
  }
  if (ranks.empty()) throw Error("no ground truth in gallery for any query");

  for (int k : ks) report.recall_at[k] = recall_at_k(ranks, k);
  report.recall_top1percent = recall_at_k(ranks, report.top1percent_k);
  report.ap_mean = ap_sum / static_cast<double>(ranks.size());
  return report;
}

std::string format_report(const RetrievalReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "direction      " << to_string(report.direction) << '\n';
  os << "queries        " << report.evaluated() << " (excluded " << report.excluded << ")\n";
  os << "gallery        " << report.gallery_size << '\n';
  for (const auto& [k, v] : report.recall_at) os << "Recall@" << std::left << std::setw(7) << k << std::right << 100.0 * v << '\n';
  os << "Recall@top1%   " << 100.0 * report.recall_top1percent << "  (K=" << report.top1percent_k << ")\n";
  os << "AP             " << 100.0 * report.ap_mean << '\n';
  return os.str();
}

std::string format_report_kv(const RetrievalReport& report) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (const auto& [k, v] : report.recall_at) os << "recall@" << k << '=' << v << '\n';
  os << "recall@top1percent=" << report.recall_top1percent << '\n';
  os << "ap=" << report.ap_mean << '\n';
  os << "queries=" << report.evaluated() << '\n';
  os << "excluded=" << report.excluded << '\n';
  os << "gallery=" << report.gallery_size << '\n';
  os << "direction=" << (report.direction == Direction::DroneToSatellite ? "drone2sat" : "sat2drone") << '\n';
  return os.str();
}

void write_report(const RetrievalReport& report, const std::filesystem::path& dir, const std::vector<std::string>& query_names) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw Error("cannot write " + (dir / name).string());
    os << content;
  };
  write("report.txt", format_report(report));
  write("report.kv", format_report_kv(report));
  std::ostringstream ranks;
  ranks << "query\tid\tfirst_match_rank\tap\n";
  for (std::size_t q = 0; q < report.queries.size(); ++q) {
    const auto& r = report.queries[q];
    ranks << (q < query_names.size() ? query_names[q] : std::to_string(q)) << '\t' << r.id << '\t';
    if (r.excluded) {
      ranks << "excluded\t-\n";
    } else {
      ranks << r.first_match_rank << '\t' << std::setprecision(6) << r.ap << '\n';
    }
  }
  write("ranks.tsv", ranks.str());
}

}  // namespace uavgeo::retrieval
