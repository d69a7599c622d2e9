#include "uavgeo/style_align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uavgeo/error.hpp"

namespace uavgeo::style {

std::uint64_t ChannelHistogram::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

ChannelHistogram& ChannelHistogram::operator+=(const ChannelHistogram& other) {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

const Lut& ColorMapping::channel(Channel c) const {
  switch (c) {
    case Channel::R: return r;
    case Channel::G: return g;
    default: return b;
  }
}

Lut& ColorMapping::channel(Channel c) {
  return const_cast<Lut&>(std::as_const(*this).channel(c));
}

bool ColorMapping::is_monotone() const {
  for (const Lut* lut : {&r, &g, &b}) {
    if (!std::is_sorted(lut->begin(), lut->end())) return false;
  }
  return true;
}

ColorMapping ColorMapping::identity() {
  ColorMapping m;
  for (int x = 0; x < 256; ++x) m.r[x] = m.g[x] = m.b[x] = static_cast<std::uint8_t>(x);
  return m;
}

ChannelHistogram channel_histogram(const RgbImage& image, Channel channel) {
  if (image.empty()) throw Error("empty input");
  ChannelHistogram h;
  const int c = static_cast<int>(channel);
  for (std::size_t p = 0; p < image.pixel_count(); ++p) ++h.counts[image.pixels[p * 3 + c]];
  return h;
}

Lut mapping_from_histogram(const ChannelHistogram& hist) {
  const std::uint64_t total = hist.total();
  if (total == 0) throw Error("empty histogram");
  Lut lut{};
  std::uint64_t cum = 0;
  for (int x = 0; x < 256; ++x) {
    cum += hist.counts[x];
    const double cdf = static_cast<double>(cum) / static_cast<double>(total);
    const double level = std::min(255.0, cdf * 255.0 + 0.5);
    lut[x] = static_cast<std::uint8_t>(std::floor(level));
  }
  return lut;
}

ColorMapping mapping_from_image(const RgbImage& image) {
  ColorMapping m;
  for (Channel c : {Channel::R, Channel::G, Channel::B}) {
    m.channel(c) = mapping_from_histogram(channel_histogram(image, c));
  }
  return m;
}

ColorMapping average_mapping(std::span<const ColorMapping> mappings) {
  if (mappings.empty()) throw Error("no satellite mappings");
  const std::uint64_t n = mappings.size();
  ColorMapping out;
  for (Channel c : {Channel::R, Channel::G, Channel::B}) {
    std::array<std::uint64_t, 256> sum{};
    for (const auto& m : mappings) {
      const Lut& lut = m.channel(c);
      for (int x = 0; x < 256; ++x) sum[x] += lut[x];
    }
    // floor(sum / n + 1/2) == floor((2 sum + n) / 2n), exact in integers.
    Lut& dst = out.channel(c);
    for (int x = 0; x < 256; ++x) {
      dst[x] = static_cast<std::uint8_t>(std::min<std::uint64_t>(255, (2 * sum[x] + n) / (2 * n)));
    }
  }
  return out;
}

ColorMapping pooled_mapping(std::span<const RgbImage> images) {
  if (images.empty()) throw Error("no satellite mappings");
  ColorMapping out;
  for (Channel c : {Channel::R, Channel::G, Channel::B}) {
    ChannelHistogram pooled;
    for (const auto& img : images) pooled += channel_histogram(img, c);
    out.channel(c) = mapping_from_histogram(pooled);
  }
  return out;
}

RgbImage apply_mapping(const RgbImage& image, const ColorMapping& mapping) {
  if (image.empty()) throw Error("empty input");
  if (!mapping.is_monotone()) throw Error("colour mapping is not monotone");
  RgbImage out = image;
  const Lut* luts[3] = {&mapping.r, &mapping.g, &mapping.b};
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = (*luts[i % 3])[out.pixels[i]];
  return out;
}

std::string format_mapping(const ColorMapping& mapping) {
  std::ostringstream os;
  const char* labels[3] = {"R", "G", "B"};
  for (int c = 0; c < 3; ++c) {
    const Lut& lut = mapping.channel(static_cast<Channel>(c));
    os << labels[c] << ':';
    for (int x = 0; x < 256; ++x) os << (x ? "," : " ") << static_cast<int>(lut[x]);
    os << '\n';
  }
  return os.str();
}

ColorMapping parse_mapping(const std::string& text) {
  ColorMapping m;
  bool seen[3] = {false, false, false};
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fail = [&](const std::string& what) -> ParseError {
      return ParseError("mapping line " + std::to_string(lineno) + ": " + what);
    };
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw fail("expected '<R|G|B>: v0,...,v255'");
    std::string label = line.substr(0, colon);
    label.erase(std::remove_if(label.begin(), label.end(), ::isspace), label.end());
    int ch = label == "R" ? 0 : label == "G" ? 1 : label == "B" ? 2 : -1;
    if (ch < 0) throw fail("unknown channel label '" + label + "'");
    if (seen[ch]) throw fail("duplicate channel " + label);
    seen[ch] = true;

    std::vector<long> values;
    std::istringstream fields(line.substr(colon + 1));
    std::string field;
    while (std::getline(fields, field, ',')) {
      std::size_t used = 0;
      long v = 0;
      try {
        v = std::stol(field, &used);
      } catch (const std::exception&) {
        throw fail("non-integer entry '" + field + "'");
      }
      if (field.find_first_not_of(" \t", used) != std::string::npos) throw fail("non-integer entry '" + field + "'");
      if (v < 0 || v > 255) throw fail("entry " + std::to_string(v) + " out of range [0,255]");
      values.push_back(v);
    }
    if (values.size() != 256) throw fail("expected 256 entries, got " + std::to_string(values.size()));
    Lut& lut = m.channel(static_cast<Channel>(ch));
    for (int x = 0; x < 256; ++x) {
      if (x > 0 && values[x] < values[x - 1]) throw fail("channel " + label + " is not monotone at level " + std::to_string(x));
      lut[x] = static_cast<std::uint8_t>(values[x]);
    }
  }
  for (int c = 0; c < 3; ++c) {
    if (!seen[c]) throw ParseError(std::string("mapping is missing channel ") + "RGB"[c]);
  }
  return m;
}

void save_mapping(const ColorMapping& mapping, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << format_mapping(mapping);
  if (!os) throw Error("cannot write " + path.string());
}

ColorMapping load_mapping(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_mapping(buf.str());
}

std::array<double, 256> aggregate_cdf(std::span<const RgbImage> images, Channel channel) {
  ChannelHistogram pooled;
  for (const auto& img : images) pooled += channel_histogram(img, channel);
  const double total = static_cast<double>(pooled.total());
  if (total == 0) throw Error("empty histogram");
  std::array<double, 256> cdf{};
  std::uint64_t cum = 0;
  for (int x = 0; x < 256; ++x) {
    cum += pooled.counts[x];
    cdf[x] = static_cast<double>(cum) / total;
  }
  return cdf;
}

double max_cdf_gap(const std::array<double, 256>& a, const std::array<double, 256>& b) {
  double gap = 0;
  for (int x = 0; x < 256; ++x) gap = std::max(gap, std::abs(a[x] - b[x]));
  return gap;
}

}  // namespace uavgeo::style
