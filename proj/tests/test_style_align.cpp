#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "support/testing.hpp"
#include "uavgeo/error.hpp"
#include "uavgeo/style_align.hpp"

using namespace uavgeo;
using namespace uavgeo::style;

namespace {

ChannelHistogram brute_histogram(const RgbImage& img, Channel ch) {
  ChannelHistogram h;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) h.counts[img.at(x, y, static_cast<int>(ch))] += 1;
  }
  return h;
}

Lut random_monotone_lut(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<int> v(256);
  for (int& x : v) x = u(rng);
  std::sort(v.begin(), v.end());
  Lut lut;
  for (int i = 0; i < 256; ++i) lut[i] = static_cast<std::uint8_t>(v[i]);
  return lut;
}

ColorMapping random_monotone_mapping(std::mt19937_64& rng) {
  return {random_monotone_lut(rng), random_monotone_lut(rng), random_monotone_lut(rng)};
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "uavgeo_style_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(ChannelHistogram, ConstantImageHasOneSpike) {
  RgbImage img(2, 2, 0);
  const auto h = channel_histogram(img, Channel::R);
  EXPECT_EQ(h.counts[0], 4u);
  for (int v = 1; v < 256; ++v) EXPECT_EQ(h.counts[v], 0u);
}

TEST(ChannelHistogram, RampHitsEveryLevelOnce) {
  RgbImage img(256, 1);
  for (int x = 0; x < 256; ++x) img.at(x, 0, 0) = static_cast<std::uint8_t>(x);
  const auto h = channel_histogram(img, Channel::R);
  for (int v = 0; v < 256; ++v) EXPECT_EQ(h.counts[v], 1u);
}

TEST(ChannelHistogram, MatchesPerPixelTally) {
  std::mt19937_64 rng(11);
  const auto img = fixtures::random_image(rng, 16, 16);
  for (Channel ch : {Channel::R, Channel::G, Channel::B}) {
    const auto h = channel_histogram(img, ch);
    EXPECT_EQ(h, brute_histogram(img, ch));
    EXPECT_EQ(h.total(), 256u);
  }
}

TEST(ChannelHistogram, EmptyImageIsAnError) {
  try {
    channel_histogram(RgbImage{}, Channel::G);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty input");
  }
}

TEST(MappingFromHistogram, UniformHistogram) {
  ChannelHistogram h;
  h.counts.fill(3);
  const Lut lut = mapping_from_histogram(h);
  for (int x = 0; x < 256; ++x) {
    const int expected = static_cast<int>(std::floor((x + 1) / 256.0 * 255.0 + 0.5));
    EXPECT_EQ(lut[x], expected) << "level " << x;
  }
  EXPECT_EQ(lut[0], 1);
  EXPECT_EQ(lut[255], 255);
}

TEST(MappingFromHistogram, AllMassAtZero) {
  ChannelHistogram h;
  h.counts[0] = 100;
  const Lut lut = mapping_from_histogram(h);
  for (int x = 0; x < 256; ++x) EXPECT_EQ(lut[x], 255);
}

TEST(MappingFromHistogram, MassSplitBetweenExtremes) {
  ChannelHistogram h;
  h.counts[0] = 50;
  h.counts[255] = 50;
  const Lut lut = mapping_from_histogram(h);
  for (int x = 0; x < 255; ++x) EXPECT_EQ(lut[x], 128) << "level " << x;
  EXPECT_EQ(lut[255], 255);
}

TEST(MappingFromHistogram, EmptyHistogramIsAnError) {
  try {
    mapping_from_histogram(ChannelHistogram{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty histogram");
  }
}

TEST(MappingFromImage, ConstantGrayIsAStep) {
  RgbImage img(7, 5, 128);
  const auto m = mapping_from_image(img);
  for (Channel ch : {Channel::R, Channel::G, Channel::B}) {
    for (int x = 0; x < 256; ++x) EXPECT_EQ(m.channel(ch)[x], x < 128 ? 0 : 255) << x;
  }
}

TEST(MappingFromImage, UniformChannelsGiveNearIdentity) {
  // Every level appears exactly once per channel, with the channels shuffled independently.
  RgbImage img(256, 1);
  std::mt19937_64 rng(5);
  for (int c = 0; c < 3; ++c) {
    std::vector<int> levels(256);
    for (int i = 0; i < 256; ++i) levels[i] = i;
    std::shuffle(levels.begin(), levels.end(), rng);
    for (int x = 0; x < 256; ++x) img.at(x, 0, c) = static_cast<std::uint8_t>(levels[x]);
  }
  const auto m = mapping_from_image(img);
  for (Channel ch : {Channel::R, Channel::G, Channel::B}) {
    for (int x = 0; x < 256; ++x) {
      EXPECT_EQ(m.channel(ch)[x], static_cast<int>(std::floor((x + 1) * 255.0 / 256.0 + 0.5)));
      EXPECT_LE(std::abs(m.channel(ch)[x] - x), 1);
    }
  }
}

TEST(MappingFromImage, AlwaysMonotone) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    std::uniform_int_distribution<int> side(1, 40);
    auto img = fixtures::random_image(rng, side(rng), side(rng));
    // Skew the distribution so the curves are not all near-diagonal.
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(p * p / 255);
    EXPECT_TRUE(mapping_from_image(img).is_monotone());
  }
}

TEST(AverageMapping, CopiesOfOneMapping) {
  std::mt19937_64 rng(9);
  const auto m = random_monotone_mapping(rng);
  std::vector<ColorMapping> copies(5, m);
  EXPECT_EQ(average_mapping(copies), m);
}

TEST(AverageMapping, HalfRoundsUp) {
  ColorMapping a = ColorMapping::identity(), b = ColorMapping::identity();
  a.r[10] = 100;
  b.r[10] = 101;
  a.r[9] = b.r[9] = 9;
  for (int x = 10; x < 256; ++x) {
    a.r[x] = std::max<int>(a.r[x], 100);
    b.r[x] = std::max<int>(b.r[x], 101);
  }
  std::vector<ColorMapping> ms{a, b};
  EXPECT_EQ(average_mapping(ms).r[10], 101);
}

TEST(AverageMapping, MatchesSumOverNOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ColorMapping> ms;
    const int n = 1 + trial % 9;
    for (int i = 0; i < n; ++i) ms.push_back(mapping_from_image(fixtures::random_image(rng, 12, 9)));
    const auto avg = average_mapping(ms);
    for (Channel ch : {Channel::R, Channel::G, Channel::B}) {
      for (int x = 0; x < 256; ++x) {
        long sum = 0;
        for (const auto& m : ms) sum += m.channel(ch)[x];
        const long expected = std::min(255L, static_cast<long>(std::floor(static_cast<double>(sum) / n + 0.5)));
        EXPECT_EQ(avg.channel(ch)[x], expected);
      }
    }
    EXPECT_TRUE(avg.is_monotone());
    std::reverse(ms.begin(), ms.end());
    EXPECT_EQ(average_mapping(ms), avg);
  }
}

TEST(AverageMapping, EmptySequenceIsAnError) {
  try {
    average_mapping({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no satellite mappings");
  }
}

TEST(PooledMapping, SingleImageMatchesPerImageMapping) {
  std::mt19937_64 rng(4);
  const auto img = fixtures::random_image(rng, 9, 13);
  const std::vector<RgbImage> one{img};
  EXPECT_EQ(pooled_mapping(one), mapping_from_image(img));
}

TEST(ApplyMapping, IdentityLeavesImageUnchanged) {
  std::mt19937_64 rng(8);
  const auto img = fixtures::random_image(rng, 10, 6);
  EXPECT_EQ(apply_mapping(img, ColorMapping::identity()), img);
  EXPECT_EQ(apply_mapping(apply_mapping(img, ColorMapping::identity()), ColorMapping::identity()), img);
}

TEST(ApplyMapping, ConstantLutGivesWhite) {
  std::mt19937_64 rng(8);
  const auto img = fixtures::random_image(rng, 10, 6);
  ColorMapping white;
  white.r.fill(255);
  white.g.fill(255);
  white.b.fill(255);
  const auto out = apply_mapping(img, white);
  EXPECT_EQ(out.width, img.width);
  EXPECT_EQ(out.height, img.height);
  for (auto p : out.pixels) EXPECT_EQ(p, 255);
}

TEST(ApplyMapping, MatchesPerPixelLookupAndPreservesOrder) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = fixtures::random_image(rng, 17, 11);
    const auto m = random_monotone_mapping(rng);
    const auto out = apply_mapping(img, m);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(out.at(x, y, c), m.channel(static_cast<Channel>(c))[img.at(x, y, c)]);
      }
    }
    for (std::size_t i = 0; i + 3 < img.pixels.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        if (img.pixels[i + c] <= img.pixels[i + 3 + c]) EXPECT_LE(out.pixels[i + c], out.pixels[i + 3 + c]);
      }
    }
  }
}

TEST(ApplyMapping, RejectsNonMonotoneMapping) {
  auto m = ColorMapping::identity();
  m.g[3] = 200;
  EXPECT_THROW(apply_mapping(RgbImage(2, 2, 1), m), Error);
}

TEST(MappingFile, RoundTripIsExact) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 10; ++i) {
    const auto m = random_monotone_mapping(rng);
    const auto path = temp_path("roundtrip.txt");
    save_mapping(m, path);
    EXPECT_EQ(load_mapping(path), m);
  }
}

TEST(MappingFile, SavingTwiceIsByteIdentical) {
  std::mt19937_64 rng(32);
  const auto m = random_monotone_mapping(rng);
  EXPECT_EQ(format_mapping(m), format_mapping(parse_mapping(format_mapping(m))));
}

namespace {

std::string identity_line(char label, int count = 256) {
  std::string s(1, label);
  s += ":";
  for (int i = 0; i < count; ++i) s += (i ? "," : " ") + std::to_string(std::min(i, 255));
  return s + "\n";
}

std::string parse_error_of(const std::string& text) {
  try {
    parse_mapping(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(MappingFile, ShortChannelNamesTheLine) {
  const auto msg = parse_error_of(identity_line('R') + identity_line('G', 255) + identity_line('B'));
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("255"), std::string::npos) << msg;
}

TEST(MappingFile, OutOfRangeEntry) {
  std::string b = identity_line('B');
  b.replace(b.rfind("255"), 3, "256");
  const auto msg = parse_error_of(identity_line('R') + identity_line('G') + b);
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("range"), std::string::npos) << msg;
}

TEST(MappingFile, NonMonotoneEntry) {
  std::string r = identity_line('R');
  r.replace(r.find(" 0,1,2,"), 7, " 0,9,2,");
  const auto msg = parse_error_of(r + identity_line('G') + identity_line('B'));
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("monotone"), std::string::npos) << msg;
}

TEST(MappingFile, MissingOrDuplicateChannel) {
  EXPECT_FALSE(parse_error_of(identity_line('R') + identity_line('G')).empty());
  EXPECT_FALSE(parse_error_of(identity_line('R') + identity_line('R') + identity_line('B')).empty());
}

TEST(CdfGap, IdenticalSetsHaveZeroGap) {
  std::mt19937_64 rng(2);
  std::vector<RgbImage> a{fixtures::random_image(rng, 8, 8), fixtures::random_image(rng, 5, 9)};
  for (Channel ch : {Channel::R, Channel::G, Channel::B}) {
    EXPECT_EQ(max_cdf_gap(aggregate_cdf(a, ch), aggregate_cdf(a, ch)), 0.0);
    EXPECT_NEAR(aggregate_cdf(a, ch)[255], 1.0, 1e-12);
  }
}
