#include "mmjsd/data.hpp"
#include "mmjsd/evalsuite.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace mmjsd;

namespace {

DatasetConfig small(std::size_t n, std::uint64_t seed = 3) {
  DatasetConfig c;
  c.num_samples = n;
  c.seed = seed;
  return c;
}

DatasetConfig clean(std::size_t n) {
  auto c = small(n);
  c.noise_std_a = c.noise_std_b = 0.0;
  c.jitter = false;
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mmjsd_data_test_" + name);
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Templates, PairwiseDistinctUnderShifts) {
  for (std::size_t a = 0; a < kMaxClasses; ++a)
    for (std::size_t b = a + 1; b < kMaxClasses; ++b) {
      int best = 1 << 20;
      for (int dxa = -kJitter; dxa <= kJitter; ++dxa)
        for (int dya = -kJitter; dya <= kJitter; ++dya)
          for (int dxb = -kJitter; dxb <= kJitter; ++dxb)
            for (int dyb = -kJitter; dyb <= kJitter; ++dyb) {
              const auto ta = shifted_template(a, dxa, dya), tb = shifted_template(b, dxb, dyb);
              int diff = 0;
              for (std::size_t p = 0; p < kGlyphPixels; ++p) diff += ta[p] != tb[p];
              best = std::min(best, diff);
            }
      EXPECT_GE(best, 4) << a << " vs " << b;
    }
}

TEST(Templates, BorderIsEmpty) {
  for (std::size_t k = 0; k < kMaxClasses; ++k) {
    const auto t = glyph_template(k);
    for (std::size_t i = 0; i < kGlyphSide; ++i) {
      EXPECT_EQ(t[i], 0.0f);
      EXPECT_EQ(t[(kGlyphSide - 1) * kGlyphSide + i], 0.0f);
      EXPECT_EQ(t[i * kGlyphSide], 0.0f);
      EXPECT_EQ(t[i * kGlyphSide + kGlyphSide - 1], 0.0f);
    }
  }
}

TEST(Dataset, Deterministic) {
  EXPECT_EQ(generate_dataset(small(50)), generate_dataset(small(50)));
  EXPECT_FALSE(generate_dataset(small(50, 1)) == generate_dataset(small(50, 2)));
}

TEST(Dataset, SampleDependsOnlyOnItsIndex) {
  const auto full = generate_dataset(small(40));
  const auto cfg = small(40);
  for (std::size_t i : {0u, 17u, 39u}) {
    const auto s = render_sample(cfg, i);
    const auto t = full.sample(i);
    EXPECT_EQ(s.mod_a, t.mod_a);
    EXPECT_EQ(s.mod_b, t.mod_b);
    EXPECT_EQ(s.mod_c, t.mod_c);
  }
}

TEST(Dataset, CleanGlyphEqualsTemplate) {
  const auto d = generate_dataset(clean(20));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto t = glyph_template(static_cast<std::size_t>(d.labels[i]));
    for (std::size_t p = 0; p < kGlyphPixels; ++p) ASSERT_EQ(d.mod_a(i, p), t[p]);
  }
}

TEST(Dataset, ClassCountsBalanced) {
  const auto d = generate_dataset(small(10000));
  std::map<int, int> counts;
  for (int l : d.labels) ++counts[l];
  ASSERT_EQ(counts.size(), 10u);
  for (auto [k, c] : counts) {
    EXPECT_GE(c, 950);
    EXPECT_LE(c, 1050);
  }
}

TEST(Dataset, ValuesInUnitRangeAndOneHotRows) {
  const auto d = generate_dataset(small(300));
  for (float v : d.mod_a.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  for (float v : d.mod_b.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t pos = 0; pos < d.text_length; ++pos) {
      float sum = 0.0f;
      for (std::size_t a = 0; a < d.alphabet; ++a) {
        const float v = d.mod_c(i, pos * d.alphabet + a);
        ASSERT_TRUE(v == 0.0f || v == 1.0f);
        sum += v;
      }
      ASSERT_EQ(sum, 1.0f);
    }
}

TEST(Dataset, TextStartVaries) {
  const auto d = generate_dataset(small(200));
  std::set<std::size_t> starts;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto text = decode_text(d.mod_c.row(i), d.alphabet);
    starts.insert(text.find_first_not_of(' '));
  }
  EXPECT_GE(starts.size(), 4u);
}

TEST(Dataset, RejectsShortText) {
  auto c = small(10);
  c.text_length = 4;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c.text_length = 5;
  EXPECT_NO_THROW(generate_dataset(c));
  c.num_samples = 0;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
}

TEST(Dataset, OracleExactOnCleanData) {
  auto c = small(500);
  c.noise_std_a = c.noise_std_b = 0.0;
  const auto d = generate_dataset(c);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(oracle_accuracy(oracle_for(j), d.modality(j), d.labels), 1.0) << j;
}

TEST(Container, RoundTripIsBitwise) {
  const auto d = generate_dataset(small(100));
  const auto p = temp_file("roundtrip.mmds");
  save_dataset(p.string(), d);
  EXPECT_EQ(load_dataset(p.string()), d);
  const auto bytes = read_bytes(p);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MMDS");
  save_dataset(p.string(), load_dataset(p.string()));
  EXPECT_EQ(read_bytes(p), bytes);
  std::filesystem::remove(p);
}

TEST(Container, CorruptMagic) {
  const auto p = temp_file("magic.mmds");
  save_dataset(p.string(), generate_dataset(small(5)));
  auto b = read_bytes(p);
  b[0] = 'X';
  write_bytes(p, b);
  EXPECT_THROW(load_dataset(p.string()), ContainerError);
  std::filesystem::remove(p);
}

TEST(Container, UnsupportedVersion) {
  const auto p = temp_file("version.mmds");
  save_dataset(p.string(), generate_dataset(small(5)));
  auto b = read_bytes(p);
  b[4] = 2;
  write_bytes(p, b);
  EXPECT_THROW(load_dataset(p.string()), UnsupportedVersion);
  std::filesystem::remove(p);
}

TEST(Container, TruncatedAndTrailing) {
  const auto p = temp_file("trunc.mmds");
  save_dataset(p.string(), generate_dataset(small(5)));
  const auto b = read_bytes(p);
  for (std::size_t cut : {std::size_t{3}, std::size_t{12}, std::size_t{40}, b.size() - 1}) {
    write_bytes(p, std::vector<char>(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_THROW(load_dataset(p.string()), ContainerError) << cut;
  }
  auto longer = b;
  longer.push_back(0);
  write_bytes(p, longer);
  EXPECT_THROW(load_dataset(p.string()), ContainerError);
  std::filesystem::remove(p);
  EXPECT_THROW(load_dataset(p.string()), ContainerError);
}

TEST(Container, CheckpointMagicRejectedAsDataset) {
  Container c(kCheckpointMagic);
  c.add("w", Tensor<float>({2}, std::vector<float>{1.0f, 2.0f}));
  EXPECT_THROW(Container::parse(c.serialize(), kDatasetMagic), ContainerError);
  const auto back = Container::parse(c.serialize(), kCheckpointMagic);
  EXPECT_EQ(back.at("w").as_f32(), c.at("w").as_f32());
}

TEST(Batches, SizesIncludePartial) {
  const auto d = generate_dataset(small(10));
  const auto bs = batches(d, 3, 7);
  ASSERT_EQ(bs.size(), 4u);
  EXPECT_EQ(bs[0].size(), 3u);
  EXPECT_EQ(bs[1].size(), 3u);
  EXPECT_EQ(bs[2].size(), 3u);
  EXPECT_EQ(bs[3].size(), 1u);
}

TEST(Batches, SeededOrder) {
  EXPECT_EQ(epoch_batches(100, 8, 5, 0), epoch_batches(100, 8, 5, 0));
  EXPECT_NE(epoch_batches(100, 8, 5, 0), epoch_batches(100, 8, 6, 0));
  EXPECT_NE(epoch_batches(100, 8, 5, 0), epoch_batches(100, 8, 5, 1));
}

TEST(Batches, LabelMultisetPreserved) {
  const auto d = generate_dataset(small(37));
  std::vector<int> seen;
  for (const auto& b : batches(d, 5, 11)) {
    ASSERT_TRUE(b.complete());
    seen.insert(seen.end(), b.labels.begin(), b.labels.end());
  }
  auto want = d.labels;
  std::sort(seen.begin(), seen.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(seen, want);
}

TEST(Batches, RowsMatchDataset) {
  const auto d = generate_dataset(small(12));
  const std::vector<std::size_t> idx{4, 0, 9};
  const auto b = make_batch<double>(d, idx);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < d.modality(j).cols(); ++c)
        ASSERT_EQ(b.data[j](r, c), static_cast<double>(d.modality(j)(idx[r], c)));
  EXPECT_EQ(b.labels, (std::vector<int>{d.labels[4], d.labels[0], d.labels[9]}));
}

TEST(Batches, Errors) {
  EXPECT_THROW(epoch_batches(0, 4, 0, 0), std::invalid_argument);
  EXPECT_THROW(epoch_batches(4, 0, 0, 0), std::invalid_argument);
}

TEST(Specs, MatchDatasetWidths) {
  const auto d = generate_dataset(small(3));
  const auto specs = trimodal_specs(d.text_length);
  ASSERT_EQ(specs.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(specs[j].element_count, d.modality(j).cols());
}
