#pragma once

// Synthetic trimodal dataset. One class id is rendered three ways:
//   mod_a  8x8 grayscale glyph, +-1 px jitter, additive noise
//   mod_b  3x8x8 glyph in a random foreground colour over a random background
//   mod_c  one-hot text of length L holding the class word at a random start
// Sample i draws only from the stream derive_seed(seed, i).

#include "mmjsd/container.hpp"
#include "mmjsd/modality.hpp"
#include "mmjsd/rng.hpp"
#include "mmjsd/tensor.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmjsd {

inline constexpr std::size_t kGlyphSide = 8;
inline constexpr std::size_t kGlyphPixels = kGlyphSide * kGlyphSide;
inline constexpr std::size_t kColorChannels = 3;
inline constexpr std::size_t kMaxClasses = 10;
inline constexpr int kJitter = 1;

/// Digit-like glyphs; the outer ring is empty so +-1 px shifts never clip ink.
inline constexpr std::array<std::string_view, kMaxClasses> kGlyphRows{
    "........"
    "..####.."
    ".#....#."
    ".#....#."
    ".#....#."
    ".#....#."
    "..####.."
    "........",

    "........"
    "...##..."
    "..###..."
    "...##..."
    "...##..."
    "...##..."
    "..####.."
    "........",

    "........"
    "..####.."
    ".#....#."
    ".....#.."
    "...##..."
    "..#....."
    ".######."
    "........",

    "........"
    ".#####.."
    "......#."
    "...###.."
    "......#."
    "......#."
    ".#####.."
    "........",

    "........"
    ".#...#.."
    ".#...#.."
    ".######."
    ".....#.."
    ".....#.."
    ".....#.."
    "........",

    "........"
    ".######."
    ".#......"
    ".#####.."
    "......#."
    "......#."
    ".#####.."
    "........",

    "........"
    "...###.."
    "..#....."
    ".#####.."
    ".#....#."
    ".#....#."
    "..####.."
    "........",

    "........"
    ".######."
    "......#."
    ".....#.."
    "....#..."
    "...#...."
    "...#...."
    "........",

    "........"
    "..####.."
    ".#....#."
    "..####.."
    ".#....#."
    ".#....#."
    "..####.."
    "........",

    "........"
    "..####.."
    ".#....#."
    ".#....#."
    "..#####."
    "......#."
    "..####.."
    "........",
};

inline constexpr std::array<std::string_view, kMaxClasses> kClassWords{"zero", "one", "two",   "three", "four",
                                                                        "five", "six", "seven", "eight", "nine"};

/// Text symbols: 0 is blank, 1..26 are 'a'..'z'.
inline constexpr std::size_t kAlphabet = 27;

inline std::size_t symbol_of(char c) { return c == ' ' ? 0 : static_cast<std::size_t>(c - 'a' + 1); }
inline char char_of(std::size_t s) { return s == 0 ? ' ' : static_cast<char>('a' + s - 1); }

/// Template k as 64 values in {0, 1}.
inline std::array<float, kGlyphPixels> glyph_template(std::size_t k) {
  std::array<float, kGlyphPixels> g{};
  for (std::size_t i = 0; i < kGlyphPixels; ++i) g[i] = kGlyphRows.at(k)[i] == '#' ? 1.0f : 0.0f;
  return g;
}

/// Template k shifted by (dx, dy); pixels shifted in from outside are 0.
inline std::array<float, kGlyphPixels> shifted_template(std::size_t k, int dx, int dy) {
  const auto g = glyph_template(k);
  std::array<float, kGlyphPixels> out{};
  const int side = static_cast<int>(kGlyphSide);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const int sx = x - dx, sy = y - dy;
      if (sx >= 0 && sx < side && sy >= 0 && sy < side)
        out[static_cast<std::size_t>(y * side + x)] = g[static_cast<std::size_t>(sy * side + sx)];
    }
  return out;
}

struct DatasetConfig {
  std::size_t num_samples = 10000;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;
  double noise_std_a = 0.1;
  double noise_std_b = 0.1;
  std::size_t text_length = 8;
  std::size_t alphabet = kAlphabet;
  bool jitter = true;

  void validate() const {
    if (num_samples == 0) throw std::invalid_argument("dataset: num_samples must be >= 1");
    if (num_classes == 0 || num_classes > kMaxClasses)
      throw std::invalid_argument("dataset: num_classes must be in [1, " + std::to_string(kMaxClasses) + "]");
    if (!(noise_std_a >= 0.0) || !(noise_std_b >= 0.0)) throw std::invalid_argument("dataset: noise_std must be >= 0");
    if (alphabet != kAlphabet) throw std::invalid_argument("dataset: alphabet must be 27 (blank + 26 letters)");
    std::size_t longest = 0;
    for (std::size_t k = 0; k < num_classes; ++k) longest = std::max(longest, kClassWords[k].size());
    if (text_length < longest)
      throw std::invalid_argument("dataset: text_length " + std::to_string(text_length) +
                                  " is shorter than the longest class word (" + std::to_string(longest) + ")");
  }
};

/// One sample, unpacked.
struct TrimodalSample {
  std::vector<float> mod_a;  // 8 x 8
  std::vector<float> mod_b;  // 3 x 8 x 8, channel-major
  std::vector<float> mod_c;  // text_length x alphabet
  int label = 0;
};

/// Dataset stored per modality as n x element_count matrices.
struct Dataset {
  std::size_t text_length = 8;
  std::size_t alphabet = kAlphabet;
  Tensor<float> mod_a, mod_b, mod_c;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  const Tensor<float>& modality(std::size_t j) const {
    switch (j) {
      case 0: return mod_a;
      case 1: return mod_b;
      case 2: return mod_c;
    }
    throw std::out_of_range("dataset has 3 modalities");
  }
  Tensor<float>& modality(std::size_t j) { return const_cast<Tensor<float>&>(std::as_const(*this).modality(j)); }

  TrimodalSample sample(std::size_t i) const {
    auto row = [i](const Tensor<float>& t) { return std::vector<float>(t.row(i).begin(), t.row(i).end()); };
    return {row(mod_a), row(mod_b), row(mod_c), labels.at(i)};
  }
  bool operator==(const Dataset&) const = default;
};

inline const std::array<const char*, 3> kModalityNames{"mod_a", "mod_b", "mod_c"};

/// Modality specs for a dataset: gaussian images, categorical text.
inline std::vector<ModalitySpec> trimodal_specs(std::size_t text_length, std::vector<std::size_t> hidden = {256, 256},
                                                Likelihood image_likelihood = Likelihood::gaussian) {
  return {ModalitySpec{kModalityNames[0], kGlyphPixels, image_likelihood, 0, hidden},
          ModalitySpec{kModalityNames[1], kColorChannels * kGlyphPixels, image_likelihood, 0, hidden},
          ModalitySpec{kModalityNames[2], text_length * kAlphabet, Likelihood::categorical, kAlphabet, hidden}};
}

namespace detail {

inline float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace detail

/// Renders sample i; labels cycle through the classes so counts are balanced.
inline TrimodalSample render_sample(const DatasetConfig& cfg, std::size_t i) {
  Rng rng(derive_seed(cfg.seed, i));
  TrimodalSample s;
  s.label = static_cast<int>(i % cfg.num_classes);
  const auto k = static_cast<std::size_t>(s.label);

  const int dxa = cfg.jitter ? rng.uniform_int(-kJitter, kJitter) : 0;
  const int dya = cfg.jitter ? rng.uniform_int(-kJitter, kJitter) : 0;
  const auto ga = shifted_template(k, dxa, dya);
  s.mod_a.resize(kGlyphPixels);
  for (std::size_t p = 0; p < kGlyphPixels; ++p) s.mod_a[p] = detail::clip01(ga[p] + cfg.noise_std_a * rng.normal());

  const int dxb = cfg.jitter ? rng.uniform_int(-kJitter, kJitter) : 0;
  const int dyb = cfg.jitter ? rng.uniform_int(-kJitter, kJitter) : 0;
  const auto gb = shifted_template(k, dxb, dyb);
  std::array<double, kColorChannels> fg{}, bg{};
  for (auto& c : fg) c = rng.uniform();
  const double top = std::max({fg[0], fg[1], fg[2], 1e-12});
  for (auto& c : fg) c /= top;
  for (auto& c : bg) c = 0.3 * rng.uniform();
  s.mod_b.resize(kColorChannels * kGlyphPixels);
  for (std::size_t c = 0; c < kColorChannels; ++c)
    for (std::size_t p = 0; p < kGlyphPixels; ++p)
      s.mod_b[c * kGlyphPixels + p] =
          detail::clip01(bg[c] + (fg[c] - bg[c]) * gb[p] + cfg.noise_std_b * rng.normal());

  const auto word = kClassWords[k];
  const int start = rng.uniform_int(0, static_cast<int>(cfg.text_length - word.size()));
  s.mod_c.assign(cfg.text_length * cfg.alphabet, 0.0f);
  for (std::size_t pos = 0; pos < cfg.text_length; ++pos) {
    const auto rel = static_cast<std::ptrdiff_t>(pos) - start;
    const std::size_t sym = rel >= 0 && static_cast<std::size_t>(rel) < word.size() ? symbol_of(word[static_cast<std::size_t>(rel)]) : 0;
    s.mod_c[pos * cfg.alphabet + sym] = 1.0f;
  }
  return s;
}

inline Dataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_samples;
  Dataset d;
  d.text_length = cfg.text_length;
  d.alphabet = cfg.alphabet;
  d.mod_a = Tensor<float>({n, kGlyphPixels});
  d.mod_b = Tensor<float>({n, kColorChannels * kGlyphPixels});
  d.mod_c = Tensor<float>({n, cfg.text_length * cfg.alphabet});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = render_sample(cfg, i);
    std::copy(s.mod_a.begin(), s.mod_a.end(), d.mod_a.row(i).begin());
    std::copy(s.mod_b.begin(), s.mod_b.end(), d.mod_b.row(i).begin());
    std::copy(s.mod_c.begin(), s.mod_c.end(), d.mod_c.row(i).begin());
    d.labels[i] = s.label;
  }
  return d;
}

inline Container to_container(const Dataset& d) {
  const std::size_t n = d.size();
  Container c(kDatasetMagic);
  c.add("mod_a", d.mod_a.reshaped({n, kGlyphSide, kGlyphSide}));
  c.add("mod_b", d.mod_b.reshaped({n, kColorChannels, kGlyphSide, kGlyphSide}));
  c.add("mod_c", d.mod_c.reshaped({n, d.text_length, d.alphabet}));
  c.add("label", {n}, std::vector<std::int32_t>(d.labels.begin(), d.labels.end()));
  return c;
}

inline Dataset from_container(const Container& c) {
  const auto a = c.at("mod_a").as_f32(), b = c.at("mod_b").as_f32(), t = c.at("mod_c").as_f32();
  const auto labels = c.at("label").as_i32();
  const std::size_t n = labels.size();
  if (a.shape() != Shape{n, kGlyphSide, kGlyphSide} || b.shape() != Shape{n, kColorChannels, kGlyphSide, kGlyphSide} ||
      t.rank() != 3 || t.dim(0) != n)
    throw ContainerError("dataset container has inconsistent tensor shapes");
  Dataset d;
  d.text_length = t.dim(1);
  d.alphabet = t.dim(2);
  d.mod_a = a.reshaped({n, kGlyphPixels});
  d.mod_b = b.reshaped({n, kColorChannels * kGlyphPixels});
  d.mod_c = t.reshaped({n, d.text_length * d.alphabet});
  d.labels.assign(labels.begin(), labels.end());
  return d;
}

inline void save_dataset(const std::string& path, const Dataset& d) { to_container(d).save(path); }
inline Dataset load_dataset(const std::string& path) { return from_container(Container::load(path, kDatasetMagic)); }

/// Sample indices for one epoch: a permutation drawn from (seed, epoch), cut
/// into batches; the final batch may be partial.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                           std::uint64_t epoch) {
  if (n == 0) throw std::invalid_argument("batches: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, epoch));
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  return out;
}

template <class T = float>
ModalityBatch<T> make_batch(const Dataset& d, std::span<const std::size_t> indices) {
  ModalityBatch<T> b;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto& src = d.modality(j);
    Tensor<T> t({indices.size(), src.cols()});
    for (std::size_t r = 0; r < indices.size(); ++r)
      std::transform(src.row(indices[r]).begin(), src.row(indices[r]).end(), t.row(r).begin(),
                     [](float v) { return static_cast<T>(v); });
    b.data.push_back(std::move(t));
  }
  b.available.assign(3, true);
  for (std::size_t i : indices) b.labels.push_back(d.labels.at(i));
  return b;
}

/// Consecutive rows [begin, end) as a batch, in dataset order.
template <class T = float>
ModalityBatch<T> slice_batch(const Dataset& d, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < std::min(end, d.size()); ++i) idx.push_back(i);
  return make_batch<T>(d, idx);
}

template <class T = float>
std::vector<ModalityBatch<T>> batches(const Dataset& d, std::size_t batch_size, std::uint64_t shuffle_seed,
                                      std::uint64_t epoch = 0) {
  std::vector<ModalityBatch<T>> out;
  for (const auto& idx : epoch_batches(d.size(), batch_size, shuffle_seed, epoch)) out.push_back(make_batch<T>(d, idx));
  return out;
}

}  // namespace mmjsd
