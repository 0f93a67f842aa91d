#pragma once

// Binary tensor container shared by datasets ("MMDS") and checkpoints ("MMJS").
//
//   magic[4] | version u32 LE | header_len u64 LE | header text | payloads
//
// The header has one line per tensor, in payload order: "<name> <dtype> <d0>x<d1>...".
// dtype is f32 or i32; every payload element is a 32-bit little-endian word.

#include "mmjsd/tensor.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmjsd {

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersion : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

enum class DType { f32, i32 };

struct ContainerEntry {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::uint32_t> words;

  Tensor<float> as_f32() const {
    if (dtype != DType::f32) throw ContainerError("tensor '" + name + "' is not f32");
    std::vector<float> out(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) out[i] = std::bit_cast<float>(words[i]);
    return Tensor<float>(shape, std::move(out));
  }
  std::vector<std::int32_t> as_i32() const {
    if (dtype != DType::i32) throw ContainerError("tensor '" + name + "' is not i32");
    std::vector<std::int32_t> out(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) out[i] = std::bit_cast<std::int32_t>(words[i]);
    return out;
  }
};

class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;

  explicit Container(std::array<char, 4> magic) : magic_(magic) {}

  const std::array<char, 4>& magic() const noexcept { return magic_; }
  const std::vector<ContainerEntry>& entries() const noexcept { return entries_; }

  void add(std::string name, const Tensor<float>& t) {
    ContainerEntry e{std::move(name), DType::f32, t.shape(), {}};
    e.words.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) e.words[i] = std::bit_cast<std::uint32_t>(t[i]);
    push(std::move(e));
  }
  void add(std::string name, Shape shape, const std::vector<std::int32_t>& values) {
    if (numel(shape) != values.size()) throw ShapeError("container: i32 tensor size does not match shape");
    ContainerEntry e{std::move(name), DType::i32, std::move(shape), {}};
    e.words.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) e.words[i] = std::bit_cast<std::uint32_t>(values[i]);
    push(std::move(e));
  }

  bool contains(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return true;
    return false;
  }
  const ContainerEntry& at(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e;
    throw ContainerError("container has no tensor named '" + std::string(name) + "'");
  }

  std::string serialize() const {
    std::string header;
    for (const auto& e : entries_) {
      header += e.name;
      header += e.dtype == DType::f32 ? " f32 " : " i32 ";
      if (e.shape.empty()) header += "scalar";
      for (std::size_t i = 0; i < e.shape.size(); ++i) header += (i ? "x" : "") + std::to_string(e.shape[i]);
      header += '\n';
    }
    std::string out(magic_.begin(), magic_.end());
    put_le(out, kVersion, 4);
    put_le(out, header.size(), 8);
    out += header;
    for (const auto& e : entries_)
      for (std::uint32_t w : e.words) put_le(out, w, 4);
    return out;
  }

  static Container parse(std::string_view bytes, std::array<char, 4> expected_magic) {
    if (bytes.size() < 16) throw ContainerError("container truncated: missing preamble");
    if (std::memcmp(bytes.data(), expected_magic.data(), 4) != 0)
      throw ContainerError("container magic mismatch: expected '" + std::string(expected_magic.begin(), expected_magic.end()) + "'");
    const auto version = static_cast<std::uint32_t>(get_le(bytes.substr(4), 4));
    if (version != kVersion) throw UnsupportedVersion("unsupported container version " + std::to_string(version));
    const std::uint64_t header_len = get_le(bytes.substr(8), 8);
    if (bytes.size() - 16 < header_len) throw ContainerError("container truncated: header");
    Container c(expected_magic);
    std::istringstream header{std::string(bytes.substr(16, header_len))};
    std::size_t offset = 16 + header_len;
    std::string line;
    while (std::getline(header, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string name, dtype, dims;
      if (!(ls >> name >> dtype >> dims)) throw ContainerError("container header line malformed: '" + line + "'");
      ContainerEntry e;
      e.name = name;
      if (dtype == "f32")
        e.dtype = DType::f32;
      else if (dtype == "i32")
        e.dtype = DType::i32;
      else
        throw ContainerError("container: unknown dtype '" + dtype + "'");
      if (dims != "scalar") {
        std::istringstream ds(dims);
        std::string d;
        while (std::getline(ds, d, 'x')) {
          try {
            e.shape.push_back(static_cast<std::size_t>(std::stoull(d)));
          } catch (const std::exception&) {
            throw ContainerError("container: bad extent '" + d + "'");
          }
        }
      }
      const std::size_t count = numel(e.shape);
      if ((bytes.size() - offset) / 4 < count) throw ContainerError("container truncated: payload of '" + name + "'");
      e.words.resize(count);
      for (std::size_t i = 0; i < count; ++i) e.words[i] = static_cast<std::uint32_t>(get_le(bytes.substr(offset + 4 * i), 4));
      offset += 4 * count;
      c.push(std::move(e));
    }
    if (offset != bytes.size()) throw ContainerError("container has trailing bytes");
    return c;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("cannot open '" + path + "' for writing");
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError("write to '" + path + "' failed");
  }

  static Container load(const std::string& path, std::array<char, 4> expected_magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContainerError("cannot open '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(bytes, expected_magic);
  }

 private:
  void push(ContainerEntry e) {
    if (e.name.empty() || e.name.find_first_of(" \n\t") != std::string::npos)
      throw ContainerError("container: invalid tensor name '" + e.name + "'");
    if (contains(e.name)) throw ContainerError("container: duplicate tensor '" + e.name + "'");
    entries_.push_back(std::move(e));
  }

  static void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  static std::uint64_t get_le(std::string_view in, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[static_cast<std::size_t>(i)])) << (8 * i);
    return v;
  }

  std::array<char, 4> magic_;
  std::vector<ContainerEntry> entries_;
};

inline constexpr std::array<char, 4> kDatasetMagic{'M', 'M', 'D', 'S'};
inline constexpr std::array<char, 4> kCheckpointMagic{'M', 'M', 'J', 'S'};

}  // namespace mmjsd
