/* Copyright 2026 The LSE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "lse/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace lse {
namespace {

// Largest element count accepted from a file header (4 GiB of float32).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void get_bytes(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(FormatError::Kind::kTruncated, std::string("truncated tensor: missing ") + what);
  }
}

std::uint32_t le_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_header(std::ostream& out, DType dtype, const Dims& dims) {
  if (dims.size() > 255) throw ShapeError("tensor rank exceeds 255");
  out.write(kTensorMagic, 4);
  put_u16(out, kTensorVersion);
  out.put(static_cast<char>(dtype));
  out.put(static_cast<char>(dims.size()));
  for (std::size_t d : dims) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
}

void check_stream(std::ostream& out) {
  if (!out) throw IoError("failed writing tensor payload");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(FormatError::Kind::kTruncated,
                      "payload of " + path.string() + " is longer than its declared dims");
  }
}

std::uint8_t quantize(float v, float scale) {
  const float scaled = std::floor(v * scale + 0.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

template <typename T>
void write_pnm(const std::filesystem::path& path, const Tensor<T>& map, float scale) {
  if (map.rank() != 2) throw ShapeError("PGM export needs an H x W map");
  auto out = open_out(path);
  out << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (std::size_t i = 0; i < map.size(); ++i) {
    out.put(static_cast<char>(quantize(static_cast<float>(map[i]), scale)));
  }
  check_stream(out);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  write_header(out, DType::kFloat32, t.dims());
  std::vector<char> buf(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(t[i]);
    for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  check_stream(out);
}

void write_tensor(std::ostream& out, const Tensor<std::uint8_t>& t) {
  write_header(out, DType::kUInt8, t.dims());
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size()));
  check_stream(out);
}

void write_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
  auto out = open_out(path);
  write_tensor(out, t);
}

void write_tensor(const std::filesystem::path& path, const Tensor<std::uint8_t>& t) {
  auto out = open_out(path);
  write_tensor(out, t);
}

AnyTensor read_tensor(std::istream& in) {
  char magic[4];
  get_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic,
                      "bad magic '" + std::string(magic, 4) + "', expected 'LSET'");
  }
  unsigned char fixed[4];
  get_bytes(in, reinterpret_cast<char*>(fixed), 4, "header");
  const std::uint16_t version = static_cast<std::uint16_t>(fixed[0] | (fixed[1] << 8));
  if (version != kTensorVersion) {
    throw FormatError(FormatError::Kind::kBadVersion,
                      "unsupported tensor format version " + std::to_string(version));
  }
  const std::uint8_t dtype = fixed[2];
  if (dtype > 1) {
    throw FormatError(FormatError::Kind::kBadDtype, "unknown dtype code " + std::to_string(dtype));
  }
  const std::size_t ndim = fixed[3];
  if (ndim == 0) throw FormatError(FormatError::Kind::kBadHeader, "tensor declares zero dims");
  Dims dims(ndim);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    unsigned char b[4];
    get_bytes(in, reinterpret_cast<char*>(b), 4, "extents");
    dims[i] = le_u32(b);
    if (dims[i] == 0) throw FormatError(FormatError::Kind::kBadHeader, "tensor declares a zero extent");
    count *= dims[i];
    if (count > kMaxElements) {
      throw FormatError(FormatError::Kind::kDimsOverflow,
                        "declared dims " + dims_to_string(Dims(dims.begin(), dims.begin() + i + 1)) +
                            " exceed the element limit");
    }
  }
  if (static_cast<DType>(dtype) == DType::kUInt8) {
    std::vector<std::uint8_t> data(count);
    get_bytes(in, reinterpret_cast<char*>(data.data()), count, "payload");
    return Tensor<std::uint8_t>(std::move(dims), std::move(data));
  }
  std::vector<char> raw(count * 4);
  get_bytes(in, raw.data(), raw.size(), "payload");
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(le_u32(reinterpret_cast<const unsigned char*>(raw.data()) + 4 * i));
  }
  return Tensor<float>(std::move(dims), std::move(data));
}

AnyTensor read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    AnyTensor t = read_tensor(in);
    expect_eof(in, path);
    return t;
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

template <typename T>
Tensor<T> read_tensor_as(std::istream& in) {
  AnyTensor any = read_tensor(in);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw FormatError(FormatError::Kind::kBadDtype, "tensor has an unexpected dtype");
}

template <typename T>
Tensor<T> read_tensor_as(const std::filesystem::path& path) {
  AnyTensor any = read_tensor(path);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw FormatError(FormatError::Kind::kBadDtype, path.string() + ": unexpected dtype");
}

template Tensor<float> read_tensor_as<float>(std::istream&);
template Tensor<std::uint8_t> read_tensor_as<std::uint8_t>(std::istream&);
template Tensor<float> read_tensor_as<float>(const std::filesystem::path&);
template Tensor<std::uint8_t> read_tensor_as<std::uint8_t>(const std::filesystem::path&);

void write_pgm(const std::filesystem::path& path, const Tensor<float>& map, float scale) {
  write_pnm(path, map, scale);
}

void write_pgm(const std::filesystem::path& path, const Tensor<std::uint8_t>& map, float scale) {
  write_pnm(path, map, scale);
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("PPM export needs a 3 x H x W image");
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  auto out = open_out(path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t c = 0; c < 3; ++c) out.put(static_cast<char>(quantize(image.at(c, i, j), 255.0f)));
    }
  }
  check_stream(out);
}

}  // namespace lse
