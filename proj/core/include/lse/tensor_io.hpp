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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>

#include "lse/tensor.hpp"

namespace lse {

// `.lst` layout, little-endian: "LSET", u16 version, u8 dtype, u8 ndim,
// ndim x u32 extents, raw row-major payload. No padding, no checksum.
inline constexpr char kTensorMagic[4] = {'L', 'S', 'E', 'T'};
inline constexpr std::uint16_t kTensorVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kUInt8 = 1 };

using AnyTensor = std::variant<Tensor<float>, Tensor<std::uint8_t>>;

void write_tensor(std::ostream& out, const Tensor<float>& t);
void write_tensor(std::ostream& out, const Tensor<std::uint8_t>& t);
void write_tensor(const std::filesystem::path& path, const Tensor<float>& t);
void write_tensor(const std::filesystem::path& path, const Tensor<std::uint8_t>& t);

/// Reads one tensor record from the current stream position.
AnyTensor read_tensor(std::istream& in);
AnyTensor read_tensor(const std::filesystem::path& path);

/// Typed read; throws FormatError(kBadDtype) when the stored dtype differs.
template <typename T>
Tensor<T> read_tensor_as(const std::filesystem::path& path);
template <typename T>
Tensor<T> read_tensor_as(std::istream& in);

/// 8-bit binary PGM of a rank-2 tensor; values are multiplied by `scale`,
/// rounded half-up and clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const Tensor<float>& map, float scale = 255.0f);
void write_pgm(const std::filesystem::path& path, const Tensor<std::uint8_t>& map,
               float scale = 255.0f);

/// Binary PPM of a 3 x H x W image in [0, 1].
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace lse
