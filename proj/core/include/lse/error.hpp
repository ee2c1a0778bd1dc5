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

#include <stdexcept>
#include <string>

namespace lse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents that do not agree with each other.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Values outside the domain an operation accepts (NaN logits, bad labels).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed `.lst` / `.lsec` payloads.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kBadDtype, kTruncated, kDimsOverflow, kBadHeader };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Configuration files and command-line values that cannot be resolved.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lse
