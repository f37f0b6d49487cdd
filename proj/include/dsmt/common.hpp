// Copyright 2026 The dsmt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace dsmt {

// Error taxonomy shared by all modules. Callers catch the base Error unless
// they care about the specific failure class.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class IndexError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <typename T>
inline T log_sum_exp(T a, T b) {
  if (a == -std::numeric_limits<T>::infinity()) return b;
  if (b == -std::numeric_limits<T>::infinity()) return a;
  T hi = a > b ? a : b;
  T lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

template <typename T>
inline T log_sum_exp(T a, T b, T c) {
  return log_sum_exp(log_sum_exp(a, b), c);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent deterministic sub-stream of a run seed. `stream` is a small
// caller-chosen tag (epoch index, utterance index, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x51ed2701ULL));
}

using Rng = std::mt19937_64;

}  // namespace dsmt
