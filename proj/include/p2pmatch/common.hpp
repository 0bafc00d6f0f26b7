// Copyright 2026 The p2pmatch Authors.
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

#ifndef P2PMATCH_COMMON_HPP_
#define P2PMATCH_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace p2pmatch {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidValue,
  kAttemptCapExceeded,
  kTiedUtilities,
  kDimensionMismatch,
  kNodeLimitExceeded,
  kTimeLimitExceeded,
  kInfeasible,
  kBudgetExceeded,
  kIndexOutOfRange,
  kInvalidHorizon,
  kModeUnknown,
  kShapeMismatch,
  kParseError,
  kUnknownKey,
  kIoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidValue: return "InvalidValue";
    case ErrorCode::kAttemptCapExceeded: return "AttemptCapExceeded";
    case ErrorCode::kTiedUtilities: return "TiedUtilities";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNodeLimitExceeded: return "NodeLimitExceeded";
    case ErrorCode::kTimeLimitExceeded: return "TimeLimitExceeded";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kBudgetExceeded: return "BudgetExceeded";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInvalidHorizon: return "InvalidHorizon";
    case ErrorCode::kModeUnknown: return "ModeUnknown";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

// All library failures surface as this exception; `code()` tells callers
// which contract was broken.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Dense row-major matrix. Used for utilities (lender x borrower or
// borrower x lender), assignments and bandit statistics.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(std::size_t rows, std::size_t cols) const noexcept {
    return rows_ == rows && cols_ == cols;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Binary borrower x lender matrix; entry (b, l) is x_bl.
using Assignment = Matrix<std::uint8_t>;

}  // namespace p2pmatch

#endif  // P2PMATCH_COMMON_HPP_
