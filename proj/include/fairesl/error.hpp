// Copyright 2026 fairesl contributors
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

#include <stdexcept>
#include <string>

namespace fairesl {

/// Base class for every error raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input table: missing columns, ragged rows, bad header.
struct SchemaError : Error {
  using Error::Error;
};

/// A group column does not have exactly two observed levels.
struct CardinalityError : Error {
  using Error::Error;
};

/// Label column contains values other than the two admissible ones.
struct LabelError : Error {
  using Error::Error;
};

/// Matrix/vector dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

/// Training cannot proceed (e.g. a single class in the training labels).
struct DegenerateModelError : Error {
  using Error::Error;
};

/// A classification metric has an empty denominator on the requested rows.
struct UndefinedMetricError : Error {
  using Error::Error;
};

/// A required coalition is absent from a prediction table.
struct CompletenessError : Error {
  using Error::Error;
};

/// A cell value is outside its admissible domain (e.g. y_hat not in {0,1}).
struct ValueError : Error {
  using Error::Error;
};

/// Invalid argument domain (negative counts, alpha outside (0,1), ...).
struct DomainError : Error {
  using Error::Error;
};

/// A variance estimate collapsed to zero where the test needs it positive.
struct DegenerateVarianceError : Error {
  using Error::Error;
};

/// A test statistic cannot be formed at all (e.g. empty denominator group).
struct UndefinedTestError : Error {
  using Error::Error;
};

/// A plug-in variance came out materially negative.
struct NumericalConsistencyError : Error {
  using Error::Error;
};

/// Too many bootstrap replicates failed to produce a statistic.
struct UnstableResultError : Error {
  using Error::Error;
};

/// A criterion verdict was requested but a constituent test is missing.
struct IncompleteCriterionError : Error {
  using Error::Error;
};

}  // namespace fairesl
