// Copyright 2026 The Mallows Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace mallows {

// Bad arguments (size mismatch, malformed query, ...) use std::invalid_argument.

class resource_limit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class precondition_violation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class degenerate_input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pairwise decisions that do not form a total order.
class recovery_failure : public std::runtime_error {
 public:
  recovery_failure(const std::string& what, int a, int b, int c)
      : std::runtime_error(what), triple{a, b, c} {}
  int triple[3];
};

class learning_failure : public std::runtime_error {
 public:
  learning_failure(const std::string& what, std::size_t candidates, double best)
      : std::runtime_error(what), candidate_count(candidates), best_gap(best) {}
  std::size_t candidate_count;
  double best_gap;
};

}  // namespace mallows
