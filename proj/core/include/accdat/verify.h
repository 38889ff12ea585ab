// Copyright 2026 The accdat Authors.
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

#ifndef ACCDAT_VERIFY_H_
#define ACCDAT_VERIFY_H_

#include <cstdint>
#include <string>
#include <vector>

namespace accdat {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

struct VerifyOptions {
  std::uint64_t seed = 20240;
  int ctc_instances = 1000;
  int dat_instances = 60;
};

/// 64-bit self-checks: CTC against path enumeration, tape gradients against
/// central differences, gradient reversal algebra, the single-pass
/// adversarial update against two separate backward passes, the lambda
/// ramp, and the min-max update directions.
std::vector<SuiteResult> run_verification(const VerifyOptions& options = {});

}  // namespace accdat

#endif  // ACCDAT_VERIFY_H_
