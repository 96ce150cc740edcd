/**
 * Copyright 2026 The SplitForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace splitforge {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 ok, 1 usage/parse/validation, 2 transform error,
// 3 oracle failure, 4 evaluator failure, 5 diverged training.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string Sha256Hex(const std::string& bytes);

}  // namespace splitforge
