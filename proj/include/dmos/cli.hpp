// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace dmos::cli {

// Runs one CLI invocation (args exclude the program name). Exit codes:
// 0 success, 2 config error, 3 data error, 4 numerical failure.
int run(const std::vector<std::string>& args);

}  // namespace dmos::cli
