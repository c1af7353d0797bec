// Copyright 2026 The distilmos Authors
// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <vector>

#include "dmos/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dmos::cli::run(args);
}
