// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <iostream>

#include "maskse/cli.h"

int main(int argc, char** argv) {
  return maskse::cli::Run(argc, argv, std::cout, std::cerr);
}
