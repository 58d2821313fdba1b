// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "paco/cli.hpp"

int main(int argc, char** argv) { return paco::cli::dispatch(argc, argv, std::cout, std::cerr); }
