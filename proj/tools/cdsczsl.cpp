// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "cds/cli/commands.hpp"

int main(int argc, char** argv) { return cds::cli::run(argc, argv, std::cout, std::cerr); }
