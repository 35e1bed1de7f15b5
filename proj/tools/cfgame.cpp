// SPDX-License-Identifier: Apache-2.0
#include "cfgame/cli.hpp"

int main(int argc, char** argv) { return cfgame::cli::run(argc, argv); }
