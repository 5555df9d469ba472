// Copyright 2026 The relatape Authors
// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "relatape/cli.hpp"

int main(int argc, char** argv) { return relatape::run_cli(argc, argv, std::cout, std::cerr); }
