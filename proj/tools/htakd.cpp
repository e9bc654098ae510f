//
// Copyright © 2026 The htakd Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "htakd/cli.hpp"

int main(int argc, char** argv) { return htakd::run_cli(argc, argv); }
