// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/cli.hpp"

int main(int argc, char** argv) { return promptforge::cli::dispatch(argc, argv); }
