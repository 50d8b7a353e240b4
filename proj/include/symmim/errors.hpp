// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace symmim {

// Invalid configuration or arguments caught before any work starts.
// The CLI maps this to exit code 1; everything else to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace symmim
