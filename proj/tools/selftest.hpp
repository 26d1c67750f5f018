// Copyright Contributors to the lrf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>

namespace lrf {

/// Runs the quick oracle checks, printing one PASS/FAIL line each. Returns
/// the number of failures.
int run_selftest(std::ostream& out, std::uint64_t seed);

} // namespace lrf
