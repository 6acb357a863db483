// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace lpgd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lpgd
