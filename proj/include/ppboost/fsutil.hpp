/* Copyright 2026 The PPBoost Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ppboost::fsutil {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames over the target, creating
// parent directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Resolves a manifest-relative path against a dataset root. Absolute paths
// are returned unchanged.
std::filesystem::path resolve(const std::filesystem::path& root,
                              const std::string& rel);

// Dataset root: PPBOOST_ROOT if set, otherwise the given fallback.
std::filesystem::path dataset_root(const std::filesystem::path& fallback);

}  // namespace ppboost::fsutil
