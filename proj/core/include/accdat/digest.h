// Copyright 2026 The accdat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ACCDAT_DIGEST_H_
#define ACCDAT_DIGEST_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace accdat {

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// First eight bytes of the SHA-256 of `text`, as an integer.
std::uint64_t stable_hash64(std::string_view text);

/// Digest over every regular file below `root`: relative paths and
/// contents, visited in sorted path order.
std::string directory_digest(const std::filesystem::path& root);

}  // namespace accdat

#endif  // ACCDAT_DIGEST_H_
