#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace attribench {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Sorted keys, no insignificant whitespace. nlohmann's default object type is
/// ordered by key, so dump() with no indent is already canonical.
std::string canonical_json(const nlohmann::json& value);

}  // namespace attribench
