#pragma once

#include <string_view>

// Verbatim prompt texts, compiled in from assets/prompts/*.txt.
namespace attribench::prompt_assets {

inline constexpr std::string_view kVersion = "prompts-v1";

extern const std::string_view multihop_system;
extern const std::string_view multihop_user_header;
extern const std::string_view multihop_user_footer;
extern const std::string_view dialogue_system;
extern const std::string_view dialogue_user_header;
extern const std::string_view dialogue_user_footer;
extern const std::string_view attribution_system;
extern const std::string_view attribution_user_instruction;
extern const std::string_view rephrase_system;
extern const std::string_view rephrase_user_instruction;

}  // namespace attribench::prompt_assets
