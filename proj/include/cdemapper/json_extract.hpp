// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace cdemapper {

/// Pulls the first balanced JSON object or array out of free-form model
/// output. Tolerates ``` fences, leading prose and trailing commentary.
/// Returns nullopt when no candidate span parses.
std::optional<nlohmann::json> extract_json(std::string_view text);

} // namespace cdemapper
