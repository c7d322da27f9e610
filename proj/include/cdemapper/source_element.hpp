// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cdemapper {

/// One local data element awaiting normalization.
struct SourceElement {
    std::string element_id;
    std::string name;
    std::string description;
    std::vector<std::string> value_set;
    /// Columns beyond name/description/values, carried through opaquely.
    std::vector<std::pair<std::string, std::string>> extra;

    bool operator==(const SourceElement&) const = default;
};

} // namespace cdemapper
