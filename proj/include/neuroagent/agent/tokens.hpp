#pragma once

#include <cstdint>
#include <string_view>

namespace neuroagent::agent {

// Deterministic stand-in for a vendor tokenizer: one token per 4 bytes, rounded up.
inline std::int64_t estimate_tokens_for_bytes(std::size_t bytes) {
    return static_cast<std::int64_t>((bytes + 3) / 4);
}
inline std::int64_t estimate_tokens(std::string_view text) { return estimate_tokens_for_bytes(text.size()); }

}  // namespace neuroagent::agent
