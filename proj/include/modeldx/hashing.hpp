#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace modeldx {

std::uint64_t fnv1a64(std::string_view bytes);

/// Lower-case, zero-padded 16 digit hex.
std::string hex64(std::uint64_t value);

/// splitmix64 finalizer applied to the pair; used to derive per-item seeds
/// that do not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t salt);

}  // namespace modeldx
