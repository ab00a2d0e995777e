#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "dpnc/adam.hpp"
#include "dpnc/circuit.hpp"

namespace dpnc {

/// On disk: one line of JSON (the header) terminated by '\n', then a blob of
/// little-endian float32 values. The blob holds the parameters in declared
/// order followed, when present, by the Adam first and second moments in the
/// same order. The header lists every tensor with its name, shape, byte
/// offset within the blob and an FNV-1a checksum of its bytes.
struct Checkpoint {
  CircuitConfig circuit;
  nlohmann::json train = nlohmann::json::object();  // training config that produced it
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  CircuitParams<float> params;
  std::optional<AdamState<float>> adam;
};

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws ConfigError when the file cannot be opened and DataError when it is
/// malformed; checksum and length failures name the byte offset involved.
Checkpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace dpnc
