#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpnc {

enum class BankSplit { MetaTrain, MetaTest, All };

BankSplit parse_bank_split(const std::string& s);
std::string to_string(BankSplit s);

struct BankClass {
  int id = 0;
  std::size_t count = 0;
  std::vector<double> items;  // row-major, count x dim

  std::span<const double> item(std::size_t i, std::size_t dim) const { return {items.data() + i * dim, dim}; }
};

/// Item features grouped by class.
///
/// On disk a bank is a raw little-endian float32 file holding all items
/// row-major, plus a JSON sidecar at `<path>.json`:
///   {"format":"f32le","dim":D,"classes":[{"id":..,"offset":..,"count":..},...]}
/// where offset and count are in items (rows), so class c occupies bytes
/// [offset*D*4, (offset+count)*D*4).
struct FeatureBank {
  std::size_t dim = 0;
  std::vector<BankClass> classes;
  BankSplit split = BankSplit::All;

  std::size_t total_items() const;
};

/// Writes the binary file at `path` and the sidecar at `path + ".json"`.
void write_feature_bank(const FeatureBank& bank, const std::string& path);

/// Loads a bank and keeps one half of its classes. Classes are shuffled with
/// a stream seeded by split_seed; the first ceil(n/2) form meta-train, the
/// rest meta-test. Throws ConfigError for a missing file and DataError for a
/// malformed or inconsistent one.
FeatureBank load_feature_bank(const std::string& path, BankSplit split, std::uint64_t split_seed);

}  // namespace dpnc
