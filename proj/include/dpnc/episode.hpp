#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dpnc {

/// A labelled sequence: 1-based class ids in first-use order paired with
/// fixed-dimension real observations (stored row-major, length x dim).
struct Episode {
  std::vector<int> labels;
  std::size_t dim = 0;
  std::vector<double> data;

  Episode() = default;
  Episode(std::vector<int> labels, std::size_t dim, std::vector<double> data)
      : labels(std::move(labels)), dim(dim), data(std::move(data)) {}

  std::size_t length() const { return labels.size(); }
  std::span<const double> x(std::size_t t) const { return {data.data() + t * dim, dim}; }
  std::span<double> x(std::size_t t) { return {data.data() + t * dim, dim}; }

  bool operator==(const Episode&) const = default;
};

enum class Setting {
  SequentialObservation,  // true label revealed after each prediction
  FullyUnobserved,        // no feedback
};

std::string_view to_string(Setting s);
Setting parse_setting(std::string_view s);

struct Violation {
  std::string what;
  std::size_t index = 0;
};

/// Empty optional when every Episode invariant holds; otherwise the first
/// violated invariant and the offending index.
std::optional<Violation> validate_episode(const Episode& e);

/// Same label rules applied to a bare label sequence.
std::optional<Violation> validate_labels(std::span<const int> labels);

/// Relabels an arbitrary integer sequence to 1-based first-use order.
/// Throws std::invalid_argument on empty input.
std::vector<int> canonicalize_labels(std::span<const int> raw);

/// Number of distinct classes in a canonical label sequence.
int num_classes(std::span<const int> labels);

// One JSON object per line: {"labels":[...],"obs":[[...],...]}
std::string episode_to_json_line(const Episode& e);
Episode episode_from_json_line(std::string_view line);
void write_episodes_jsonl(std::ostream& out, std::span<const Episode> episodes);
std::vector<Episode> read_episodes_jsonl(std::istream& in);

}  // namespace dpnc
