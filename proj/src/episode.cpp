#include "dpnc/episode.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "dpnc/error.hpp"
#include "json.hpp"

namespace dpnc {

std::string_view to_string(Setting s) {
  return s == Setting::SequentialObservation ? "sequential" : "unobserved";
}

Setting parse_setting(std::string_view s) {
  if (s == "sequential" || s == "sequential_observation") return Setting::SequentialObservation;
  if (s == "unobserved" || s == "fully_unobserved") return Setting::FullyUnobserved;
  throw ConfigError("unknown setting '" + std::string(s) + "' (expected sequential|unobserved)");
}

std::optional<Violation> validate_labels(std::span<const int> labels) {
  if (labels.empty()) return Violation{"episode is empty", 0};
  if (labels[0] != 1) return Violation{"labels[0] != 1", 0};
  int max_seen = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] < 1) return Violation{"label is not a positive class id at t=" + std::to_string(t), t};
    if (labels[t] > max_seen + 1)
      return Violation{"label skips a class id at t=" + std::to_string(t), t};
    max_seen = std::max(max_seen, labels[t]);
  }
  return std::nullopt;
}

std::optional<Violation> validate_episode(const Episode& e) {
  if (e.labels.empty()) return Violation{"episode is empty", 0};
  if (e.dim == 0) return Violation{"observation dimension is zero", 0};
  if (e.data.size() != e.labels.size() * e.dim) {
    const std::size_t rows = e.data.size() / e.dim;
    if (e.data.size() % e.dim != 0)
      return Violation{"observation " + std::to_string(rows) + " has dimension != " + std::to_string(e.dim), rows};
    return Violation{"labels and observations differ in length (" + std::to_string(e.labels.size()) + " vs " +
                         std::to_string(rows) + ")",
                     std::min(rows, e.labels.size())};
  }
  return validate_labels(e.labels);
}

std::vector<int> canonicalize_labels(std::span<const int> raw) {
  if (raw.empty()) throw std::invalid_argument("canonicalize_labels: empty input");
  std::unordered_map<int, int> remap;
  std::vector<int> out;
  out.reserve(raw.size());
  for (int v : raw) {
    auto [it, inserted] = remap.try_emplace(v, static_cast<int>(remap.size()) + 1);
    out.push_back(it->second);
  }
  return out;
}

int num_classes(std::span<const int> labels) {
  int k = 0;
  for (int v : labels) k = std::max(k, v);
  return k;
}

std::string episode_to_json_line(const Episode& e) {
  nlohmann::json j;
  j["labels"] = e.labels;
  auto obs = nlohmann::json::array();
  for (std::size_t t = 0; t < e.length(); ++t) {
    auto row = e.x(t);
    obs.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["obs"] = std::move(obs);
  return j.dump();
}

Episode episode_from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& err) {
    throw DataError(std::string("episode line is not valid JSON: ") + err.what());
  }
  if (!j.contains("labels") || !j.contains("obs")) throw DataError("episode line lacks 'labels' or 'obs'");
  Episode e;
  e.labels = j.at("labels").get<std::vector<int>>();
  const auto& obs = j.at("obs");
  if (!obs.is_array() || obs.empty()) throw DataError("episode 'obs' must be a nonempty array");
  e.dim = obs.at(0).size();
  for (const auto& row : obs) {
    if (row.size() != e.dim) throw DataError("episode observations have inconsistent dimension");
    for (const auto& v : row) e.data.push_back(v.get<double>());
  }
  if (auto bad = validate_episode(e)) throw DataError("invalid episode: " + bad->what);
  return e;
}

void write_episodes_jsonl(std::ostream& out, std::span<const Episode> episodes) {
  for (const auto& e : episodes) out << episode_to_json_line(e) << '\n';
}

std::vector<Episode> read_episodes_jsonl(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    episodes.push_back(episode_from_json_line(line));
  }
  return episodes;
}

}  // namespace dpnc
