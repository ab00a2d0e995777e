#include "dpnc/feature_bank.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dpnc/error.hpp"
#include "dpnc/rng.hpp"
#include "json.hpp"

namespace dpnc {

BankSplit parse_bank_split(const std::string& s) {
  if (s == "meta-train" || s == "train") return BankSplit::MetaTrain;
  if (s == "meta-test" || s == "test") return BankSplit::MetaTest;
  if (s == "all") return BankSplit::All;
  throw ConfigError("unknown bank split '" + s + "' (expected meta-train|meta-test|all)");
}

std::string to_string(BankSplit s) {
  switch (s) {
    case BankSplit::MetaTrain:
      return "meta-train";
    case BankSplit::MetaTest:
      return "meta-test";
    default:
      return "all";
  }
}

std::size_t FeatureBank::total_items() const {
  return std::accumulate(classes.begin(), classes.end(), std::size_t{0},
                         [](std::size_t s, const BankClass& c) { return s + c.count; });
}

namespace {

void put_f32le(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_feature_bank(const FeatureBank& bank, const std::string& path) {
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write feature bank: " + path);
  nlohmann::json side;
  side["format"] = "f32le";
  side["dim"] = bank.dim;
  side["classes"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& c : bank.classes) {
    if (c.items.size() != c.count * bank.dim) throw DataError("feature bank class has inconsistent item storage");
    for (double v : c.items) put_f32le(bin, static_cast<float>(v));
    side["classes"].push_back({{"id", c.id}, {"offset", offset}, {"count", c.count}});
    offset += c.count;
  }
  if (!bin) throw DataError("error writing feature bank: " + path);
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw DataError("cannot write feature bank sidecar: " + path + ".json");
  js << side.dump(1) << '\n';
}

FeatureBank load_feature_bank(const std::string& path, BankSplit split, std::uint64_t split_seed) {
  const std::string side_path = path + ".json";
  if (!std::filesystem::exists(path)) throw ConfigError("feature bank not found: " + path);
  if (!std::filesystem::exists(side_path)) throw ConfigError("feature bank sidecar not found: " + side_path);

  nlohmann::json side;
  try {
    std::ifstream js(side_path);
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed feature bank sidecar " + side_path + ": " + e.what());
  }
  if (side.value("format", std::string("f32le")) != "f32le")
    throw DataError("unsupported feature bank format in " + side_path);
  if (!side.contains("dim") || !side.contains("classes")) throw DataError(side_path + " lacks 'dim' or 'classes'");
  const auto dim = side.at("dim").get<std::size_t>();
  if (dim == 0) throw DataError(side_path + ": dim must be positive");

  std::ifstream bin(path, std::ios::binary);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (raw.size() % (4 * dim) != 0)
    throw DataError(path + ": size " + std::to_string(raw.size()) + " bytes is not a multiple of dim*4");
  const std::size_t rows = raw.size() / (4 * dim);

  FeatureBank all;
  all.dim = dim;
  for (const auto& c : side.at("classes")) {
    BankClass bc;
    bc.id = c.at("id").get<int>();
    const auto offset = c.at("offset").get<std::size_t>();
    bc.count = c.at("count").get<std::size_t>();
    if (bc.count == 0) throw DataError(side_path + ": class " + std::to_string(bc.id) + " has no items");
    if (offset + bc.count > rows)
      throw DataError(side_path + ": class " + std::to_string(bc.id) + " extends past the end of " + path);
    bc.items.resize(bc.count * dim);
    const unsigned char* p = raw.data() + offset * dim * 4;
    for (std::size_t i = 0; i < bc.items.size(); ++i) bc.items[i] = static_cast<double>(get_f32le(p + 4 * i));
    all.classes.push_back(std::move(bc));
  }
  if (all.classes.empty()) throw DataError(side_path + ": bank has no classes");
  if (split == BankSplit::All) return all;

  std::vector<std::size_t> order(all.classes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(split_seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  const std::size_t n_train = (order.size() + 1) / 2;

  FeatureBank out;
  out.dim = dim;
  out.split = split;
  const std::size_t lo = split == BankSplit::MetaTrain ? 0 : n_train;
  const std::size_t hi = split == BankSplit::MetaTrain ? n_train : order.size();
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                order.begin() + static_cast<std::ptrdiff_t>(hi));
  std::sort(keep.begin(), keep.end());
  for (std::size_t i : keep) out.classes.push_back(std::move(all.classes[i]));
  if (out.classes.empty()) throw DataError("feature bank split '" + to_string(split) + "' is empty");
  return out;
}

}  // namespace dpnc
