#include "dpnc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpnc/error.hpp"

namespace dpnc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

struct Entry {
  std::string name;
  const Tensor<float>* tensor;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) entries.push_back({ckpt.params.names[i], &ckpt.params.tensors[i]});
  if (ckpt.adam) {
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) entries.push_back({"adam.m." + ckpt.params.names[i], &ckpt.adam->m[i]});
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) entries.push_back({"adam.v." + ckpt.params.names[i], &ckpt.adam->v[i]});
  }
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : entries) {
    const std::size_t bytes = e.tensor->size() * sizeof(float);
    tensors.push_back({{"name", e.name},
                       {"rows", e.tensor->rows()},
                       {"cols", e.tensor->cols()},
                       {"offset", offset},
                       {"fnv1a", hex(fnv1a64(e.tensor->data(), bytes))}});
    offset += bytes;
  }
  nlohmann::json header = {{"format", "dpnc-checkpoint"},
                           {"version", 1},
                           {"circuit", ckpt.circuit.to_json()},
                           {"train", ckpt.train},
                           {"step", ckpt.step},
                           {"seed", ckpt.seed},
                           {"blob_bytes", offset},
                           {"tensors", tensors}};
  if (ckpt.adam) {
    const auto& c = ckpt.adam->config;
    header["adam"] = {{"step", ckpt.adam->step},
                      {"lr", c.lr},
                      {"beta1", c.beta1},
                      {"beta2", c.beta2},
                      {"epsilon", c.epsilon}};
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    for (const auto& e : entries)
      out.write(reinterpret_cast<const char*>(e.tensor->data()), static_cast<std::streamsize>(e.tensor->size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint " + path + ": missing header");
  const std::size_t blob_start = line.size() + 1;
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": header is not valid JSON (" + e.what() + ")");
  }
  if (h.value("format", "") != "dpnc-checkpoint") throw DataError("checkpoint " + path + ": unknown format");
  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    ck.circuit = CircuitConfig::from_json(h.at("circuit"));
    ck.train = h.value("train", nlohmann::json::object());
    ck.step = h.at("step").get<std::uint64_t>();
    ck.seed = h.at("seed").get<std::uint64_t>();
    const std::size_t expected = h.at("blob_bytes").get<std::size_t>();
    if (blob.size() != expected)
      throw DataError("checkpoint " + path + ": blob has " + std::to_string(blob.size()) + " bytes, header declares " +
                      std::to_string(expected) + " (data ends at file byte offset " +
                      std::to_string(blob_start + blob.size()) + ")");

    const auto layout = circuit_layout(ck.circuit);
    const auto& tensors = h.at("tensors");
    const bool has_adam = h.contains("adam");
    const std::size_t want = layout.size() * (has_adam ? 3 : 1);
    if (tensors.size() != want) throw DataError("checkpoint " + path + ": tensor list does not match the circuit layout");

    std::vector<Tensor<float>> loaded;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& t = tensors[i];
      const auto& [lname, shape] = layout[i % layout.size()];
      const std::size_t rows = t.at("rows"), cols = t.at("cols"), offset = t.at("offset");
      if (rows != shape[0] || cols != shape[1])
        throw DataError("checkpoint " + path + ": tensor " + t.at("name").get<std::string>() + " has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) + ", expected " + lname + " " +
                        std::to_string(shape[0]) + "x" + std::to_string(shape[1]));
      const std::size_t bytes = rows * cols * sizeof(float);
      if (offset + bytes > blob.size())
        throw DataError("checkpoint " + path + ": tensor " + t.at("name").get<std::string>() +
                        " extends past the end of the blob at byte offset " + std::to_string(offset));
      const std::string digest = hex(fnv1a64(blob.data() + offset, bytes));
      if (digest != t.at("fnv1a").get<std::string>()) {
        throw DataError("checkpoint " + path + ": checksum mismatch in tensor " + t.at("name").get<std::string>() +
                        " at blob byte offset " + std::to_string(offset) + " (file byte offset " +
                        std::to_string(blob_start + offset) + ", " + std::to_string(bytes) + " bytes)");
      }
      Tensor<float> x(rows, cols);
      std::memcpy(x.data(), blob.data() + offset, bytes);
      loaded.push_back(std::move(x));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
      ck.params.names.push_back(layout[i].first);
      ck.params.tensors.push_back(std::move(loaded[i]));
    }
    if (has_adam) {
      const auto& a = h.at("adam");
      AdamState<float> st;
      st.config = AdamConfig{a.at("lr"), a.at("beta1"), a.at("beta2"), a.at("epsilon")};
      st.step = a.at("step");
      for (std::size_t i = 0; i < layout.size(); ++i) st.m.push_back(std::move(loaded[layout.size() + i]));
      for (std::size_t i = 0; i < layout.size(); ++i) st.v.push_back(std::move(loaded[2 * layout.size() + i]));
      ck.adam = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": malformed header (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  return ck;
}

}  // namespace dpnc
