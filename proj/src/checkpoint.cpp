#include "gaclab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace gaclab::checkpoint {

namespace fs = std::filesystem;

void save(const std::string& dir, const std::vector<const Param*>& params, const Json& arch) {
  fs::create_directories(dir);

  Json tensors = Json::object();
  std::uint64_t offset = 0;
  for (const Param* p : params) {
    if (tensors.contains(p->name)) throw std::runtime_error("checkpoint: duplicate tensor name " + p->name);
    tensors[p->name] = {{"shape", p->value.shape()}, {"dtype", "f64"}, {"offset", offset}};
    offset += p->value.size() * sizeof(double);
  }
  Json index;
  index["arch"] = arch;
  index["tensors"] = tensors;

  {
    std::ofstream out(fs::path(dir) / "index.json");
    if (!out) throw std::runtime_error("checkpoint: cannot write " + dir + "/index.json");
    out << index.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + dir + "/weights.bin");
    for (const Param* p : params) {
      p->value.require_finite("checkpoint tensor " + p->name);
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
  }
}

Loaded load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in) throw std::runtime_error("checkpoint: cannot open " + dir + "/index.json");
  Json index = Json::parse(in);

  std::ifstream bin(fs::path(dir) / "weights.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot open " + dir + "/weights.bin");

  Loaded loaded;
  loaded.arch = index.value("arch", Json::object());
  for (const auto& [name, meta] : index.at("tensors").items()) {
    const std::vector<int> shape = meta.at("shape").get<std::vector<int>>();
    const std::uint64_t offset = meta.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("checkpoint: truncated weights.bin reading " + name);
    t.require_finite("checkpoint tensor " + name);
    loaded.params.emplace_back(name, std::move(t));
  }
  return loaded;
}

const Param* Loaded::find(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

}  // namespace gaclab::checkpoint
