#include "fryshort/nn/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fryshort::nn {

namespace {
constexpr char kMagic[8] = {'F', 'R', 'Y', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::string& path, const Module& module,
                     const std::map<std::string, std::string>& meta, const AdamW* optimizer) {
  nlohmann::json index;
  index["meta"] = meta;
  auto& entries = index["tensors"];
  entries = nlohmann::json::array();

  const auto state = module.state();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : state) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    entries.push_back(e);
    offset += static_cast<std::uint64_t>(t.numel());
  }
  if (optimizer) {
    const auto os = optimizer->export_state();
    nlohmann::json oj;
    oj["step"] = os.step;
    auto& moments = oj["moments"];
    moments = nlohmann::json::array();
    for (std::size_t i = 0; i < os.m.size(); ++i) {
      nlohmann::json m;
      m["numel"] = os.m[i].size();
      m["offset"] = offset;
      offset += 2 * os.m[i].size();
      moments.push_back(m);
    }
    index["optimizer"] = oj;
  }

  const std::string header = index.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(header.data(), static_cast<std::streamsize>(hlen));
  for (const auto& [name, t] : state)
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (optimizer) {
    const auto os = optimizer->export_state();
    for (std::size_t i = 0; i < os.m.size(); ++i) {
      f.write(reinterpret_cast<const char*>(os.m[i].data()),
              static_cast<std::streamsize>(os.m[i].size() * sizeof(double)));
      f.write(reinterpret_cast<const char*>(os.v[i].data()),
              static_cast<std::streamsize>(os.v[i].size() * sizeof(double)));
    }
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  const nlohmann::json index = nlohmann::json::parse(header);

  const std::streampos blob_start = f.tellg();
  Checkpoint ck;
  if (index.contains("meta"))
    ck.meta = index["meta"].get<std::map<std::string, std::string>>();
  for (const auto& e : index["tensors"]) {
    const auto name = e["name"].get<std::string>();
    const auto shape = e["shape"].get<Shape>();
    const auto offset = e["offset"].get<std::uint64_t>();
    Tensor t = Tensor::zeros(shape);
    f.seekg(blob_start + static_cast<std::streamoff>(offset * sizeof(double)));
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated checkpoint tensor " + name + ": " + path);
    ck.tensors.emplace(name, t);
  }
  if (index.contains("optimizer")) {
    const auto& oj = index["optimizer"];
    ck.has_optimizer = true;
    ck.optimizer.step = oj["step"].get<std::int64_t>();
    for (const auto& m : oj["moments"]) {
      const auto numel = m["numel"].get<std::size_t>();
      const auto offset = m["offset"].get<std::uint64_t>();
      std::vector<double> mv(numel), vv(numel);
      f.seekg(blob_start + static_cast<std::streamoff>(offset * sizeof(double)));
      f.read(reinterpret_cast<char*>(mv.data()),
             static_cast<std::streamsize>(numel * sizeof(double)));
      f.read(reinterpret_cast<char*>(vv.data()),
             static_cast<std::streamsize>(numel * sizeof(double)));
      if (!f) throw std::runtime_error("truncated optimizer state: " + path);
      ck.optimizer.m.push_back(std::move(mv));
      ck.optimizer.v.push_back(std::move(vv));
    }
  }
  return ck;
}

void load_into(Module& module, const Checkpoint& ck) {
  for (auto& [name, t] : module.state()) {
    const auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + name);
    if (it->second.shape() != t.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": stored " +
                               shape_str(it->second.shape()) + " vs model " + shape_str(t.shape()));
    std::memcpy(t.data(), it->second.data(),
                static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
}

}  // namespace fryshort::nn
