#ifndef COMPANDER_CHECKPOINT_HPP
#define COMPANDER_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "compander/tensor.hpp"

namespace compander {

/// Single-file checkpoint: a text magic line, the manifest length, the
/// manifest JSON, then raw little-endian f64 blobs back to back. The
/// manifest's blob table records name, shape, offset (relative to the
/// blob region) and byte count for every tensor.
struct Checkpoint {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, Tensor<double>>> blobs;

  const Tensor<double>* find(const std::string& name) const {
    for (const auto& [n, t] : blobs)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<double>& at(const std::string& name) const {
    const Tensor<double>* t = find(name);
    if (!t) throw std::runtime_error("checkpoint: no blob named " + name);
    return *t;
  }

  void add(const std::string& name, Tensor<double> t) {
    if (find(name)) throw std::invalid_argument("checkpoint: duplicate blob " + name);
    blobs.emplace_back(name, std::move(t));
  }
};

inline constexpr char kCheckpointMagic[] = "WCCKPT1";

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native little-endian order");

inline void write_doubles(std::ofstream& os, const Tensor<double>& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           std::streamsize(t.size() * sizeof(double)));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest = ckpt.manifest;
  manifest["format"] = 1;
  manifest["byte_order"] = "little";
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.blobs) {
    std::size_t nbytes = t.size() * sizeof(double);
    table.push_back({{"name", name},
                     {"dtype", "f64"},
                     {"shape", t.shape()},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
  }
  manifest["blobs"] = std::move(table);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  std::string m = manifest.dump();
  os << kCheckpointMagic << '\n' << m.size() << '\n' << m;
  for (const auto& [name, t] : ckpt.blobs) detail::write_doubles(os, t);
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string magic;
  if (!std::getline(is, magic) || magic != kCheckpointMagic)
    throw std::runtime_error(path + ": bad checkpoint magic");
  std::string len_line;
  if (!std::getline(is, len_line)) throw std::runtime_error(path + ": missing manifest length");
  std::size_t mlen = 0;
  try {
    mlen = std::stoul(len_line);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": bad manifest length");
  }
  std::string mtext(mlen, '\0');
  if (!is.read(mtext.data(), std::streamsize(mlen)))
    throw std::runtime_error(path + ": truncated manifest");

  Checkpoint ckpt;
  try {
    ckpt.manifest = nlohmann::json::parse(mtext);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": manifest parse error: " + e.what());
  }
  if (ckpt.manifest.value("format", 0) != 1)
    throw std::runtime_error(path + ": unsupported checkpoint format");

  std::vector<char> region{std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>()};
  for (const auto& entry : ckpt.manifest.value("blobs", nlohmann::json::array())) {
    std::string name = entry.at("name").get<std::string>();
    if (entry.at("dtype").get<std::string>() != "f64")
      throw std::runtime_error(path + ": blob " + name + " has unsupported dtype");
    Shape shape = entry.at("shape").get<Shape>();
    std::size_t offset = entry.at("offset").get<std::size_t>();
    std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
    Tensor<double> t(shape);
    if (t.size() * sizeof(double) != nbytes)
      throw std::runtime_error(path + ": blob " + name + " shape/size mismatch");
    if (offset + nbytes > region.size())
      throw std::runtime_error(path + ": blob " + name + " extends past end of file");
    std::memcpy(t.data(), region.data() + offset, nbytes);
    ckpt.blobs.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace compander

#endif  // COMPANDER_CHECKPOINT_HPP
