#include "pronet/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace pronet {

namespace {

std::string array_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "array_%04d.bin", index);
  return buf;
}

void write_bytes(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to " + path.string());
}

void read_bytes(const fs::path& path, void* data, std::size_t bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (in.gcount() != static_cast<std::streamsize>(bytes))
    throw IoError("short read from " + path.string());
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

const ArrayEntry& Container::require(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw IoError("checkpoint is missing array '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

void save_container(const Container& c, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = c.format_version;
  manifest["meta"] = c.meta;
  auto& list = manifest["arrays"] = nlohmann::json::array();
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    const ArrayEntry& a = c.arrays[i];
    const std::string file = array_filename(static_cast<int>(i));
    list.push_back({{"name", a.name},
                    {"shape", a.shape},
                    {"dtype", a.dtype},
                    {"file", file}});
    if (a.dtype == "float32") {
      if (static_cast<std::size_t>(a.f32.size()) != element_count(a.shape))
        throw IoError("array '" + a.name + "' size does not match its shape");
      write_bytes(fs::path(dir) / file, a.f32.data(), a.f32.size() * 4);
    } else if (a.dtype == "int32") {
      if (a.i32.size() != element_count(a.shape))
        throw IoError("array '" + a.name + "' size does not match its shape");
      write_bytes(fs::path(dir) / file, a.i32.data(), a.i32.size() * 4);
    } else {
      throw IoError("array '" + a.name + "' has unsupported dtype " + a.dtype);
    }
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Container load_container(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw IoError("cannot open manifest in " + dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupted manifest in " + dir + ": " + e.what());
  }
  Container c;
  if (!manifest.contains("format_version"))
    throw IoError("manifest missing field 'format_version'");
  c.format_version = manifest["format_version"];
  if (c.format_version != 1)
    throw IoError("unsupported checkpoint format_version " +
                  std::to_string(c.format_version));
  c.meta = manifest.value("meta", nlohmann::json::object());
  if (!manifest.contains("arrays"))
    throw IoError("manifest missing field 'arrays'");
  for (const auto& entry : manifest["arrays"]) {
    ArrayEntry a;
    a.name = entry.at("name");
    a.shape = entry.at("shape").get<std::vector<int>>();
    a.dtype = entry.at("dtype");
    const std::string file = entry.at("file");
    const std::size_t n = element_count(a.shape);
    if (a.dtype == "float32") {
      a.f32.resize(static_cast<Eigen::Index>(n));
      read_bytes(fs::path(dir) / file, a.f32.data(), n * 4);
    } else if (a.dtype == "int32") {
      a.i32.resize(n);
      read_bytes(fs::path(dir) / file, a.i32.data(), n * 4);
    } else {
      throw IoError("array '" + a.name + "' has unsupported dtype " + a.dtype);
    }
    c.arrays.push_back(std::move(a));
  }
  return c;
}

}  // namespace pronet
