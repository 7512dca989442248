#include "dexsynth/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace dexsynth {

namespace {

constexpr char kMagic[8] = {'D', 'X', 'A', 'R', 'R', 'A', 'Y', '1'};

static_assert(std::endian::native == std::endian::little, "array files assume a little-endian host");

}  // namespace

std::int64_t NamedArray::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

NamedArray NamedArray::from_matrix(std::string name, const MatX& m) {
  NamedArray a;
  a.name = std::move(name);
  a.shape = {m.rows(), m.cols()};
  a.data.assign(m.data(), m.data() + m.size());
  return a;
}

MatX NamedArray::as_matrix() const {
  if (shape.empty()) throw Error("array '" + name + "' has no shape");
  const std::int64_t rows = shape[0];
  const std::int64_t cols = rows == 0 ? 0 : element_count() / rows;
  MatX m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

const NamedArray& ArrayFile::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw Error("array file has no array named '" + name + "'");
}

bool ArrayFile::has(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

void ArrayFile::write(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : arrays) {
    if (static_cast<std::int64_t>(a.data.size()) != a.element_count()) {
      throw Error("array '" + a.name + "': data size does not match shape");
    }
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", "f64"}, {"offset", offset}});
    offset += a.data.size() * sizeof(double);
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write array file " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays) {
    out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  if (!out) throw Error("failed while writing array file " + path.string());
}

ArrayFile ArrayFile::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read array file " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(path.string() + ": not an array file (bad magic)");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ull << 32)) throw Error(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(path.string() + ": truncated header");

  ArrayFile file;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed header: " + e.what());
  }
  file.meta = header.value("meta", nlohmann::json::object());
  const auto payload_start = in.tellg();
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    if (entry.value("dtype", "f64") != "f64") throw Error(path.string() + ": unsupported dtype");
    const auto offset = entry.at("offset").get<std::uint64_t>();
    a.data.resize(static_cast<size_t>(a.element_count()));
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    if (!in) throw Error(path.string() + ": truncated payload for '" + a.name + "'");
    file.arrays.push_back(std::move(a));
  }
  return file;
}

}  // namespace dexsynth
