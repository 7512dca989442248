#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexsynth/common.hpp"

namespace dexsynth {

/// One named float64 array with an explicit shape.
struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // row-major

  std::int64_t element_count() const;
  static NamedArray from_matrix(std::string name, const MatX& m);
  MatX as_matrix() const;  // 2-D view: first dim x product of the rest
};

/// Binary array container:
///   bytes [0, 8)   magic "DXARRAY1"
///   bytes [8, 16)  header length H, uint64 little-endian
///   bytes [16, 16 + H) UTF-8 JSON header {"meta": ..., "arrays": [...]}
///   then every array's float64 little-endian payload, in header order.
/// Each header array entry holds name, shape, dtype "f64" and byte offset
/// relative to the start of the payload section.
struct ArrayFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void write(const std::filesystem::path& path) const;
  static ArrayFile read(const std::filesystem::path& path);
};

}  // namespace dexsynth
