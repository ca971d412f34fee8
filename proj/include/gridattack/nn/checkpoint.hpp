#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridattack/nn/layers.hpp"

namespace gridattack::nn {

/// Named weight tensors plus metadata, stored in a versioned binary
/// container:
///
///   magic "GACKPT01" | u32 version | u64 meta length | meta JSON |
///   u64 digest length | digest | u64 tensor count |
///   per tensor: u64 name length | name | u64 rows | u64 cols | rows*cols f64 (row-major)
///
/// Integers and doubles are little-endian; values round-trip bit for bit.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Tensor {
    std::string name;
    Matrix value;
  };

  nlohmann::json meta;
  std::string config_digest;
  std::vector<Tensor> tensors;

  void add(const std::string& prefix, const ParamRefs& params);
  /// Copy tensors named prefix + param name into params. Throws
  /// Error{Compatibility} on missing names or shape mismatches.
  void load_into(const std::string& prefix, const ParamRefs& params) const;
  const Tensor* find(const std::string& name) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// 64-bit FNV-1a of a string, hex encoded.
std::string digest_hex(const std::string& text);

}  // namespace gridattack::nn
