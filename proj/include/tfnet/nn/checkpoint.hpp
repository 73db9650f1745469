#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfnet/nn/graph.hpp"

namespace tfnet::nn {

struct TensorRecord {
  std::string name;
  Shape shape{0, 0, 0, 0};
  std::vector<float> data;
};

/// On-disk layout:
///   "TFNC" | u32 version | u64 manifest bytes | manifest (JSON text) | blob
/// The manifest holds free-form metadata under "meta" and, under
/// "tensors", one {name, shape, offset, count} entry per tensor; offset and
/// count are in float32 elements from the start of the blob. All numbers
/// are little-endian.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
  void put(std::string name, const Shape& shape, std::vector<float> data);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  std::string to_bytes() const;
  static Checkpoint from_bytes(const std::string& bytes);
};

template <typename T>
void export_parameters(const ParameterList<T>& params, Checkpoint& ckpt, const std::string& prefix = "");

/// Every parameter must be present with a matching shape (ErrorKind::kFormat).
template <typename T>
void import_parameters(const ParameterList<T>& params, const Checkpoint& ckpt,
                       const std::string& prefix = "");

}  // namespace tfnet::nn
