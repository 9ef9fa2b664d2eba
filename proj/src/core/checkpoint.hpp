// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_CHECKPOINT_HPP
#define CCL_CORE_CHECKPOINT_HPP

#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ccl {

// Single-file archive: text metadata plus named f64 arrays. Metadata keys are
// sorted and arrays are written in insertion order, so identical state always
// produces identical bytes.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> arrays;

  void add_array(std::string name, Tensor t) { arrays.emplace_back(std::move(name), std::move(t)); }
  const Tensor& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
  int64_t meta_int(const std::string& key) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace ccl

#endif
