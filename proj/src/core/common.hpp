// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_COMMON_HPP
#define CCL_CORE_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ccl {

enum class Status : int {
  Ok = 0,
  Io = 1,
  Schema = 2,
  InvalidConfig = 3,
  MissingFile = 4,
  BadMagic = 5,
  ShapeMismatch = 6,
  InvalidArgument = 7,
  ArchMismatch = 8,
  Internal = 9,
};

class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  Status status() const noexcept { return status_; }

 private:
  Status status_;
};

[[noreturn]] inline void fail(Status s, const std::string& msg) { throw Error(s, msg); }

}  // namespace ccl

#endif
