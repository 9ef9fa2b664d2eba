// SPDX-License-Identifier: Apache-2.0
#ifndef CCL_CORE_ARRAY_IO_HPP
#define CCL_CORE_ARRAY_IO_HPP

#include <iosfwd>
#include <string>

#include "core/tensor.hpp"

namespace ccl {

// Binary array container: 8-byte magic, u8 rank, rank x u32 dims (LE), then
// row-major little-endian payload. "CCLARR01" carries 32-bit floats and is the
// corpus interchange format; "CCLARR02" carries 64-bit floats and is used where
// bit-exact state (checkpoints) matters.
inline constexpr char kArrayMagicF32[8] = {'C', 'C', 'L', 'A', 'R', 'R', '0', '1'};
inline constexpr char kArrayMagicF64[8] = {'C', 'C', 'L', 'A', 'R', 'R', '0', '2'};

void write_array_f32(std::ostream& out, const FloatArray& a, const std::string& context);
FloatArray read_array_f32(std::istream& in, const std::string& context);

void write_array_f64(std::ostream& out, const Tensor& a, const std::string& context);
Tensor read_array_f64(std::istream& in, const std::string& context);

void write_array_file_f32(const std::string& path, const FloatArray& a);
FloatArray read_array_file_f32(const std::string& path);

}  // namespace ccl

#endif
