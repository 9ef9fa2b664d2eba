// SPDX-License-Identifier: Apache-2.0
#include "core/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace ccl {

static_assert(std::endian::native == std::endian::little,
              "array payloads are written as-is and assume a little-endian host");

namespace {

void write_header(std::ostream& out, const char magic[8], const std::vector<int>& shape,
                  const std::string& context) {
  out.write(magic, 8);
  uint8_t rank = static_cast<uint8_t>(shape.size());
  out.write(reinterpret_cast<const char*>(&rank), 1);
  for (int d : shape) {
    uint32_t u = static_cast<uint32_t>(d);
    out.write(reinterpret_cast<const char*>(&u), 4);
  }
  if (!out) fail(Status::Io, "write failed: " + context);
}

std::vector<int> read_header(std::istream& in, const char magic[8], const std::string& context) {
  char m[8];
  in.read(m, 8);
  if (!in || std::memcmp(m, magic, 8) != 0)
    fail(Status::BadMagic, "bad magic bytes in " + context);
  uint8_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), 1);
  if (!in) fail(Status::ShapeMismatch, "truncated rank byte in " + context);
  std::vector<int> shape(rank);
  for (uint8_t i = 0; i < rank; ++i) {
    uint32_t u = 0;
    in.read(reinterpret_cast<char*>(&u), 4);
    if (!in) fail(Status::ShapeMismatch, "truncated dim header in " + context);
    shape[i] = static_cast<int>(u);
  }
  return shape;
}

template <typename T>
void read_payload(std::istream& in, std::vector<T>& out, int64_t n, const std::string& context) {
  out.resize(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(out.data()), n * static_cast<int64_t>(sizeof(T)));
  if (in.gcount() != n * static_cast<int64_t>(sizeof(T)))
    fail(Status::ShapeMismatch, "shape mismatch: payload shorter than dim header in " + context);
}

}  // namespace

void write_array_f32(std::ostream& out, const FloatArray& a, const std::string& context) {
  write_header(out, kArrayMagicF32, a.shape, context);
  out.write(reinterpret_cast<const char*>(a.v.data()),
            static_cast<int64_t>(a.v.size() * sizeof(float)));
  if (!out) fail(Status::Io, "write failed: " + context);
}

FloatArray read_array_f32(std::istream& in, const std::string& context) {
  FloatArray a;
  a.shape = read_header(in, kArrayMagicF32, context);
  read_payload(in, a.v, Tensor::count(a.shape), context);
  return a;
}

void write_array_f64(std::ostream& out, const Tensor& a, const std::string& context) {
  write_header(out, kArrayMagicF64, a.shape, context);
  out.write(reinterpret_cast<const char*>(a.v.data()),
            static_cast<int64_t>(a.v.size() * sizeof(double)));
  if (!out) fail(Status::Io, "write failed: " + context);
}

Tensor read_array_f64(std::istream& in, const std::string& context) {
  Tensor a;
  a.shape = read_header(in, kArrayMagicF64, context);
  read_payload(in, a.v, Tensor::count(a.shape), context);
  return a;
}

void write_array_file_f32(const std::string& path, const FloatArray& a) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Status::Io, "cannot open for writing: " + path);
  write_array_f32(out, a, path);
}

FloatArray read_array_file_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Status::MissingFile, "missing file: " + path);
  FloatArray a = read_array_f32(in, path);
  // Standalone array files must end exactly where the header says they do.
  if (in.peek() != std::istream::traits_type::eof())
    fail(Status::ShapeMismatch, "shape mismatch: payload longer than dim header in " + path);
  return a;
}

}  // namespace ccl
