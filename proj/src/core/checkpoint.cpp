// SPDX-License-Identifier: Apache-2.0
#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "core/array_io.hpp"
#include "core/common.hpp"

namespace ccl {

namespace {
constexpr char kMagic[8] = {'C', 'C', 'L', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& in, const std::string& ctx) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) fail(Status::Io, "truncated checkpoint: " + ctx);
  return v;
}
}  // namespace

const Tensor& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  fail(Status::Schema, "checkpoint missing array: " + name);
}

bool Checkpoint::has_array(const std::string& name) const {
  for (const auto& [n, _] : arrays)
    if (n == name) return true;
  return false;
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) fail(Status::Schema, "checkpoint missing metadata key: " + key);
  return it->second;
}

int64_t Checkpoint::meta_int(const std::string& key) const {
  try {
    return std::stoll(meta_at(key));
  } catch (const std::exception&) {
    fail(Status::Schema, "non-numeric checkpoint metadata for key: " + key);
  }
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Status::Io, "cannot open for writing: " + path);
  out.write(kMagic, 8);

  std::ostringstream meta_text;
  for (const auto& [k, v] : meta) {
    if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
      fail(Status::InvalidArgument, "checkpoint metadata must be single-line");
    meta_text << k << '=' << v << '\n';
  }
  const std::string m = meta_text.str();
  write_u32(out, static_cast<uint32_t>(m.size()));
  out.write(m.data(), static_cast<int64_t>(m.size()));

  write_u32(out, static_cast<uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<int64_t>(name.size()));
    write_array_f64(out, t, path + ":" + name);
  }
  if (!out) fail(Status::Io, "write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Status::MissingFile, "missing file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    fail(Status::BadMagic, "bad magic bytes in " + path);

  Checkpoint ck;
  const uint32_t meta_len = read_u32(in, path);
  std::string m(meta_len, '\0');
  in.read(m.data(), meta_len);
  if (!in) fail(Status::Io, "truncated checkpoint metadata: " + path);
  std::istringstream ms(m);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(Status::Schema, "bad metadata line in " + path);
    ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const uint32_t count = read_u32(in, path);
  ck.arrays.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) fail(Status::Io, "truncated checkpoint array name: " + path);
    ck.arrays.emplace_back(name, read_array_f64(in, path + ":" + name));
  }
  return ck;
}

}  // namespace ccl
