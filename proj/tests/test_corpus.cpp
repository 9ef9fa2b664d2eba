// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "core/array_io.hpp"
#include "core/corpus.hpp"

using namespace ccl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("ccl_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CorpusSpec small_spec() {
  CorpusSpec spec;
  spec.num_classes = 2;
  spec.samples_per_class = 3;
  spec.t_raw = 12;
  spec.height = 16;
  spec.width = 16;
  spec.num_signers = 2;
  spec.seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("array file round-trips bitwise") {
  FloatArray a({3, 4, 2});
  Rng rng(7);
  for (auto& v : a.v) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  auto dir = temp_dir("arr");
  auto path = (dir / "x.bin").string();
  write_array_file_f32(path, a);
  FloatArray b = read_array_file_f32(path);
  CHECK(b.shape == a.shape);
  CHECK(b.v == a.v);
}

TEST_CASE("array file rejects bad magic and truncation") {
  auto dir = temp_dir("arrbad");
  auto path = (dir / "x.bin").string();
  FloatArray a({2, 2});
  write_array_file_f32(path, a);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXLARR01", 8);
  }
  CHECK_THROWS_WITH_AS(read_array_file_f32(path), doctest::Contains("bad magic"), Error);

  write_array_file_f32(path, a);
  {
    // corrupt one dim so the header promises more data than the payload holds
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(9);
    uint32_t dim = 50;
    f.write(reinterpret_cast<const char*>(&dim), 4);
  }
  try {
    read_array_file_f32(path);
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    CHECK(e.status() == Status::ShapeMismatch);
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
}

TEST_CASE("generate_corpus counts and label order") {
  auto samples = generate_corpus(small_spec());
  REQUIRE(samples.size() == 6);
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  CHECK(labels == std::vector<int>{0, 0, 0, 1, 1, 1});
  for (const auto& s : samples) {
    s.clip.validate();
    s.pose.validate();
    CHECK(s.clip.num_frames() == s.pose.frames());
  }
}

TEST_CASE("generate_corpus is deterministic") {
  auto a = generate_corpus(small_spec());
  auto b = generate_corpus(small_spec());
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clip.frames.v == b[i].clip.frames.v);
    CHECK(a[i].pose.joints.v == b[i].pose.joints.v);
  }
}

TEST_CASE("num_signers controls distinct background colors") {
  CorpusSpec spec = small_spec();
  spec.num_signers = 4;
  spec.samples_per_class = 8;
  auto samples = generate_corpus(spec);
  // corner pixel is never covered by the skeleton
  std::set<std::tuple<float, float, float>> colors;
  for (const auto& s : samples) {
    const float* px = &s.clip.frames[0];
    colors.insert({px[0], px[1], px[2]});
  }
  CHECK(colors.size() == 4);
}

TEST_CASE("pose joints overlap rendered foreground") {
  auto samples = generate_corpus(small_spec());
  for (const auto& s : samples) {
    const int T = s.clip.num_frames(), H = s.clip.height(), W = s.clip.width();
    const int J = s.pose.num_joints();
    const float* bg = &s.clip.frames[0];
    double bg_mean = (bg[0] + bg[1] + bg[2]) / 3.0;
    double joint_mean = 0.0;
    int count = 0;
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j) {
        const float* p = &s.pose.joints[(static_cast<int64_t>(t) * J + j) * 3];
        int x = std::min(W - 1, std::max(0, static_cast<int>(std::lround(p[0] * (W - 1)))));
        int y = std::min(H - 1, std::max(0, static_cast<int>(std::lround(p[1] * (H - 1)))));
        const float* px = &s.clip.frames[((static_cast<int64_t>(t) * H + y) * W + x) * 3];
        joint_mean += (px[0] + px[1] + px[2]) / 3.0;
        ++count;
      }
    joint_mean /= count;
    CHECK(joint_mean > bg_mean);
  }
}

TEST_CASE("corpus write/read round-trips bitwise") {
  auto samples = generate_corpus(small_spec());
  auto dir = temp_dir("corpus");
  std::string manifest = write_corpus(samples, dir.string());
  auto loaded = read_corpus(manifest);
  REQUIRE(loaded.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].id == samples[i].id);
    CHECK(loaded[i].label == samples[i].label);
    CHECK(loaded[i].signer == samples[i].signer);
    CHECK(loaded[i].clip.frames.v == samples[i].clip.frames.v);
    CHECK(loaded[i].pose.joints.v == samples[i].pose.joints.v);
  }
}

TEST_CASE("empty corpus writes a header-only manifest") {
  auto dir = temp_dir("empty");
  std::string manifest = write_corpus({}, dir.string());
  std::ifstream in(manifest);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "id\tlabel\tsigner\trgb_file\tpose_file");
  CHECK_FALSE(std::getline(in, line));
  CHECK(read_corpus(manifest).empty());
}

TEST_CASE("manifest line count matches sample count") {
  auto samples = generate_corpus(small_spec());
  auto dir = temp_dir("count");
  std::string manifest = write_corpus(samples, dir.string());
  std::ifstream in(manifest);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 7);  // header + 6 records
}

TEST_CASE("read_corpus distinguishes missing file from shape mismatch") {
  auto samples = generate_corpus(small_spec());
  auto dir = temp_dir("errors");
  std::string manifest = write_corpus(samples, dir.string());

  SUBCASE("missing file") {
    fs::remove(dir / "rgb_000002.bin");
    try {
      read_corpus(manifest);
      FAIL("expected missing file error");
    } catch (const Error& e) {
      CHECK(e.status() == Status::MissingFile);
      CHECK(std::string(e.what()).find("rgb_000002.bin") != std::string::npos);
    }
  }
  SUBCASE("corrupted dim header") {
    auto victim = (dir / "pose_000001.bin").string();
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(9);
    uint32_t dim = 9999;
    f.write(reinterpret_cast<const char*>(&dim), 4);
    f.close();
    try {
      read_corpus(manifest);
      FAIL("expected shape mismatch");
    } catch (const Error& e) {
      CHECK(e.status() == Status::ShapeMismatch);
      CHECK(std::string(e.what()).find("pose_000001.bin") != std::string::npos);
    }
  }
}

TEST_CASE("invalid corpus spec is rejected") {
  CorpusSpec spec = small_spec();
  spec.num_classes = 0;
  CHECK_THROWS_AS(generate_corpus(spec), Error);
  spec = small_spec();
  spec.t_raw = 1;
  CHECK_THROWS_AS(generate_corpus(spec), Error);
}
