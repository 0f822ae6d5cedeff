#include <doctest.h>

#include <cstring>

#include "liquiform/checkpoint.hpp"
#include "liquiform/error.hpp"
#include "liquiform/io.hpp"
#include "liquiform/rng.hpp"
#include "temp_dir.hpp"

using namespace liquiform;

namespace {

NetworkConfig config(int base, int size, std::uint64_t seed) {
  NetworkConfig c;
  c.base_channels = base;
  c.height = c.width = size;
  c.seed = seed;
  return c;
}

Tensor<float> random_batch(Rng& rng, Shape s) {
  std::vector<float> v(static_cast<std::size_t>(element_count(s)));
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Tensor<float>(s, std::move(v));
}

std::vector<float> values(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("save then load is bit-exact and reproduces forward outputs") {
    testing::TempDir tmp;
    Rng rng(3);
    for (auto kind : {NetworkKind::rectification, NetworkKind::refinement, NetworkKind::discriminator}) {
      auto net = build_network<float>(kind, config(4, 32, 11));
      const auto x = random_batch(rng, {2, 3, 32, 32});
      // A train-mode pass moves the batch-norm running moments off their defaults.
      net->forward(x, Mode::train);
      if (kind == NetworkKind::refinement) {
        for (auto& v : refinement_output_layer(*net).first.mutable_data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
      }
      const auto path = tmp / (to_string(kind) + ".ckpt");
      save_checkpoint(*net, path);
      const auto records = load_checkpoint(path);
      CHECK(records == checkpoint_records(*net));

      auto other = build_network<float>(kind, config(4, 32, 99));
      CHECK(values(other->forward(x, Mode::eval)) != values(net->forward(x, Mode::eval)));
      load_into(*other, records);
      CHECK(values(other->forward(x, Mode::eval)) == values(net->forward(x, Mode::eval)));

      auto rebuilt = load_network(path);
      CHECK(rebuilt->kind() == kind);
      CHECK(values(rebuilt->forward(x, Mode::eval)) == values(net->forward(x, Mode::eval)));
      CHECK(encode_checkpoint(checkpoint_records(*rebuilt)) == read_file(path));
    }
  }

  TEST_CASE("header layout") {
    auto net = build_refinement<float>(config(2, 16, 1));
    const std::string bytes = encode_checkpoint(checkpoint_records(*net));
    CHECK(bytes.compare(0, 8, "LQFYCKPT") == 0);
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(static_cast<unsigned char>(bytes[9]) == 0);
    bool has_meta = false, has_running = false, has_slope = false;
    for (const auto& r : decode_checkpoint(bytes)) {
      has_meta = has_meta || r.name == kMetaRecord;
      has_running = has_running || r.name.find("running_var") != std::string::npos;
      has_slope = has_slope || r.name.find("slope") != std::string::npos;
    }
    CHECK(has_meta);
    CHECK(has_running);
    CHECK(has_slope);
  }

  TEST_CASE("corrupt files are rejected") {
    auto net = build_refinement<float>(config(2, 16, 1));
    const std::string good = encode_checkpoint(checkpoint_records(*net));

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
    std::string bad_version = good;
    bad_version[8] = 2;
    CHECK_THROWS_AS(decode_checkpoint(bad_version), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(good.substr(0, good.size() - 1)), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(good.substr(0, 9)), FormatError);

    std::string rank0 = good.substr(0, 10);
    put_u32(rank0, 1);
    rank0 += "w";
    put_u32(rank0, 0);
    CHECK_THROWS_AS(decode_checkpoint(rank0), FormatError);

    testing::TempDir tmp;
    write_file_atomic(tmp / "bad.ckpt", bad_magic);
    CHECK_THROWS_AS(load_checkpoint(tmp / "bad.ckpt"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(tmp / "missing.ckpt"), IoError);
  }

  TEST_CASE("load_into rejects records for a different network") {
    auto small = build_rectification<float>(config(2, 16, 1));
    auto wide = build_rectification<float>(config(4, 16, 1));
    CHECK_THROWS_AS(load_into(*wide, checkpoint_records(*small)), FormatError);
    auto refine = build_refinement<float>(config(2, 16, 1));
    CHECK_THROWS_AS(load_into(*refine, checkpoint_records(*small)), FormatError);
    auto records = checkpoint_records(*small);
    records.push_back({"stray", {1}, {0.0f}});
    CHECK_THROWS_AS(load_into(*small, records), FormatError);
  }

  TEST_CASE("generators are rebuilt at a new image size") {
    testing::TempDir tmp;
    auto net = build_rectification<float>(config(2, 32, 5));
    save_checkpoint(*net, tmp / "g.ckpt");
    auto big = load_network(tmp / "g.ckpt", 64, 48);
    Rng rng(4);
    CHECK(big->forward(random_batch(rng, {1, 3, 64, 48}), Mode::eval).shape() == Shape{1, 3, 64, 48});
  }
}
