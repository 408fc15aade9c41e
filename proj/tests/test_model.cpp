#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "objn/checkpoint.hpp"
#include "objn/model.hpp"

using namespace objn;
namespace fs = std::filesystem;

namespace {

NetworkConfig toy_bbox_config() {
  NetworkConfig cfg;
  cfg.in_channels = 3;
  cfg.in_h = cfg.in_w = 32;
  cfg.trunk = {ConvSpec{8, 5, 1, 2}, ReluSpec{}, MaxPoolSpec{2, 2},
               ConvSpec{8, 3, 1, 1}, ReluSpec{}, MaxPoolSpec{2, 2}, DenseSpec{64}, ReluSpec{}};
  cfg.feature_dim = 64;
  cfg.head = BBoxHead{BBoxGrid{}};  // 8*8*4*3 = 768 cells
  cfg.init_seed = 7;
  return cfg;
}

Tensor random_batch(std::int64_t n, const NetworkConfig& cfg, std::uint64_t seed) {
  Tensor batch({n, cfg.in_channels, cfg.in_h, cfg.in_w});
  std::mt19937_64 rng(seed);
  fill_uniform(batch, rng, 0.0, 1.0);
  return batch;
}

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "objn_model_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("build validates layer shapes and names the offender") {
  auto cfg = toy_bbox_config();
  cfg.feature_dim = 128;  // trunk actually ends in 64
  try {
    Model::build(cfg);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("trunk layer 7") != std::string::npos);
    CHECK(std::string(e.what()).find("feature_dim") != std::string::npos);
  }

  auto cfg2 = toy_bbox_config();
  std::get<MaxPoolSpec>(cfg2.trunk[2]).window = 64;  // larger than 32x32 input
  try {
    Model::build(cfg2);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("trunk layer 2 (maxpool)") != std::string::npos);
  }
}

TEST_CASE("same config and seed builds bitwise-identical parameters") {
  const auto cfg = toy_bbox_config();
  const auto a = Model::build(cfg);
  const auto b = Model::build(cfg);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(std::memcmp(a.params()[i].data(), b.params()[i].data(),
                      sizeof(float) * a.params()[i].size()) == 0);
}

TEST_CASE("toy bbox config produces 4x768 logits") {
  const auto cfg = toy_bbox_config();
  const auto model = Model::build(cfg);
  const auto logits = model.forward(random_batch(4, cfg, 11));
  CHECK(logits.dims() == std::vector<std::int64_t>{4, 768});
  CHECK(all_finite(logits));
}

TEST_CASE("forward rejects mismatched batches") {
  const auto model = Model::build(toy_bbox_config());
  Tensor bad({2, 3, 16, 16});
  CHECK_THROWS_AS(model.forward(bad), ModelError);
}

TEST_CASE("batch forward equals per-row forward") {
  const auto cfg = toy_bbox_config();
  const auto model = Model::build(cfg);
  const auto batch = random_batch(3, cfg, 13);
  const auto logits = model.forward(batch);
  for (std::int64_t r = 0; r < 3; ++r) {
    Tensor row({1, cfg.in_channels, cfg.in_h, cfg.in_w});
    std::memcpy(row.data(), batch.data() + r * row.size(), sizeof(float) * row.size());
    const auto single = model.forward(row);
    for (std::int64_t j = 0; j < single.size(); ++j) {
      const double a = logits[r * single.size() + j], b = single[j];
      CHECK(std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}) < 1e-5);
    }
  }
}

TEST_CASE("checkpoint round trip reproduces forward bitwise") {
  const auto cfg = toy_bbox_config();
  const auto model = Model::build(cfg);
  const auto path = (temp_dir() / "roundtrip.ckpt").string();
  save_checkpoint(model, path);
  const auto loaded = load_checkpoint(path);
  const auto batch = random_batch(2, cfg, 17);
  const auto a = model.forward(batch);
  const auto b = loaded.forward(batch);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
}

TEST_CASE("checkpoint corruption yields distinct errors") {
  const auto cfg = toy_bbox_config();
  const auto model = Model::build(cfg);
  const auto dir = temp_dir();
  const auto path = (dir / "base.ckpt").string();
  save_checkpoint(model, path);

  const auto read_all = [&]() {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  const auto write_all = [&](const std::string& name, const std::string& bytes) {
    const auto p = (dir / name).string();
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return p;
  };

  auto bytes = read_all();

  auto corrupt = bytes;
  corrupt[0] = 'X';
  try {
    load_checkpoint(write_all("badmagic.ckpt", corrupt));
    FAIL("expected bad magic");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
  }

  auto vers = bytes;
  vers[4] = 99;
  try {
    load_checkpoint(write_all("badver.ckpt", vers));
    FAIL("expected version error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  try {
    load_checkpoint(write_all("trunc.ckpt", bytes.substr(0, bytes.size() - 64)));
    FAIL("expected truncation error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  // drop the last tensor: count says N but fewer are present -> truncated;
  // instead rewrite the count to N-1 so one named parameter goes missing
  auto missing = bytes;
  const std::size_t count_pos = 4 + 4 + 1 + 4 + network_config_to_json(cfg).size();
  std::uint32_t count;
  std::memcpy(&count, missing.data() + count_pos, 4);
  // find where the last tensor record starts: "head.bias"
  const std::string needle = std::string("\x09", 1) + std::string("\x00", 1) + "head.bias";
  const auto pos = missing.find(needle);
  REQUIRE(pos != std::string::npos);
  missing.resize(pos);
  count -= 1;
  std::memcpy(missing.data() + count_pos, &count, 4);
  try {
    load_checkpoint(write_all("missing.ckpt", missing));
    FAIL("expected missing parameter");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("missing parameter 'head.bias'") != std::string::npos);
  }
}

TEST_CASE("head swap copies the trunk and re-initializes the head") {
  NetworkConfig cls = toy_bbox_config();
  cls.head = ClassificationHead{10};
  cls.init_seed = 21;
  const auto cls_model = Model::build(cls);

  NetworkConfig det = toy_bbox_config();
  det.init_seed = 22;
  const auto swapped = head_swap(cls_model, det);

  // trunk tensors bitwise equal to the source
  for (std::size_t i = 0; i < swapped.param_names().size(); ++i) {
    const auto& name = swapped.param_names()[i];
    if (name.rfind("trunk.", 0) != 0) continue;
    const auto it = std::find(cls_model.param_names().begin(), cls_model.param_names().end(), name);
    REQUIRE(it != cls_model.param_names().end());
    const auto& src = cls_model.params()[static_cast<std::size_t>(it - cls_model.param_names().begin())];
    CHECK(std::memcmp(src.data(), swapped.params()[i].data(), sizeof(float) * src.size()) == 0);
  }

  // head freshly initialized with the new head's shape
  const auto& head_w = swapped.params()[swapped.params().size() - 2];
  CHECK(head_w.dims() == std::vector<std::int64_t>{64, 768});

  // bbox -> classification: head shaped feature_dim x num_classes
  NetworkConfig back = cls;
  back.init_seed = 23;
  const auto back_model = head_swap(swapped, back);
  CHECK(back_model.params()[back_model.params().size() - 2].dims() ==
        std::vector<std::int64_t>{64, 10});

  // source unchanged by the swap
  const auto rebuilt = Model::build(cls);
  for (std::size_t i = 0; i < rebuilt.params().size(); ++i)
    CHECK(std::memcmp(rebuilt.params()[i].data(), cls_model.params()[i].data(),
                      sizeof(float) * rebuilt.params()[i].size()) == 0);

  // swap then save/load keeps forward outputs identical
  const auto path = (temp_dir() / "swap.ckpt").string();
  save_checkpoint(swapped, path);
  const auto loaded = load_checkpoint(path);
  const auto batch = random_batch(2, det, 31);
  const auto a = swapped.forward(batch);
  const auto b = loaded.forward(batch);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);

  // trunk mismatch rejected
  NetworkConfig other = det;
  std::get<ConvSpec>(other.trunk[0]).out_channels = 4;
  other.trunk[6] = DenseSpec{64};
  CHECK_THROWS_AS(head_swap(cls_model, other), ModelError);
}

TEST_CASE("network config json echo round-trips") {
  NetworkConfig cfg;
  cfg.trunk = default_trunk();
  cfg.head = BBoxHead{BBoxGrid{}};
  cfg.init_seed = 123456789;
  const auto text = network_config_to_json(cfg);
  const auto back = network_config_from_json(text);
  CHECK(network_config_to_json(back) == text);
  CHECK_THROWS_AS(network_config_from_json("{not json"), ModelError);
}
