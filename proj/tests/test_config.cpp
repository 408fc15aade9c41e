#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "objn/config.hpp"
#include "objn/errors.hpp"

using namespace objn;

TEST_CASE("defaults parse into valid module configs") {
  const auto cfg = RunConfig::defaults();
  CHECK_NOTHROW(cfg.synth());
  CHECK_NOTHROW(cfg.grid());
  CHECK_NOTHROW(cfg.network_classification());
  CHECK_NOTHROW(cfg.network_bbox());
  CHECK_NOTHROW(cfg.train());
  CHECK(cfg.grid().total_cells() == 768);
  CHECK(cfg.network_bbox().head_size() == 768);
  CHECK(cfg.network_classification().head_size() == 10);
}

TEST_CASE("unknown keys are rejected by name") {
  try {
    RunConfig::from_text("foo.bar = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("foo.bar") != std::string::npos);
  }
}

TEST_CASE("values override defaults and re-validate") {
  const auto cfg = RunConfig::from_text(
      "data.num_classes = 4\n"
      "grid.nx = 2  # comment after value\n"
      "# full-line comment\n"
      "train.lr = 0.5\n");
  CHECK(cfg.synth().num_classes == 4);
  CHECK(cfg.grid().nx == 2);
  CHECK(cfg.train().lr == doctest::Approx(0.5));

  CHECK_THROWS_AS(RunConfig::from_text("train.lr = fast\n").train(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("grid.nx = 0\n").grid(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("data.num_classes = 99\n").synth(), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("no equals sign\n"), ConfigError);
}

TEST_CASE("trunk spec strings parse into layer lists") {
  const auto trunk = parse_trunk("conv:16:5:1:2,relu,lrn,maxpool:2:2,dense:128,relu");
  REQUIRE(trunk.size() == 6);
  const auto& conv = std::get<ConvSpec>(trunk[0]);
  CHECK(conv.out_channels == 16);
  CHECK(conv.kernel == 5);
  CHECK(conv.pad == 2);
  CHECK(std::holds_alternative<LrnSpec>(trunk[2]));
  CHECK(std::get<LrnSpec>(trunk[2]).params.n == 5);  // default params
  CHECK(std::get<DenseSpec>(trunk[4]).out_features == 128);

  const auto custom = parse_trunk("conv:8:3:1:1,lrn:1.5:3:0.001:0.5,dense:32");
  CHECK(std::get<LrnSpec>(custom[1]).params.n == 3);
  CHECK(std::get<LrnSpec>(custom[1]).params.beta == doctest::Approx(0.5));

  CHECK_THROWS_AS(parse_trunk("conv:8:3"), ConfigError);
  CHECK_THROWS_AS(parse_trunk("warp:1"), ConfigError);
  CHECK_THROWS_AS(parse_trunk(""), ConfigError);
}

TEST_CASE("class lists parse") {
  CHECK(parse_class_list("8,9") == std::set<int>{8, 9});
  CHECK(parse_class_list("") == std::set<int>{});
  CHECK(parse_class_list(" 3 , 1 ") == std::set<int>{1, 3});
  CHECK_THROWS_AS(parse_class_list("a,b"), ConfigError);
}

TEST_CASE("experiment config wires nms score threshold separately") {
  const auto cfg = RunConfig::from_text("experiment.score_min = 0\nnms.score_min = 0.01\n");
  CHECK(cfg.nms().score_threshold == doctest::Approx(0.01));
  CHECK(cfg.experiment().eval.nms.score_threshold == doctest::Approx(0.0));
  CHECK(cfg.experiment().held_out == std::set<int>{8, 9});
}
