#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sckd/config.hpp"
#include "sckd/error.hpp"

using namespace sckd;

TEST_CASE("empty object gives the defaults") {
  const RunConfig c = parse_config("{}");
  CHECK(c == RunConfig{});
  CHECK(c.distill.sigma == 0.1);
  CHECK(c.distill.alpha == 3e-4);
  CHECK(c.optimizer.weight_decay == 0.01);
}

TEST_CASE("parse -> serialize -> parse is the identity") {
  RunConfig c;
  c.seed = 17;
  c.scene.n_objects = {1, 2, 3};
  c.model.encoder.conv3d_channels = {4, 6, 8};
  c.model.fusion.weight_mode = FusionWeightMode::kScalar;
  c.eval.mode = ApMode::kAP40;
  c.eval.iou_kind = IouKind::kBev;
  c.eval.region = Region{0, 10, -3, 3};
  c.ablation = {preset_variant("gt", c.distill), preset_variant("sckd", c.distill)};
  c.ablation[1].student_unlabeled = 5;
  c.ablation_seeds = {4, 5};
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config(text);
  CHECK(back == c);
  CHECK(serialize_config(back) == text);
}

TEST_CASE("strict parsing") {
  CHECK_THROWS_AS(parse_config("{\"sed\": 1}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"distill\": {\"sigma\": \"high\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"distill\": {\"sigma\": 0.1, \"gamma\": 2}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"eval\": {\"mode\": \"AP12\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"scene\": {\"radar_density_ratio\": 0.5}}"), ConfigError);
  CHECK_THROWS_AS(parse_config("{\"ablation\": {\"variants\": [{\"preset\": \"nope\"}]}}"), ConfigError);
  try {
    parse_config("{\"model\": {\"fusion\": {\"p_dorp\": 0.2}}}");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("p_dorp") != std::string::npos);
  }
}

TEST_CASE("ablation presets") {
  const DistillConfig base;
  const auto gt = preset_variant("gt", base);
  CHECK(gt.distill.use_gt);
  CHECK(!gt.distill.use_ssod);
  CHECK(gt.distill.alpha == 0.0);
  CHECK(gt.distill.beta == 0.0);
  const auto ssod = preset_variant("ssod", base);
  CHECK(!ssod.distill.use_gt);
  CHECK(ssod.distill.alpha == 0.0);
  CHECK(ssod.distill.beta == 0.0);
  const auto full = preset_variant("sckd", base);
  CHECK(full.distill.use_ssod);
  CHECK(full.distill.alpha == base.alpha);
  CHECK(full.distill.beta == base.beta);
  CHECK(!full.distill.use_gt);

  const RunConfig c = parse_config(
      "{\"ablation\": {\"seeds\": [7], \"variants\": [{\"preset\": \"sckd\", \"name\": \"sckd+\", "
      "\"student_unlabeled\": 20}, {\"name\": \"custom\", \"distill\": {\"alpha\": 0.5}}]}}");
  REQUIRE(c.ablation.size() == 2);
  CHECK(c.ablation[0].name == "sckd+");
  CHECK(c.ablation[0].student_unlabeled == 20);
  CHECK(c.ablation[1].distill.alpha == 0.5);
  CHECK(c.ablation_seeds == std::vector<std::uint64_t>{7});
}

TEST_CASE("model validation") {
  ModelConfig m;
  CHECK_NOTHROW(validate(m));
  m.radar_grid.voxel_size[0] = 0.2;
  CHECK_THROWS_AS(validate(m), ConfigError);
  m = ModelConfig{};
  m.encoder.bev_stride = 3;
  CHECK_THROWS_AS(validate(m), ConfigError);
  m = ModelConfig{};
  m.anchors.pos_iou[0] = 0.3;
  CHECK_THROWS_AS(validate(m), ConfigError);
  DistillConfig d;
  d.adapter_kernel = 2;
  CHECK_THROWS_AS(validate(d), ConfigError);
  d = DistillConfig{};
  d.use_ssod = false;
  d.alpha = d.beta = 0.0;
  CHECK_THROWS_AS(validate(d), ConfigError);
}

TEST_CASE("model config hash tracks shape settings") {
  ModelConfig a, b;
  CHECK(model_config_hash(a) == model_config_hash(b));
  b.encoder.out_channels = 16;
  CHECK(model_config_hash(a) != model_config_hash(b));
  CHECK(parse_model_config(serialize_model_config(b)) == b);
}

TEST_CASE("load_config reads files") {
  const auto p = std::filesystem::temp_directory_path() / "sckd_test_config.json";
  {
    std::ofstream(p) << "{\"seed\": 5, \"train\": {\"batch_size\": 2}}";
  }
  const RunConfig c = load_config(p);
  CHECK(c.seed == 5);
  CHECK(c.train.batch_size == 2);
  CHECK_THROWS_AS(load_config("/nonexistent/sckd.json"), ConfigError);
}
