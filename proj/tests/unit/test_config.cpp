#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "csmsckf/config.hpp"
#include "test_support.hpp"

using namespace csmsckf;

TEST_CASE("dump and parse round trip") {
  Config cfg;
  cfg.sim.seed = 42;
  cfg.sim.sigma_px = 0.75;
  cfg.sim.frame_offset_translation = Vec3(1.0, -2.0, 0.1);
  cfg.sim.trajectory.type = "circle";
  cfg.sim.match.dry_spell_duration = 90.0;
  cfg.filter.mode = Mode::kSingleMatch;
  cfg.filter.relin_shift_mean = true;
  cfg.filter.init_sigma_v = 0.1 / 3.0;
  cfg.filter.rel_transform_prior(3, 3) = 7.0;
  const std::string text = dump_config(cfg);
  const Config back = parse_config(text);
  CHECK(dump_config(back) == text);
  CHECK(back.sim.seed == 42);
  CHECK(back.sim.frame_offset_translation == cfg.sim.frame_offset_translation);
  CHECK(back.filter.mode == Mode::kSingleMatch);
  CHECK(back.filter.relin_shift_mean);
  CHECK(back.filter.init_sigma_v == cfg.filter.init_sigma_v);
  CHECK(back.filter.rel_transform_prior == cfg.filter.rel_transform_prior);
}

TEST_CASE("missing keys keep their defaults") {
  const Config cfg = parse_config("schema_version: 1\nsim:\n  match: {dry_spell_duration: 90}\n");
  CHECK(cfg.sim.match.dry_spell_duration == 90.0);
  CHECK(cfg.sim.match.period == MatchSimConfig{}.period);
  CHECK(cfg.filter.relinearize == EstimatorConfig{}.relinearize);
  CHECK(cfg.sim.map.sigma_p2 == 0.01);
  CHECK(cfg.sim.map.sigma_o2 == 0.00025);
}

TEST_CASE("schema and key errors") {
  CHECK_THROWS_WITH_AS(parse_config("sim: {seed: 3}\n"), doctest::Contains("schema_version"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_config("schema_version: 2\n"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("schema_version: 1\nsim: {sede: 3}\n"),
                       doctest::Contains("sim.sede"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("schema_version: 1\nfilter: {mode: slam}\n"), std::exception);
  CHECK_THROWS_AS(parse_config("schema_version: 1\nsim: {frame_offset_translation: [1, 2]}\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config("schema_version: 1\nsim: {imu_rate: -5}\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(""), std::invalid_argument);
  CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), std::runtime_error);
}

TEST_CASE("hash ignores the seed but not the rest") {
  Config a, b;
  b.sim.seed = 99;
  CHECK(config_hash(a) == config_hash(b));
  b.filter.mode = Mode::kMapConstant;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("load from disk") {
  const auto path = std::filesystem::temp_directory_path() / "csmsckf_test_config.yaml";
  {
    std::ofstream out(path);
    out << "schema_version: 1\nfilter:\n  mode: mapconst\n  relin_threshold_px: 15\n";
  }
  const Config cfg = load_config(path);
  CHECK(cfg.filter.mode == Mode::kMapConstant);
  CHECK(cfg.filter.relin_threshold_px == 15.0);
  std::filesystem::remove(path);
}
