#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "neosleep/app/run_config.hpp"

using neosleep::Errc;
using neosleep::Error;
using neosleep::app::parse_run_config;
using nlohmann::json;

namespace {

std::string config_error(const json& doc) {
  try {
    parse_run_config(doc);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    return e.what();
  }
  ADD_FAILURE() << "accepted " << doc.dump();
  return {};
}

}  // namespace

TEST(RunConfig, EmptyDocumentGivesDefaults) {
  const auto c = parse_run_config(json::object());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.train.lr, 0.001);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(c.train.patience_loso, 20);
  EXPECT_EQ(c.sst.window, 5);
  EXPECT_EQ(c.channel_pairs.size(), 4u);
  EXPECT_EQ(c.preprocess.low_hz, 0.5);
  EXPECT_EQ(c.synth.qs_fraction, 0.35);
}

TEST(RunConfig, SeedReachesEveryModule) {
  const auto c = parse_run_config(json{{"seed", 77}});
  EXPECT_EQ(c.train.seed, 77u);
  EXPECT_EQ(c.synth.seed, 77u);
}

TEST(RunConfig, ReadsNestedFields) {
  const auto c = parse_run_config(json::parse(R"({
    "train": {"max_epochs": 12, "lr": 0.01},
    "synth": {"n_subjects": 8, "duration_min": 180, "burst_s": [2, 4]},
    "sst": {"threshold": 0.4, "weights": [1, 2]},
    "channel_pairs": [["F3", "P3"], ["F4", "P4"]],
    "artifact": {"amp_limit_uv": 200},
    "paths": {"data_dir": "d", "annotations": ["a.csv", "b.csv"]}
  })"));
  EXPECT_EQ(c.train.max_epochs, 12);
  EXPECT_EQ(c.train.lr, 0.01);
  EXPECT_EQ(c.synth.n_subjects, 8);
  EXPECT_EQ(c.synth.burst_s_lo, 2);
  EXPECT_EQ(c.synth.burst_s_hi, 4);
  EXPECT_EQ(c.sst.weights, (std::vector<double>{1, 2}));
  EXPECT_EQ(c.channel_pairs[1].second, "P4");
  EXPECT_EQ(c.preprocess.artifact.amp_limit_uv, 200);
  EXPECT_EQ(c.paths.annotations.size(), 2u);
}

TEST(RunConfig, UnknownKeysNamePath) {
  EXPECT_NE(config_error({{"trian", json::object()}}).find("trian: unknown key"), std::string::npos);
  EXPECT_NE(config_error({{"train", {{"lrr", 1}}}}).find("train.lrr: unknown key"), std::string::npos);
  // seeds live only at the top level
  EXPECT_NE(config_error({{"synth", {{"seed", 3}}}}).find("synth.seed"), std::string::npos);
}

TEST(RunConfig, TypeErrorsNamePath) {
  EXPECT_NE(config_error({{"train", {{"batch_size", "64"}}}}).find("train.batch_size: expected an integer"), std::string::npos);
  EXPECT_NE(config_error({{"train", {{"batch_size", 6.5}}}}).find("train.batch_size"), std::string::npos);
  EXPECT_NE(config_error({{"seed", -1}}).find("seed: expected a non-negative integer"), std::string::npos);
  EXPECT_NE(config_error({{"synth", {{"cycle_min", {40}}}}}).find("synth.cycle_min: expected [lo, hi]"), std::string::npos);
  EXPECT_NE(config_error({{"channel_pairs", {{"F3"}}}}).find("channel_pairs[0]"), std::string::npos);
  EXPECT_NE(config_error({{"sst", 5}}).find("sst: expected an object"), std::string::npos);
}

TEST(RunConfig, RangeErrors) {
  EXPECT_NE(config_error({{"sst", {{"window", 4}}}}).find("sst.window"), std::string::npos);
  EXPECT_NE(config_error({{"sst", {{"threshold", 1.0}}}}).find("sst.threshold"), std::string::npos);
  EXPECT_NE(config_error({{"sst", {{"weights", {1, 1}}}}}).find("sst.weights"), std::string::npos);
  EXPECT_NE(config_error({{"train", {{"beta2", 1.0}}}}).find("beta2"), std::string::npos);
  EXPECT_NE(config_error({{"synth", {{"qs_fraction", 0}}}}).find("qs_fraction"), std::string::npos);
  EXPECT_NE(config_error({{"preprocess", {{"low_hz", 40}}}}).find("preprocess"), std::string::npos);
}

TEST(RunConfig, RoundTripsThroughJson) {
  auto doc = json::parse(R"({"seed": 5, "train": {"max_epochs": 3}, "synth": {"ibi_s": [4, 6]},
                             "paths": {"out_dir": "x"}})");
  const auto a = parse_run_config(doc);
  const auto b = parse_run_config(json::parse(neosleep::app::to_json(a).dump()));
  EXPECT_EQ(neosleep::app::to_json(a), neosleep::app::to_json(b));
  EXPECT_EQ(b.train.max_epochs, 3);
  EXPECT_EQ(b.synth.ibi_s_hi, 6);
}

TEST(RunConfig, FileErrors) {
  EXPECT_THROW(neosleep::app::load_run_config("/nonexistent/config.json"), Error);
  const auto p = std::filesystem::temp_directory_path() / "neosleep_bad_config.json";
  std::ofstream(p) << "{ \"seed\": ";
  try {
    neosleep::app::load_run_config(p.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
  }
  std::filesystem::remove(p);
}
