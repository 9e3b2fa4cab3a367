#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sigscat/model.hpp"
#include "sigscat/random.hpp"
#include "sigscat/serialize.hpp"

using namespace sigscat;

namespace {

// Tiny network on 32x32 inputs so embedding tests stay fast.
ModelConfig tiny_config() {
  ModelConfig c;
  c.scattering = {1, 2, 32, 32};
  c.conv_filters = {4, 4, 4, 4};
  c.embedding_dim = 8;
  return c;
}

Tensor<float> random_image(std::size_t h, std::size_t w, Rng& rng) {
  Tensor<float> t(Shape{h, w});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

std::size_t conv_params(std::size_t in, std::size_t out) { return in * out * 9 + out; }

}  // namespace

TEST(Architecture, DefaultPlanCountsInClosedForm) {
  const auto plan = layer_plan(ModelConfig{});
  ASSERT_EQ(plan.size(), 5u);
  EXPECT_EQ(plan[0].parameters, conv_params(81, 16));
  EXPECT_EQ(plan[1].parameters, conv_params(16, 16));
  EXPECT_EQ(plan[2].parameters, conv_params(16, 32));
  EXPECT_EQ(plan[3].parameters, conv_params(32, 32));
  EXPECT_EQ(plan[4].parameters, 6u * 9u * 32u * 128u + 128u);

  EXPECT_EQ(plan[0].output_shape, (Shape{16, 23, 38}));
  EXPECT_EQ(plan[1].output_shape, (Shape{16, 11, 18}));
  EXPECT_EQ(plan[2].output_shape, (Shape{32, 6, 9}));
  EXPECT_EQ(plan[3].output_shape, (Shape{32, 6, 9}));
  EXPECT_EQ(plan[4].output_shape, (Shape{128}));

  std::size_t total = 0;
  for (const auto& l : plan) total += l.parameters;
  EXPECT_EQ(total, 249200u);
  EXPECT_EQ(count_parameters(init_model(ModelConfig{}, 0)), 249200u);
}

TEST(Architecture, PlanFollowsConfigChanges) {
  ModelConfig c;
  c.embedding_dim = 64;
  EXPECT_EQ(layer_plan(c).back().parameters, 1728u * 64u + 64u);
  c.pool_ceil = false;   // 45x75 -> 22x37 -> 20x35 -> 10x17 -> 5x8
  EXPECT_EQ(layer_plan(c).back().weight_shape, (Shape{64, 32 * 5 * 8}));
}

TEST(Architecture, RejectsInputsTooSmallForTheBlocks) {
  ModelConfig c;
  c.scattering = {2, 4, 8, 8};   // 2x2 features vanish before the valid conv
  EXPECT_THROW(layer_plan(c), ConfigError);
  ModelConfig bad;
  bad.padding.pop_back();
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Init, DeterministicBoundedAndZeroBias) {
  const auto a = init_model(tiny_config(), 5), b = init_model(tiny_config(), 5), c = init_model(tiny_config(), 6);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  for (const auto& p : a.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (float v : p.tensor.data()) EXPECT_EQ(v, 0.0f);
    } else {
      const double bound = std::sqrt(6.0 * p.tensor.dim(0) / static_cast<double>(p.tensor.size()));
      for (float v : p.tensor.data()) EXPECT_LE(std::abs(v), bound);
    }
  }
}

TEST(Embedding, UnitNormAndDistanceProperties) {
  Rng rng(1);
  const auto w = init_model(tiny_config(), 2);
  const FilterBank bank(tiny_config().scattering);
  const auto x = random_image(32, 32, rng), y = random_image(32, 32, rng);
  const auto ex = embed(x, w, bank), ey = embed(y, w, bank), ex2 = embed(x, w, bank);
  ASSERT_EQ(ex.values.size(), 8u);
  double n = 0;
  for (float v : ex.values) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-5);
  EXPECT_EQ(ex.values, ex2.values);
  EXPECT_EQ(distance(ex, ex2), 0.0);
  EXPECT_EQ(distance(ex, ey), distance(ey, ex));
  EXPECT_GE(distance(ex, ey), 0.0);
  EXPECT_LE(distance(ex, ey), 1.0);
}

TEST(Embedding, RejectsWrongInputs) {
  const auto w = init_model(tiny_config(), 2);
  const FilterBank bank(tiny_config().scattering);
  EXPECT_THROW(embed(Tensor<float>(Shape{32, 31}), w, bank), ShapeError);
  Tensor<float> nan_img(Shape{32, 32});
  nan_img[3] = std::nanf("");
  EXPECT_THROW(embed(nan_img, w, bank), NumericError);
  EXPECT_THROW(embed(Tensor<float>(Shape{32, 32}), w, FilterBank(ScatteringConfig{1, 4, 32, 32})), ConfigError);
  Embedding a{{1.0f, 0.0f}, {}}, b{{1.0f}, {}};
  EXPECT_THROW(raw_distance(a, b), ShapeError);
}

TEST(Serialization, RoundTripIsBitExact) {
  const auto w = init_model(tiny_config(), 9);
  const auto path = (std::filesystem::temp_directory_path() / "sigscat_test_model.ssnw").string();
  save_weights(path, w);
  const auto back = load_weights(path);
  std::filesystem::remove(path);
  EXPECT_TRUE(back == w);
  EXPECT_EQ(back.config().embedding_dim, 8);
  EXPECT_EQ(back.config().scattering, tiny_config().scattering);
  EXPECT_EQ(serialize(back), serialize(w));
}

TEST(Serialization, RejectsBadMagicAndVersion) {
  const std::string bytes = serialize(init_model(tiny_config(), 1));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(deserialize(bad), FormatError);

  auto c = decode_container(bytes);
  for (auto& [k, v] : c.meta) {
    if (k == "model_version") v = "7";
  }
  EXPECT_THROW(deserialize(encode_container(c)), FormatError);
}

TEST(Serialization, RejectsTruncationAtEveryRegion) {
  const std::string bytes = serialize(init_model(tiny_config(), 1));
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize(bytes.substr(0, cut)), FormatError) << "cut at " << cut;
  }
  EXPECT_THROW(deserialize(bytes + "x"), FormatError);
}

TEST(Serialization, RejectsShapeMismatch) {
  const std::string bytes = serialize(init_model(tiny_config(), 1));
  auto c = decode_container(bytes);
  for (auto& [k, v] : c.meta) {
    if (k == "model.embedding_dim") v = "9";
  }
  EXPECT_THROW(deserialize(encode_container(c)), FormatError);

  c = decode_container(bytes);
  c.tensors.pop_back();
  EXPECT_THROW(deserialize(encode_container(c)), FormatError);

  EXPECT_THROW(load_weights("/nonexistent/weights.ssnw"), IoError);
}
