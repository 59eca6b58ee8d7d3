#include <gtest/gtest.h>

#include <set>

#include "automr/model.hpp"
#include "gradcheck.hpp"

using namespace automr;
using namespace automr::testing;

namespace {

// Independent parameter count from the architecture description.
std::size_t count_oracle(const QuartzConfig& c) {
  std::size_t n = 0;
  std::size_t ch = c.blocks[0].channels;
  n += c.in_channels * ch * c.stem_kernel + 2 * ch;
  for (const auto& b : c.blocks) {
    std::size_t cur = ch;
    for (std::size_t j = 0; j < b.cells; ++j) {
      n += cur * b.kernel + cur * b.channels + 2 * b.channels;
      cur = b.channels;
    }
    if (b.residual && ch != b.channels) n += ch * b.channels + 2 * b.channels;
    ch = b.channels;
  }
  n += ch * c.head_channels + c.head_channels;
  n += c.head_channels * c.num_classes + c.num_classes;
  return n;
}

}  // namespace

TEST(Model, PresetParameterCounts) {
  const auto base = preset("base", 3, 3);
  EXPECT_EQ(count_params(base), count_oracle(base));
  EXPECT_EQ(count_params(base), 71683u);
  EXPECT_EQ(build(base, 0).parameter_count(), 71683u);
  const auto large = preset("large", 9, 6);
  EXPECT_EQ(count_params(large), count_oracle(large));
  EXPECT_EQ(receptive_field(base), 41u);
  EXPECT_EQ(receptive_field(large), 1u + 4u + 3u * (4 + 6 + 8 + 2 * 10 + 2 * 12));
}

TEST(Model, RandomConfigsMatchOracle) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    QuartzConfig c;
    c.in_channels = 1 + rng.below(9);
    c.num_classes = 2 + rng.below(10);
    c.head_channels = 1 + rng.below(64);
    c.stem_kernel = 1 + 2 * rng.below(4);
    const std::size_t nb = 1 + rng.below(5);
    for (std::size_t b = 0; b < nb; ++b)
      c.blocks.push_back({1 + rng.below(3), 1 + rng.below(64), 1 + 2 * rng.below(5), 1 + rng.below(3), rng.uniform() < 0.7});
    ASSERT_EQ(count_params(c), count_oracle(c));
    const auto layout = parameter_layout(c);
    std::set<std::string> names;
    for (const auto& p : layout) ASSERT_TRUE(names.insert(p.name).second) << p.name;
  }
}

TEST(Model, ConfigValidation) {
  auto c = preset("base", 3, 3);
  auto bad = c;
  bad.blocks[1].kernel = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c, bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c, bad.blocks.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c, bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  try {
    preset("huge", 3, 3);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("base, large"), std::string::npos);
  }
}

TEST(Model, JsonRoundTrip) {
  const auto c = preset("large", 6, 12);
  const auto back = nlohmann::json(c).get<QuartzConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  EXPECT_THROW(nlohmann::json::parse(R"({"in_channels": 3})").get<QuartzConfig>(), ConfigError);
}

TEST(Model, ForwardShapesAndChannelCheck) {
  auto m = build(preset("base", 3, 5), 1);
  Rng rng(2);
  Tensor<float> x({4, 3, 25});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  const auto y = m.predict(x);
  EXPECT_EQ(y.shape(), (Shape{4, 5}));
  EXPECT_TRUE(y.all_finite());
  EXPECT_THROW(m.predict(Tensor<float>({4, 2, 25})), ShapeError);
}

TEST(Model, BuildIsDeterministic) {
  const auto c = preset("base", 3, 3);
  const auto a = build(c, 42), b = build(c, 42), d = build(c, 43);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) ASSERT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  EXPECT_NE(a.param("stem.conv.weight"), d.param("stem.conv.weight"));
  const auto z = build(c, 42, WeightInit::zeros);
  EXPECT_EQ(sum_squares(z.param("stem.conv.weight")), 0.0);
  EXPECT_EQ(z.param("stem.bn.gamma")[0], 1.0f);
}

TEST(Model, PredictLeavesRunningStatsAndIsBatchIndependent) {
  auto m = build(preset("base", 2, 3), 3);
  Rng rng(9);
  Tensor<float> x({3, 2, 32});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  const auto before = m.norm_states()[0].running_mean;
  const auto all = m.predict(x);
  EXPECT_EQ(m.norm_states()[0].running_mean, before);
  Tensor<float> one({1, 2, 32});
  std::copy(x.data() + 64, x.data() + 128, one.data());
  const auto single = m.predict(one);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(single[c], all[3 + c], 1e-5);
}

TEST(Model, DoubleAndFloatAgree) {
  const auto m = build(preset("base", 3, 3), 5);
  Rng rng(1);
  Tensor<float> x({2, 3, 40});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  const auto yf = m.predict(x);
  const auto yd = m.cast<double>().predict(x.cast<double>());
  for (std::size_t i = 0; i < yf.size(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-4);
}

TEST(Model, TinyModelGradientsMatchFiniteDifferences) {
  auto model = build<double>(tiny_config(), 7);
  jitter_parameters(model, 99);
  Rng rng(17);
  const auto x = random_tensor({4, 2, 16}, rng);
  const std::vector<int> y{0, 1, 2, 1};
  const auto r = check_model_gradients(model, x, y);
  EXPECT_EQ(r.checked, model.parameter_count());
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST(Model, ResidualProjectionOnlyWhenChannelsChange) {
  QuartzConfig c = tiny_config();
  c.blocks = {{1, 4, 3, 1, true}, {1, 8, 3, 1, true}, {1, 8, 3, 1, true}, {1, 6, 3, 1, false}};
  std::set<std::string> names;
  for (const auto& p : parameter_layout(c)) names.insert(p.name);
  EXPECT_FALSE(names.count("blocks.0.proj.weight"));
  EXPECT_TRUE(names.count("blocks.1.proj.weight"));
  EXPECT_FALSE(names.count("blocks.2.proj.weight"));
  EXPECT_FALSE(names.count("blocks.3.proj.weight"));
}
