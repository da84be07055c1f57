#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "c2pc/csidata/container.hpp"
#include "c2pc/diffmath/grad_check.hpp"
#include "c2pc/diffmath/ops.hpp"
#include "c2pc/errors.hpp"
#include "c2pc/loss/loss.hpp"
#include "c2pc/model/checkpoint.hpp"
#include "c2pc/model/model.hpp"
#include "generators.hpp"

using namespace c2pc;
using namespace c2pc::model;
using c2pc::testing::max_abs_diff;
using c2pc::testing::random_input;

namespace {

void fill(const dm::Tensor& t, double value) {
  dm::Tensor h = t;
  for (auto& x : h.mutable_data()) x = value;
}

ModelConfig wide_shallow() {
  ModelConfig c;  // full A/S/T/E, one layer each way, few points
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.points = 16;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "c2pc_model_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(ModelConfig, JsonRoundTripAndValidation) {
  const ModelConfig tiny = ModelConfig::tiny();
  EXPECT_EQ(model_config_from_json(to_json(tiny)), tiny);
  EXPECT_EQ(model_config_from_json(nlohmann::json::object()), ModelConfig{});
  EXPECT_THROW(model_config_from_json({{"embedding", 8}}), ConfigError);
  EXPECT_THROW(model_config_from_json({{"embed_dim", 10}, {"heads", 4}}), ConfigError);
  EXPECT_THROW(model_config_from_json({{"points", 0}}), ConfigError);
  EXPECT_THROW(model_config_from_json({{"kernel_size", 11}}), ConfigError);
  EXPECT_EQ(ModelConfig{}.ffn(), 2048u);
}

TEST(ModelParams, LayoutAndInitialisation) {
  const Model m(ModelConfig::tiny(), 1);
  const auto& p = m.params();
  EXPECT_EQ(p["temporal.kernel"].shape(), (dm::Shape{5, 2, 8}));
  EXPECT_EQ(p["pos.antenna"].shape(), (dm::Shape{2, 8}));
  EXPECT_EQ(p["pos.subcarrier"].shape(), (dm::Shape{4, 8}));
  EXPECT_EQ(p["enc.1.ffn.w1"].shape(), (dm::Shape{8, 32}));
  EXPECT_EQ(p["queries"].shape(), (dm::Shape{16, 8}));
  EXPECT_EQ(p["proj.weight"].shape(), (dm::Shape{8, 3}));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(m.transform().at(i * 8 + j), i == j ? 1.0 : 0.0);
  for (const auto& [name, t] : p.tensors()) {
    EXPECT_TRUE(t.requires_grad()) << name;
    for (double v : t.data()) EXPECT_TRUE(std::isfinite(v)) << name;
  }
  const double bound = 1.0 / std::sqrt(8.0);
  for (double v : p["enc.0.attn.wq"].data()) EXPECT_LE(std::abs(v), bound);
  // Same seed, same parameters; different seed, different parameters.
  const Model again(ModelConfig::tiny(), 1), other(ModelConfig::tiny(), 2);
  EXPECT_EQ(again.params()["queries"].to_vector(), p["queries"].to_vector());
  EXPECT_NE(other.params()["queries"].to_vector(), p["queries"].to_vector());
}

TEST(TemporalEncode, ZeroInputZeroBiasGivesZero) {
  const Model m(ModelConfig::tiny(), 3);
  std::mt19937_64 rng(3);
  auto in = random_input(m.config(), rng);
  in.features = dm::Tensor::zeros(in.features.shape());
  const auto h = m.temporal_encode(in);
  EXPECT_EQ(h.shape(), (dm::Shape{8, 8}));
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(TemporalEncode, FullConfigShape) {
  const Model m(wide_shallow(), 4);
  std::mt19937_64 rng(4);
  EXPECT_EQ(m.temporal_encode(random_input(m.config(), rng)).shape(), (dm::Shape{342, 512}));
}

TEST(TemporalEncode, PerPairLocality) {
  const Model m(ModelConfig::tiny(), 5);
  std::mt19937_64 rng(5);
  const auto a = random_input(m.config(), rng);
  auto b = a;
  std::vector<double> v = a.features.to_vector();
  const std::size_t j = 3, row = 2 * 5;
  for (std::size_t k = 0; k < row; ++k) v[j * row + k] += 0.5;
  b.features = dm::Tensor::from(a.features.shape(), v);
  const auto ha = m.temporal_encode(a), hb = m.temporal_encode(b);
  for (std::size_t i = 0; i < 8; ++i) {
    bool differs = false;
    for (std::size_t e = 0; e < 8; ++e) differs |= ha.at(i * 8 + e) != hb.at(i * 8 + e);
    EXPECT_EQ(differs, i == j) << "row " << i;
  }
}

TEST(TemporalEncode, ShortKernelMeanPools) {
  ModelConfig c = ModelConfig::tiny();
  c.kernel_size = 2;
  const Model m(c, 6);
  std::mt19937_64 rng(6);
  const auto in = random_input(c, rng);
  const auto h = m.temporal_encode(in);
  EXPECT_EQ(h.shape(), (dm::Shape{8, 8}));
  // Oracle: average of the 4 valid window positions for pair 0, channel 0.
  const auto& k = m.params()["temporal.kernel"];
  double expect = 0.0;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t dk = 0; dk < 2; ++dk)
      for (std::size_t ch = 0; ch < 2; ++ch) expect += in.features.at(ch * 5 + t + dk) * k.at((dk * 2 + ch) * 8);
  EXPECT_NEAR(h.at(0), expect / 4.0, 1e-12);
  EXPECT_THROW(m.temporal_encode([&] {
    auto bad = in;
    bad.features = dm::Tensor::zeros({8, 2, 4});
    return bad;
  }()), ShapeError);
}

TEST(AddPositional, Examples) {
  const Model m(ModelConfig::tiny(), 7);
  std::mt19937_64 rng(7);
  const auto in = random_input(m.config(), rng);
  const auto h = m.temporal_encode(in);
  const auto& pa = m.params()["pos.antenna"];
  const auto& ps = m.params()["pos.subcarrier"];

  const auto zero_h = dm::Tensor::zeros({8, 8});
  const auto out = m.add_positional(zero_h, in.antenna_index, in.subcarrier_index);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t e = 0; e < 8; ++e) {
      EXPECT_EQ(out.at(i * 8 + e), pa.at(in.antenna_index[i] * 8 + e) + ps.at(in.subcarrier_index[i] * 8 + e));
    }
  }
  // Rows 0 and 1 share antenna 0 and differ in subcarrier.
  for (std::size_t e = 0; e < 8; ++e) {
    EXPECT_NEAR(out.at(e) - out.at(8 + e), ps.at(e) - ps.at(8 + e), 1e-15);
  }

  fill(pa, 0.0);
  fill(ps, 0.0);
  EXPECT_EQ(m.add_positional(h, in.antenna_index, in.subcarrier_index).to_vector(), h.to_vector());

  std::vector<std::size_t> bad = in.antenna_index;
  bad[0] = 2;
  EXPECT_THROW(m.add_positional(h, bad, in.subcarrier_index), std::out_of_range);
}

TEST(Encoder, PermutationEquivariance) {
  const Model m(ModelConfig::tiny(), 8);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_input(m.config(), rng);
    const auto perm = c2pc::testing::random_permutation(rng, 8);
    const auto pin = c2pc::testing::permute_pairs(in, perm);
    dm::NoGradGuard guard;
    const auto out = m.encode(m.add_positional(m.temporal_encode(in), in.antenna_index, in.subcarrier_index));
    const auto pout = m.encode(m.add_positional(m.temporal_encode(pin), pin.antenna_index, pin.subcarrier_index));
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t e = 0; e < 8; ++e) EXPECT_NEAR(pout.at(i * 8 + e), out.at(perm[i] * 8 + e), 1e-9);
  }
}

TEST(Decoder, MemoryPermutationInvariance) {
  const Model m(ModelConfig::tiny(), 9);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> mem(8 * 8);
    for (auto& x : mem) x = g(rng);
    const auto perm = c2pc::testing::random_permutation(rng, 8);
    std::vector<double> pmem(mem.size());
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t e = 0; e < 8; ++e) pmem[i * 8 + e] = mem[perm[i] * 8 + e];
    dm::NoGradGuard guard;
    const auto a = m.decode(dm::Tensor::from({8, 8}, mem));
    const auto b = m.decode(dm::Tensor::from({8, 8}, pmem));
    EXPECT_EQ(a.shape(), (dm::Shape{16, 8}));
    EXPECT_LE(max_abs_diff(a.data(), b.data()), 1e-9);
  }
}

TEST(Decoder, FeatureTransformIsAppliedLast) {
  const Model m(ModelConfig::tiny(), 10);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  std::vector<double> mem(8 * 8);
  for (auto& x : mem) x = g(rng);
  dm::NoGradGuard guard;
  const auto identity_out = m.decode(dm::Tensor::from({8, 8}, mem));
  dm::Tensor tf = m.transform();
  for (std::size_t i = 0; i < 8; ++i) tf.mutable_data()[i * 8 + i] = 2.0;
  const auto doubled = m.decode(dm::Tensor::from({8, 8}, mem));
  for (std::size_t i = 0; i < identity_out.numel(); ++i) EXPECT_EQ(doubled.at(i), 2.0 * identity_out.at(i));
}

TEST(Decoder, FullConfigShape) {
  ModelConfig c = wide_shallow();
  c.points = 1200;
  const Model m(c, 11);
  dm::NoGradGuard guard;
  EXPECT_EQ(m.decode(dm::Tensor::zeros({342, 512})).shape(), (dm::Shape{1200, 512}));
}

TEST(ProjectPoints, Examples) {
  const Model m(ModelConfig::tiny(), 12);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::vector<double> feat(16 * 8);
  for (auto& x : feat) x = g(rng);
  const auto f = dm::Tensor::from({16, 8}, feat);
  const auto f2 = dm::scale(f, 2.0);
  const auto p1 = m.project_points(f), p2 = m.project_points(f2);
  EXPECT_EQ(p1.shape(), (dm::Shape{16, 3}));
  for (std::size_t i = 0; i < p1.numel(); ++i) EXPECT_NEAR(p2.at(i), 2.0 * p1.at(i), 1e-14);

  fill(m.params()["proj.weight"], 0.0);
  dm::Tensor b = m.params()["proj.bias"];
  b.mutable_data()[0] = 1.0;
  b.mutable_data()[1] = 2.0;
  b.mutable_data()[2] = 3.0;
  const auto p = m.project_points(f);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(p.at(3 * i), 1.0);
    EXPECT_EQ(p.at(3 * i + 1), 2.0);
    EXPECT_EQ(p.at(3 * i + 2), 3.0);
  }
}

TEST(Forward, DeterministicAndBatchConsistent) {
  const Model m(ModelConfig::tiny(), 13);
  std::mt19937_64 rng(13);
  const auto in = random_input(m.config(), rng);
  dm::NoGradGuard guard;
  const std::vector<csi::ModelInput> batch{in, in};
  const auto out = m.forward(batch);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].shape(), (dm::Shape{16, 3}));
  EXPECT_EQ(out[0].to_vector(), out[1].to_vector());
  EXPECT_EQ(m.forward(in).to_vector(), out[0].to_vector());
  EXPECT_EQ(m.infer(in).size(), 16u);
}

TEST(Forward, ShapeMismatchFailsBeforeCompute) {
  const Model m(ModelConfig::tiny(), 14);
  std::mt19937_64 rng(14);
  auto good = random_input(m.config(), rng);
  auto bad = good;
  bad.features = dm::Tensor::zeros({8, 2, 6});
  const std::vector<csi::ModelInput> batch{good, bad};
  EXPECT_THROW(m.forward(batch), ShapeError);
  bad = good;
  bad.subcarrier_index[2] = 4;
  EXPECT_THROW(m.forward(bad), ShapeError);
}

TEST(Forward, DropoutOnlyWhenTraining) {
  ModelConfig c = ModelConfig::tiny();
  c.dropout = 0.3;
  const Model m(c, 15);
  std::mt19937_64 rng(15), drop(1);
  const auto in = random_input(c, rng);
  dm::NoGradGuard guard;
  const auto eval_out = m.forward(in).to_vector();
  EXPECT_EQ(m.forward(in).to_vector(), eval_out);
  EXPECT_NE(m.forward(in, {true, &drop}).to_vector(), eval_out);
  EXPECT_THROW(m.forward(in, {true, nullptr}), ConfigError);
}

class TinyGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(TinyGradients, MatchFiniteDifferences) {
  const Model m(ModelConfig::tiny(), GetParam());
  std::mt19937_64 rng(GetParam());
  c2pc::testing::randomise_parameters(m, rng);
  const auto in = random_input(m.config(), rng);
  const auto gt = cloud_to_tensor(c2pc::testing::random_cloud(rng, 16, 0.5));
  const auto report = dm::grad_check(
      [&] { return loss::total_loss(m.forward(in), gt, m.transform(), {0.001}); }, m.params().tensors(), 1e-5);
  for (const auto& p : report.params) {
    EXPECT_LT(p.max_rel_error, 1e-4) << p.name << " analytic " << p.analytic << " numeric " << p.numeric;
  }
  EXPECT_TRUE(report.passed);
}

INSTANTIATE_TEST_SUITE_P(Seeds, TinyGradients, ::testing::Values(1, 2, 3, 4, 5));

TEST(Gradients, EveryParameterReceivesGradient) {
  const Model m(ModelConfig::tiny(), 17);
  std::mt19937_64 rng(17);
  const auto in = random_input(m.config(), rng);
  const auto gt = cloud_to_tensor(c2pc::testing::random_cloud(rng, 16, 0.5));
  const_cast<ModelParams&>(m.params()).zero_grad();
  loss::total_loss(m.forward(in), gt, m.transform(), {0.001}).backward();
  for (const auto& [name, t] : m.params().tensors()) {
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Model m(ModelConfig::tiny(), 18);
  const auto path = temp_path("tiny.ckpt");
  save_model(path, m);
  const Model back = load_model(path, ModelConfig::tiny());
  EXPECT_EQ(back.config(), m.config());
  ASSERT_EQ(back.params().tensors().size(), m.params().tensors().size());
  for (const auto& [name, t] : m.params().tensors()) {
    EXPECT_EQ(back.params()[name].to_vector(), t.to_vector()) << name;
    EXPECT_TRUE(back.params()[name].requires_grad());
  }
  std::mt19937_64 rng(18);
  const auto in = random_input(m.config(), rng);
  EXPECT_EQ(back.infer(in), m.infer(in));
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
  const Model m(ModelConfig::tiny(), 19);
  const auto path = temp_path("corrupt.ckpt");
  save_model(path, m);
  ModelConfig other = ModelConfig::tiny();
  other.points = 32;
  EXPECT_THROW(load_model(path, other), ConfigError);

  auto bytes = csi::read_file_bytes(path);
  bytes[bytes.size() / 2] ^= 0x40;
  csi::write_file_bytes(path, bytes);
  try {
    load_model(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
  bytes[0] = 'X';
  csi::write_file_bytes(path, bytes);
  EXPECT_THROW(load_model(path), FormatError);
  EXPECT_THROW(load_model(temp_path("missing.ckpt")), DataError);
}
