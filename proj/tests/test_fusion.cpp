#include <cmath>

#include <gtest/gtest.h>

#include "mghft/fusion.hpp"
#include "mghft/gradcheck.hpp"
#include "test_util.hpp"

namespace mghft {
namespace {

using test::random_tensor;

// Per-element reference for v + softmax(v t^T) t.
std::vector<double> soft_fusion_reference(const Tensor& v, const Tensor& t) {
  const std::size_t n = v.dim(0), m = t.dim(0), d = v.dim(1);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += v.at(i, k) * t.at(j, k);
      w[j] = std::exp(s);
      z += w[j];
    }
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += w[j] / z * t.at(j, k);
      out[i * d + k] = v.at(i, k) + acc;
    }
  }
  return out;
}

TEST(SoftFusion, ZeroTextIsExactIdentity) {
  Rng rng(1);
  Tensor v = random_tensor(rng, {5, 6});
  EXPECT_EQ(soft_fusion(v, Tensor::zeros({3, 6})).to_vector(), v.to_vector());
}

TEST(SoftFusion, SingleTextTokenIsAddedToEveryRow) {
  Rng rng(2);
  Tensor v = random_tensor(rng, {3, 4});
  Tensor t = random_tensor(rng, {1, 4});
  Tensor y = soft_fusion(v, t);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(y.at(i, k), v.at(i, k) + t.at(0, k), 1e-15);
  }
}

TEST(SoftFusion, MatchesPerElementReference) {
  Rng rng(3);
  Tensor v = random_tensor(rng, {3, 5});
  Tensor t = random_tensor(rng, {4, 5});
  const auto expected = soft_fusion_reference(v, t);
  const auto got = soft_fusion(v, t).to_vector();
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
}

TEST(SoftFusion, WidthMismatchThrows) {
  EXPECT_THROW(soft_fusion(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), DimensionError);
}

TEST(GlobalFusion, EqualsSoftFusionBitForBit) {
  Rng rng(4);
  Tensor g = random_tensor(rng, {4, 8});
  Tensor t = random_tensor(rng, {4, 8});
  EXPECT_EQ(global_fusion(g, t).to_vector(), soft_fusion(g, t).to_vector());
  EXPECT_EQ(global_fusion(g, Tensor::zeros({4, 8})).to_vector(), g.to_vector());
}

TEST(GlobalFusion, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor g = random_tensor(rng, {4, 6}, true);
  Tensor t = random_tensor(rng, {4, 6}, true);
  Tensor w = random_tensor(rng, {4, 6});
  auto r = check_gradients("global_fusion", [&] { return sum(mul(global_fusion(g, t), w)); }, {g, t});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Contrastive, OrthonormalPairsClosedForm) {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  // -ln(e / (e + 1)), evaluated independently.
  EXPECT_NEAR(contrastive_loss(eye, eye, 1.0).item(), 0.3132616875182228, 1e-12);
}

TEST(Contrastive, SymmetricUnderArgumentSwap) {
  Rng rng(6);
  Tensor v = random_tensor(rng, {5, 7});
  Tensor t = random_tensor(rng, {5, 7});
  EXPECT_NEAR(contrastive_loss(v, t, 0.07).item(), contrastive_loss(t, v, 0.07).item(), 1e-9);
}

TEST(Contrastive, SharpTemperatureDrivesAlignedLossToZero) {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_LT(contrastive_loss(eye, eye, 0.01).item(), 1e-20);
}

TEST(Contrastive, ScaleInvariant) {
  Rng rng(7);
  Tensor v = random_tensor(rng, {4, 5});
  Tensor t = random_tensor(rng, {4, 5});
  EXPECT_NEAR(contrastive_loss(scale(v, 3.7), scale(t, 0.2), 0.07).item(), contrastive_loss(v, t, 0.07).item(), 1e-6);
}

TEST(Contrastive, ZeroRowThrows) {
  Tensor v = Tensor::from({2, 2}, {1, 0, 0, 0});
  EXPECT_THROW(contrastive_loss(v, Tensor::from({2, 2}, {1, 0, 0, 1}), 0.07), std::domain_error);
}

TEST(Contrastive, SingleExampleBatchThrows) {
  EXPECT_THROW(contrastive_loss(Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {1, 0}), 0.07), std::invalid_argument);
}

TEST(Mlce, IdenticalInputsGiveZero) {
  Rng rng(8);
  Tensor v = random_tensor(rng, {4, 6});
  EXPECT_NEAR(mlce_loss(v, v, 1.0).item(), 0.0, 1e-12);
  EXPECT_NEAR(mlce_loss(v, scale(v, 5.0), 1.0).item(), 0.0, 1e-12);
}

TEST(Mlce, ClosedFormTwoByTwo) {
  // Text rows identical, vision rows orthogonal, tau = 1. W_t is uniform and
  // W_v rows are softmax([1, 0.5]); KL evaluated independently.
  Tensor v = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor t = Tensor::from({2, 2}, {1, 0, 1, 0});
  EXPECT_NEAR(mlce_loss(v, t, 1.0).item(), 0.030929803620161317, 1e-12);
}

TEST(Mlce, DirectionIsConfigurable) {
  Tensor v = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor t = Tensor::from({2, 2}, {1, 0, 1, 0});
  EXPECT_NEAR(mlce_loss(v, t, 1.0, MlceDirection::kVisionTeachesText).item(),
              mlce_loss(t, v, 1.0, MlceDirection::kTextTeachesVision).item(), 1e-15);
}

TEST(Mlce, NonNegativeOnRandomBatches) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 2 + rng.below(6);
    EXPECT_GE(mlce_loss(random_tensor(rng, {b, 4}), random_tensor(rng, {b, 4}), 1.0).item(), 0.0);
  }
}

TEST(Alignment, ZeroLambdaIsPureContrastive) {
  Rng rng(10);
  std::vector<StagePair> stages;
  double expected = 0.0;
  AlignmentLossConfig cfg;
  cfg.lambda = 0.0;
  for (std::size_t s = 0; s < 4; ++s) {
    stages.push_back({random_tensor(rng, {3, 4 + s}), random_tensor(rng, {3, 4 + s})});
    expected += contrastive_loss(stages.back().visual, stages.back().text, cfg.tau_cl).item() / 4.0;
  }
  EXPECT_NEAR(alignment_loss(stages, cfg).item(), expected, 1e-12);
}

TEST(Alignment, DefaultLambdaIsThirty) { EXPECT_EQ(AlignmentLossConfig{}.lambda, 30.0); }

TEST(Alignment, AlignedFeaturesGiveContrastiveFloor) {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::vector<StagePair> stages(4, StagePair{eye, eye});
  AlignmentLossConfig cfg;
  cfg.tau_cl = 1.0;
  // -ln(e / (e + 2)) for B = 3, tau = 1, evaluated independently.
  EXPECT_NEAR(alignment_loss(stages, cfg).item(), 0.5514447139320511, 1e-12);
  cfg.stage_reduction = StageReduction::kSum;
  EXPECT_NEAR(alignment_loss(stages, cfg).item(), 4 * 0.5514447139320511, 1e-12);
}

TEST(Alignment, InvalidConfigRejected) {
  AlignmentLossConfig cfg;
  cfg.tau_cl = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Tgfa, AttentionRowsSumToOne) {
  Rng rng(11);
  ParameterStore store;
  TextGuidedFusionAttention tgfa(store, "tgfa", 8, 2, rng, 4, 0.3);
  auto out = tgfa.forward(random_tensor(rng, {8, 8}), random_tensor(rng, {4, 8}));
  ASSERT_EQ(out.text_attention.size(), 2u);
  for (const auto& set : {out.text_attention, out.visual_attention}) {
    for (const Tensor& a : set) {
      for (std::size_t r = 0; r < a.dim(0); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.dim(1); ++c) s += a.at(r, c);
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

void fill(Tensor& t, double value) {
  for (auto& x : t.mutable_data()) x = value;
}

TEST(Tgfa, ZeroValueAndMlpOutputLeaveInput) {
  Rng rng(12);
  ParameterStore store;
  TextGuidedFusionAttention tgfa(store, "tgfa", 8, 2, rng, 4, 0.3);
  fill(tgfa.text_value.weight, 0.0);
  fill(tgfa.visual_value.weight, 0.0);
  fill(tgfa.mlp_out.weight, 0.0);
  for (auto& p : store.parameters()) {
    if (p.name.ends_with(".bias")) fill(p.tensor, 0.0);
  }
  Tensor hv = random_tensor(rng, {8, 8});
  // F_f = 0 and MLP(.) = 0, so F'_f = MLP(h_v + F_f) + h_v + F_f = h_v.
  const auto out = tgfa(hv, random_tensor(rng, {4, 8})).to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], hv.at(i), 1e-15);
}

TEST(Tgfa, HeadSplitEquivalence) {
  // A two-head block whose second head carries only zeros, and a one-head
  // block holding the first head's weights with query and visual-key weights
  // scaled by sqrt(2) to undo the change in 1/sqrt(d_head), compute the same map.
  const std::size_t d = 8, half = 4;
  Rng rng(13);
  ParameterStore s1, s2;
  TextGuidedFusionAttention one(s1, "one", d, 1, rng, 4, 0.3);
  TextGuidedFusionAttention two(s2, "two", d, 2, rng, 4, 0.3);
  auto copy_all = [](const Linear& from, Linear& to) {
    auto src = from.weight.data();
    std::copy(src.begin(), src.end(), to.weight.mutable_data().begin());
    auto bsrc = from.bias.data();
    std::copy(bsrc.begin(), bsrc.end(), to.bias.mutable_data().begin());
  };
  auto zero_second_half = [&](Linear& l) {
    auto w = l.weight.mutable_data();
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = half; c < d; ++c) w[r * d + c] = 0.0;
    }
    auto b = l.bias.mutable_data();
    for (std::size_t c = half; c < d; ++c) b[c] = 0.0;
  };
  for (Linear* l : {&two.query, &two.text_key, &two.text_value, &two.visual_key, &two.visual_value}) {
    zero_second_half(*l);
  }
  copy_all(two.query, one.query);
  copy_all(two.text_key, one.text_key);
  copy_all(two.text_value, one.text_value);
  copy_all(two.visual_key, one.visual_key);
  copy_all(two.visual_value, one.visual_value);
  copy_all(two.out, one.out);
  copy_all(two.mlp_in, one.mlp_in);
  copy_all(two.mlp_out, one.mlp_out);
  for (auto& x : one.query.weight.mutable_data()) x *= std::sqrt(2.0);
  for (auto& x : one.query.bias.mutable_data()) x *= std::sqrt(2.0);
  for (auto& x : one.visual_key.weight.mutable_data()) x *= std::sqrt(2.0);
  for (auto& x : one.visual_key.bias.mutable_data()) x *= std::sqrt(2.0);

  Tensor hv = random_tensor(rng, {8, d});
  Tensor ht = random_tensor(rng, {4, d});
  const auto a = one(hv, ht).to_vector();
  const auto b = two(hv, ht).to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Tgfa, PermutingVisualRowsPermutesOutput) {
  Rng rng(14);
  ParameterStore store;
  TextGuidedFusionAttention tgfa(store, "tgfa", 8, 4, rng, 4, 0.3);
  Tensor hv = random_tensor(rng, {8, 8});
  Tensor ht = random_tensor(rng, {4, 8});
  const std::vector<std::size_t> perm{3, 0, 7, 1, 6, 2, 5, 4};
  Tensor permuted = tgfa(gather_rows(hv, perm), ht);
  Tensor base = tgfa(hv, ht);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(permuted.at(i, c), base.at(perm[i], c), 1e-12);
  }
}

TEST(Tgfa, IndivisibleHeadsRejected) {
  Rng rng(15);
  ParameterStore store;
  EXPECT_THROW(TextGuidedFusionAttention(store, "tgfa", 10, 4, rng), ConfigError);
}

TEST(Tgfa, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  ParameterStore store;
  TextGuidedFusionAttention tgfa(store, "tgfa", 8, 2, rng, 4, 0.3);
  Tensor hv = random_tensor(rng, {8, 8}, true);
  Tensor ht = random_tensor(rng, {4, 8}, true);
  Tensor w = random_tensor(rng, {8, 8});
  std::vector<Tensor> inputs{hv, ht};
  for (const auto& p : store.parameters()) inputs.push_back(p.tensor);
  auto r = check_gradients("tgfa", [&] { return sum(mul(tgfa(hv, ht), w)); }, inputs);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Classifier, ZeroInputGivesZeroLogits) {
  Rng rng(17);
  ParameterStore store;
  Classifier cls(store, "classifier", 6, 7, rng);
  Tensor logits = cls(Tensor::zeros({8, 6}));
  ASSERT_EQ(logits.shape(), (Shape{1, 7}));
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Classifier, TokenOrderDoesNotMatter) {
  Rng rng(18);
  ParameterStore store;
  Classifier cls(store, "classifier", 6, 7, rng, 0.3);
  Tensor f = random_tensor(rng, {8, 6});
  const std::vector<std::size_t> perm{7, 6, 5, 4, 3, 2, 1, 0};
  const auto a = cls(f).to_vector();
  const auto b = cls(gather_rows(f, perm)).to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(CrossAttentionFusion, ResidualKeepsInputWhenValuesAreZero) {
  Rng rng(19);
  ParameterStore store;
  CrossAttentionFusion ca(store, "ca", 6, rng, 0.3);
  for (auto& p : store.parameters()) {
    if (p.name.starts_with("ca.v.")) fill(p.tensor, 0.0);
    if (p.name == "ca.o.bias") fill(p.tensor, 0.0);
  }
  Tensor v = random_tensor(rng, {3, 6});
  const auto out = ca(v, random_tensor(rng, {4, 6})).to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], v.at(i), 1e-15);
}

}  // namespace
}  // namespace mghft
