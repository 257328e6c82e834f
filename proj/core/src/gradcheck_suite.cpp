#include "mghft/gradcheck_suite.hpp"

#include "mghft/fusion.hpp"
#include "mghft/nn.hpp"
#include "mghft/ops.hpp"

namespace mghft {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = random_tensor(rng, std::move(shape), lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Weighted sum so that every output element carries a distinct gradient.
Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

std::vector<Tensor> parameter_tensors(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.parameters()) out.push_back(p.tensor);
  return out;
}

}  // namespace

ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.backbone.image_size = 16;
  c.backbone.patch_size = 2;
  c.backbone.stage_dims = {4, 4, 8, 8};
  c.backbone.stage_heads = {1, 1, 2, 2};
  c.backbone.sr_ratios = {4, 2, 2, 1};
  c.backbone.mlp_ratio = 2;
  c.backbone.local_k = 2;
  c.backbone.init_std = 0.3;
  c.fusion.fusion_dim = 8;
  c.fusion.tgfa_heads = 2;
  c.fusion.fusion_text_len = 3;
  c.fusion.loss.tau_cl = 0.5;
  c.fusion.loss.lambda = 30.0;
  c.text_dim = 4;
  c.num_classes = 3;
  return c;
}

std::vector<Example> gradcheck_batch(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < 2; ++i) {
    Example ex;
    ex.sticker_id = "toy" + std::to_string(i);
    const std::size_t s = config.backbone.image_size;
    ex.image = random_tensor(rng, {config.backbone.in_channels, s, s}, 0.0, 1.0);
    std::array<Tensor, kNumViews> seqs;
    for (auto& t : seqs) t = random_tensor(rng, {3, config.text_dim});
    ex.views = make_view_embeddings(ex.sticker_id, std::move(seqs));
    ex.label = i % config.num_classes;
    batch.push_back(std::move(ex));
  }
  return batch;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed,
                                                 const std::function<void(const GradCheckResult&)>& progress) {
  Rng rng(seed);
  std::vector<GradCheckResult> results;
  auto record = [&](GradCheckResult r) {
    if (progress) progress(r);
    results.push_back(std::move(r));
  };

  {
    Tensor a = leaf(rng, {5, 4}), b = leaf(rng, {4, 3}), w = random_tensor(rng, {5, 3});
    record(check_gradients("matmul", [&] { return weighted_sum(matmul(a, b), w); }, {a, b}));
  }
  {
    Tensor x = leaf(rng, {3, 5}, -3.0, 3.0), w = random_tensor(rng, {3, 5});
    record(check_gradients("softmax", [&] { return weighted_sum(softmax(x, 1), w); }, {x}));
  }
  {
    Tensor x = leaf(rng, {4, 6}, -2.0, 2.0), g = leaf(rng, {6}, 0.5, 1.5), b = leaf(rng, {6});
    Tensor w = random_tensor(rng, {4, 6});
    record(check_gradients("layer_norm", [&] { return weighted_sum(layer_norm(x, g, b), w); }, {x, g, b}));
  }
  {
    Tensor logits = leaf(rng, {4, 7}, -2.0, 2.0);
    const std::vector<std::size_t> targets{0, 3, 6, 2};
    record(check_gradients("cross_entropy", [&] { return cross_entropy(logits, targets); }, {logits}));
  }
  {
    Tensor a = leaf(rng, {3, 3}, -2.0, 2.0), b = leaf(rng, {3, 3}, -2.0, 2.0);
    record(check_gradients("kl_divergence_rows", [&] { return kl_divergence_rows(softmax(a, 1), softmax(b, 1)); },
                           {a, b}));
  }
  {
    Tensor v = leaf(rng, {3, 5}), t = leaf(rng, {4, 5}), w = random_tensor(rng, {3, 5});
    record(check_gradients("soft_fusion", [&] { return weighted_sum(soft_fusion(v, t), w); }, {v, t}));
  }
  {
    Tensor v = leaf(rng, {4, 6}), t = leaf(rng, {4, 6});
    record(check_gradients("contrastive_loss", [&] { return contrastive_loss(v, t, 0.07); }, {v, t}));
  }
  {
    Tensor v = leaf(rng, {4, 6}), t = leaf(rng, {4, 6});
    record(check_gradients("mlce_loss", [&] { return mlce_loss(v, t, 1.0); }, {v, t}));
  }
  {
    Tensor g = leaf(rng, {4, 6}), t = leaf(rng, {4, 6}), w = random_tensor(rng, {4, 6});
    record(check_gradients("global_fusion", [&] { return weighted_sum(global_fusion(g, t), w); }, {g, t}));
  }
  {
    ParameterStore store;
    TextGuidedFusionAttention tgfa(store, "tgfa", 8, 2, rng, 4, 0.3);
    Tensor hv = leaf(rng, {8, 8}), ht = leaf(rng, {4, 8}), w = random_tensor(rng, {8, 8});
    std::vector<Tensor> inputs = parameter_tensors(store);
    inputs.push_back(hv);
    inputs.push_back(ht);
    record(check_gradients("tgfa", [&] { return weighted_sum(tgfa(hv, ht), w); }, inputs));
  }
  {
    ParameterStore store;
    CrossAttentionFusion ca(store, "ca", 6, rng, 0.3);
    Tensor v = leaf(rng, {3, 6}), t = leaf(rng, {4, 6}), w = random_tensor(rng, {3, 6});
    std::vector<Tensor> inputs = parameter_tensors(store);
    inputs.push_back(v);
    inputs.push_back(t);
    record(check_gradients("cross_attention", [&] { return weighted_sum(ca(v, t), w); }, inputs));
  }
  {
    BackboneConfig bc = gradcheck_model_config().backbone;
    bc.image_size = 8;
    bc.patch_size = 1;
    ParameterStore store;
    PvtBackbone backbone(store, bc, rng);
    Tensor image = leaf(rng, {3, 8, 8}, 0.0, 1.0);
    Tensor w = random_tensor(rng, {1, bc.stage_dims[3]});
    record(check_gradients("backbone_pixels", [&] { return weighted_sum(backbone.forward(image)[3].v_g, w); },
                           {image}));
  }
  {
    const ModelConfig config = gradcheck_model_config();
    MghftModel model(config, seed + 1);
    const std::vector<Example> batch = gradcheck_batch(config, seed + 2);
    const std::vector<std::size_t> labels{batch[0].label, batch[1].label};
    record(check_gradients("full_model", [&] { return model.loss(model.forward(batch), labels).total; },
                           parameter_tensors(model.params())));
  }
  return results;
}

}  // namespace mghft
