#include "mghft/fusion.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mghft/backbone.hpp"
#include "mghft/ops.hpp"

namespace mghft {

namespace {

void require_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError(std::string(op) + ": feature dims differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_batch(const char* op, const Tensor& v, const Tensor& t) {
  if (v.rank() != 2 || v.shape() != t.shape()) {
    throw DimensionError(std::string(op) + ": batch shapes differ, " + shape_str(v.shape()) + " vs " +
                         shape_str(t.shape()));
  }
  if (v.dim(0) < 2) throw std::invalid_argument(std::string(op) + " needs a batch of at least 2 pairs");
}

Tensor self_similarity(const Tensor& f) { return add_scalar(scale(matmul(f, transpose(f)), 0.5), 0.5); }

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, double inv_sqrt, Tensor* weights_out) {
  Tensor w = softmax(scale(matmul(q, transpose(k)), inv_sqrt), 1);
  if (weights_out) *weights_out = w;
  return matmul(w, v);
}

}  // namespace

Tensor soft_fusion(const Tensor& v, const Tensor& t) {
  require_pair("soft_fusion", v, t);
  Tensor weights = softmax(matmul(v, transpose(t)), 1);
  return add(v, matmul(weights, t));
}

Tensor global_fusion(const Tensor& h_g, const Tensor& h_t) { return soft_fusion(h_g, h_t); }

Tensor contrastive_loss(const Tensor& v, const Tensor& t, double tau) {
  require_batch("contrastive_loss", v, t);
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
  Tensor fv = normalize_rows(v);
  Tensor ft = normalize_rows(t);
  Tensor s = scale(matmul(fv, transpose(ft)), 1.0 / tau);
  std::vector<std::size_t> y(v.dim(0));
  std::iota(y.begin(), y.end(), std::size_t{0});
  return scale(add(cross_entropy(s, y), cross_entropy(transpose(s), y)), 0.5);
}

Tensor mlce_loss(const Tensor& v, const Tensor& t, double tau, MlceDirection direction) {
  require_batch("mlce_loss", v, t);
  if (!(tau > 0.0)) throw std::invalid_argument("mlce_loss: tau must be positive");
  Tensor w_v = softmax(scale(self_similarity(normalize_rows(v)), 1.0 / tau), 1);
  Tensor w_t = softmax(scale(self_similarity(normalize_rows(t)), 1.0 / tau), 1);
  return direction == MlceDirection::kTextTeachesVision ? kl_divergence_rows(w_t, w_v) : kl_divergence_rows(w_v, w_t);
}

void AlignmentLossConfig::validate() const {
  if (!(tau_cl > 0.0) || !(tau_mlce > 0.0)) throw ConfigError("alignment temperatures must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("alignment lambda must be non-negative");
}

Tensor alignment_loss(std::span<const StagePair> stages, const AlignmentLossConfig& config) {
  config.validate();
  if (stages.empty()) throw std::invalid_argument("alignment_loss: no stages");
  Tensor total;
  for (const auto& st : stages) {
    Tensor stage_loss = contrastive_loss(st.visual, st.text, config.tau_cl);
    if (config.lambda != 0.0) {
      stage_loss = add(stage_loss, scale(mlce_loss(st.visual, st.text, config.tau_mlce, config.mlce_direction),
                                         config.lambda));
    }
    total = total.defined() ? add(total, stage_loss) : stage_loss;
  }
  if (config.stage_reduction == StageReduction::kMean) total = scale(total, 1.0 / static_cast<double>(stages.size()));
  return total;
}

TextGuidedFusionAttention::TextGuidedFusionAttention(ParameterStore& store, const std::string& name,
                                                     std::size_t dim, std::size_t heads, Rng& rng,
                                                     std::size_t mlp_ratio, double init_std)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("TGFA dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  query = Linear(store, name + ".query", dim, dim, rng, init_std);
  text_key = Linear(store, name + ".text_key", dim, dim, rng, init_std);
  text_value = Linear(store, name + ".text_value", dim, dim, rng, init_std);
  visual_key = Linear(store, name + ".visual_key", dim, dim, rng, init_std);
  visual_value = Linear(store, name + ".visual_value", dim, dim, rng, init_std);
  out = Linear(store, name + ".out", dim, dim, rng, init_std);
  mlp_in = Linear(store, name + ".mlp.fc1", dim, dim * mlp_ratio, rng, init_std);
  mlp_out = Linear(store, name + ".mlp.fc2", dim * mlp_ratio, dim, rng, init_std);
}

TextGuidedFusionAttention::Output TextGuidedFusionAttention::forward(const Tensor& h_v, const Tensor& h_t) const {
  require_pair("tgfa", h_v, h_t);
  if (h_v.dim(1) != dim_) {
    throw DimensionError("tgfa: expected feature dim " + std::to_string(dim_) + ", got " + shape_str(h_v.shape()));
  }
  const std::size_t dh = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q_v = query(h_v);
  Tensor k_t = text_key(h_t);
  Tensor v_t = text_value(h_t);
  Tensor k_v = visual_key(h_v);
  Tensor v_v = visual_value(h_v);

  Output result;
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t c = h * dh;
    Tensor w_text, w_visual;
    Tensor q_fused = attend(slice_cols(q_v, c, dh), slice_cols(k_t, c, dh), slice_cols(v_t, c, dh), inv_sqrt, &w_text);
    heads.push_back(attend(q_fused, slice_cols(k_v, c, dh), slice_cols(v_v, c, dh), inv_sqrt, &w_visual));
    result.text_attention.push_back(w_text);
    result.visual_attention.push_back(w_visual);
  }
  Tensor f = out(heads_ == 1 ? heads.front() : concat_cols(heads));
  Tensor residual = add(h_v, f);
  result.fused = add(mlp_out(gelu(mlp_in(residual))), residual);
  return result;
}

CrossAttentionFusion::CrossAttentionFusion(ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng,
                                           double init_std)
    : q_(store, name + ".q", dim, dim, rng, init_std),
      k_(store, name + ".k", dim, dim, rng, init_std),
      v_(store, name + ".v", dim, dim, rng, init_std),
      o_(store, name + ".o", dim, dim, rng, init_std) {}

Tensor CrossAttentionFusion::operator()(const Tensor& v, const Tensor& t) const {
  require_pair("cross_attention", v, t);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(v.dim(1)));
  return add(v, o_(attend(q_(v), k_(t), v_(t), inv_sqrt, nullptr)));
}

Classifier::Classifier(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t classes, Rng& rng,
                       double init_std)
    : fc_(store, name, dim, classes, rng, init_std) {}

Tensor Classifier::operator()(const Tensor& tokens) const { return fc_(mean_rows(tokens)); }

}  // namespace mghft
