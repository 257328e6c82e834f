#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mghft/nn.hpp"
#include "mghft/tensor.hpp"

namespace mghft {

/// Residual text injection: v + softmax(v t^T) t, softmax over the text
/// tokens of each visual row. Parameter-free.
Tensor soft_fusion(const Tensor& v, const Tensor& t);

/// Soft-fusion applied to the stacked per-stage global features.
Tensor global_fusion(const Tensor& h_g, const Tensor& h_t);

/// Symmetric InfoNCE over a batch of paired rows: rows are L2-normalized,
/// S = f_v f_t^T / tau, and the loss averages the row-wise and column-wise
/// cross-entropies against the diagonal.
Tensor contrastive_loss(const Tensor& v, const Tensor& t, double tau);

enum class MlceDirection { kTextTeachesVision, kVisionTeachesText };

/// KL divergence between the softmax-normalized self-similarity matrices
/// C = 0.5 (1 + f f^T) of the text and vision batches.
Tensor mlce_loss(const Tensor& v, const Tensor& t, double tau,
                 MlceDirection direction = MlceDirection::kTextTeachesVision);

enum class StageReduction { kMean, kSum };

struct AlignmentLossConfig {
  double tau_cl = 0.07;
  double tau_mlce = 1.0;
  double lambda = 30.0;
  StageReduction stage_reduction = StageReduction::kMean;
  MlceDirection mlce_direction = MlceDirection::kTextTeachesVision;

  void validate() const;
};

struct StagePair {
  Tensor visual;  // [B x d_i] per-stage global features
  Tensor text;    // [B x d_i] per-stage pooled, projected view embeddings
};

/// Per-stage L_cl + lambda * L_mlce, reduced over stages.
Tensor alignment_loss(std::span<const StagePair> stages, const AlignmentLossConfig& config);

/// Two chained cross-attentions (visual queries over text, then the result
/// querying the visual tokens) followed by an MLP with a double residual.
class TextGuidedFusionAttention {
 public:
  TextGuidedFusionAttention(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                            Rng& rng, std::size_t mlp_ratio = 4, double init_std = kInitStd);

  struct Output {
    Tensor fused;                          // [n_v x d]
    std::vector<Tensor> text_attention;    // per head, [n_v x n_t]
    std::vector<Tensor> visual_attention;  // per head, [n_v x n_v]
  };

  Output forward(const Tensor& h_v, const Tensor& h_t) const;
  Tensor operator()(const Tensor& h_v, const Tensor& h_t) const { return forward(h_v, h_t).fused; }

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }

  Linear query;
  Linear text_key, text_value;
  Linear visual_key, visual_value;
  Linear out;
  Linear mlp_in, mlp_out;

 private:
  std::size_t dim_;
  std::size_t heads_;
};

/// Standard single-head cross-attention with residual, used in place of
/// soft-fusion for the cross-attention ablation.
class CrossAttentionFusion {
 public:
  CrossAttentionFusion(ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng,
                       double init_std = kInitStd);
  Tensor operator()(const Tensor& v, const Tensor& t) const;

 private:
  Linear q_, k_, v_, o_;
};

/// Mean-pools tokens and maps them to class logits, returned as [1 x classes].
class Classifier {
 public:
  Classifier(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t classes, Rng& rng,
             double init_std = kInitStd);
  Tensor operator()(const Tensor& tokens) const;
  std::size_t classes() const { return fc_.out_features(); }

 private:
  Linear fc_;
};

}  // namespace mghft
