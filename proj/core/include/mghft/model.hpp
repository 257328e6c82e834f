#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mghft/backbone.hpp"
#include "mghft/fusion.hpp"
#include "mghft/nn.hpp"
#include "mghft/text_context.hpp"

namespace mghft {

/// Architecture and loss switches. View indices are 1-based (T1..T4).
struct FusionConfig {
  bool enable_cl = true;
  bool enable_gf = true;
  bool enable_lf = true;
  bool enable_tgfa = true;
  bool replace_soft_fusion_with_cross_attention = false;
  std::array<std::size_t, kNumStages> view_order{1, 2, 3, 4};
  std::optional<std::size_t> repeat_single_view;
  bool concat_all_views = false;
  std::size_t fusion_dim = 128;
  std::size_t tgfa_heads = 4;
  std::size_t fusion_text_len = 32;  // text rows used by local soft-fusion
  double align_weight = 0.5;
  AlignmentLossConfig loss;

  void validate() const;
  /// 1-based view injected at `stage`; 0 when all views are concatenated.
  std::size_t view_for_stage(std::size_t stage) const;
  /// Short name such as "CL+GF+LF+TGFA", "backbone", "order 2-1-3-4" or "T4x4".
  std::string label() const;
};

struct ModelConfig {
  BackboneConfig backbone;
  FusionConfig fusion;
  std::size_t text_dim = 64;
  std::size_t num_classes = 7;

  void validate() const;
};

struct Example {
  std::string sticker_id;
  std::string image_ref;
  Tensor image;  // [C x H x W], values in [0, 1]
  ViewEmbeddings views;
  std::size_t label = 0;
};

struct AttentionMap {
  std::size_t grid = 0;
  std::vector<double> values;  // grid x grid, row-major
  std::vector<std::size_t> selected;
};

struct ForwardResult {
  Tensor logits;                 // [B x classes]
  std::vector<StagePair> align;  // one per stage when CL is enabled, else empty
  std::vector<std::array<AttentionMap, kNumStages>> attention;  // per example
};

struct LossBreakdown {
  Tensor total;
  double classification = 0.0;
  double alignment = 0.0;  // 0 when CL is disabled
};

/// Cross-entropy plus align_weight times the alignment loss (when enabled).
LossBreakdown total_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& align,
                         const FusionConfig& config);

/// The full model: pyramid backbone, per-stage view injection, global fusion,
/// text-guided fusion attention and the emotion classifier.
class MghftModel {
 public:
  MghftModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const PvtBackbone& backbone() const { return *backbone_; }

  ForwardResult forward(std::span<const Example* const> batch) const;
  ForwardResult forward(std::span<const Example> batch) const;
  /// Alignment loss of a forward result (undefined tensor when CL is off).
  Tensor alignment(const ForwardResult& result) const;
  LossBreakdown loss(const ForwardResult& result, std::span<const std::size_t> labels) const;

 private:
  struct StageHeads {
    Linear global_proj;  // stage dim -> fusion dim
    Linear local_proj;   // stage dim -> fusion dim
    std::optional<Linear> align_text;            // CL: text -> stage dim
    std::optional<Linear> local_text;            // LF: text -> stage dim
    std::optional<CrossAttentionFusion> local_ca;  // LF under the CA ablation
    std::optional<Linear> global_text;           // GF: text -> fusion dim
    std::optional<Linear> tgfa_text;             // TGFA: text -> fusion dim
  };

  struct StageText {
    Tensor sequence;  // rows used for local fusion
    Tensor pooled;    // [1 x text_dim]
  };
  StageText stage_text(const Example& ex, std::size_t stage) const;

  ModelConfig config_;
  ParameterStore params_;
  std::unique_ptr<PvtBackbone> backbone_;
  std::vector<StageHeads> heads_;
  std::unique_ptr<TextGuidedFusionAttention> tgfa_;
  std::unique_ptr<Classifier> classifier_;
};

}  // namespace mghft
