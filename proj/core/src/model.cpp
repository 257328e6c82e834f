#include "mghft/model.hpp"

#include <algorithm>
#include <numeric>

#include "mghft/ops.hpp"

namespace mghft {

void FusionConfig::validate() const {
  if (repeat_single_view && concat_all_views) {
    throw ConfigError("repeat_single_view and concat_all_views are mutually exclusive");
  }
  if (repeat_single_view && (*repeat_single_view < 1 || *repeat_single_view > kNumViews)) {
    throw ConfigError("repeat_single_view must be in 1..4");
  }
  if (!repeat_single_view && !concat_all_views) {
    std::array<std::size_t, kNumStages> sorted = view_order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != std::array<std::size_t, kNumStages>{1, 2, 3, 4}) {
      throw ConfigError("view_order must be a permutation of 1..4");
    }
  }
  if (replace_soft_fusion_with_cross_attention && !enable_lf) {
    throw ConfigError("the cross-attention replacement applies to local fusion, which is disabled");
  }
  if (fusion_dim == 0 || fusion_text_len == 0) throw ConfigError("fusion_dim and fusion_text_len must be positive");
  if (tgfa_heads == 0 || fusion_dim % tgfa_heads != 0) {
    throw ConfigError("fusion_dim " + std::to_string(fusion_dim) + " is not divisible by tgfa_heads " +
                      std::to_string(tgfa_heads));
  }
  if (!(align_weight >= 0.0)) throw ConfigError("align_weight must be non-negative");
  loss.validate();
}

std::size_t FusionConfig::view_for_stage(std::size_t stage) const {
  if (concat_all_views) return 0;
  if (repeat_single_view) return *repeat_single_view;
  return view_order.at(stage);
}

std::string FusionConfig::label() const {
  std::string modules;
  auto append = [&](bool on, const char* name) {
    if (!on) return;
    if (!modules.empty()) modules += '+';
    modules += name;
  };
  append(enable_cl, "CL");
  append(enable_gf, "GF");
  append(enable_lf, "LF");
  append(enable_tgfa, "TGFA");
  if (modules.empty()) modules = "backbone";
  if (replace_soft_fusion_with_cross_attention) modules += " (CA)";

  std::string views;
  if (concat_all_views) {
    views = "T";
  } else if (repeat_single_view) {
    views = "T" + std::to_string(*repeat_single_view) + "x4";
  } else if (view_order != std::array<std::size_t, kNumStages>{1, 2, 3, 4}) {
    views = "order ";
    for (std::size_t i = 0; i < kNumStages; ++i) views += (i ? "-" : "") + std::to_string(view_order[i]);
  }
  return views.empty() ? modules : modules + " " + views;
}

void ModelConfig::validate() const {
  backbone.validate();
  fusion.validate();
  if (text_dim == 0) throw ConfigError("text_dim must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
}

LossBreakdown total_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& align,
                         const FusionConfig& config) {
  if (config.enable_cl != align.defined()) {
    throw ContractError("alignment loss must be present exactly when contrastive learning is enabled");
  }
  LossBreakdown out;
  Tensor ce = cross_entropy(logits, labels);
  out.classification = ce.item();
  out.total = ce;
  if (config.enable_cl) {
    out.alignment = align.item();
    out.total = add(ce, scale(align, config.align_weight));
  }
  return out;
}

MghftModel::MghftModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const double sd = config_.backbone.init_std;
  const FusionConfig& fc = config_.fusion;
  backbone_ = std::make_unique<PvtBackbone>(params_, config_.backbone, rng);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::string stage = std::to_string(s + 1);
    const std::size_t d = config_.backbone.stage_dims[s];
    StageHeads h{Linear(params_, "head.global_proj.stage" + stage, d, fc.fusion_dim, rng, sd),
                 Linear(params_, "head.local_proj.stage" + stage, d, fc.fusion_dim, rng, sd),
                 {}, {}, {}, {}, {}};
    if (fc.enable_cl) h.align_text.emplace(params_, "align.text_proj.stage" + stage, config_.text_dim, d, rng, sd);
    if (fc.enable_lf) {
      h.local_text.emplace(params_, "local_fusion.text_proj.stage" + stage, config_.text_dim, d, rng, sd);
      if (fc.replace_soft_fusion_with_cross_attention) {
        h.local_ca.emplace(params_, "local_fusion.cross_attn.stage" + stage, d, rng, sd);
      }
    }
    if (fc.enable_gf) {
      h.global_text.emplace(params_, "global_fusion.text_proj.stage" + stage, config_.text_dim, fc.fusion_dim, rng, sd);
    }
    if (fc.enable_tgfa) {
      h.tgfa_text.emplace(params_, "tgfa.text_proj.stage" + stage, config_.text_dim, fc.fusion_dim, rng, sd);
    }
    heads_.push_back(std::move(h));
  }
  if (fc.enable_tgfa) {
    tgfa_ = std::make_unique<TextGuidedFusionAttention>(params_, "tgfa", fc.fusion_dim, fc.tgfa_heads, rng, 4, sd);
  }
  classifier_ = std::make_unique<Classifier>(params_, "classifier", fc.fusion_dim, config_.num_classes, rng, sd);
}

MghftModel::StageText MghftModel::stage_text(const Example& ex, std::size_t stage) const {
  const std::size_t view = config_.fusion.view_for_stage(stage);
  const std::size_t max_rows = config_.fusion.fusion_text_len;
  const ViewEmbeddings& v = ex.views;
  for (std::size_t i = 0; i < kNumViews; ++i) {
    if (!v.sequences[i].defined() || !v.pooled[i].defined()) {
      throw DataError("sticker " + ex.sticker_id + " is missing view embedding " + std::to_string(i + 1));
    }
    if (v.sequences[i].dim(1) != config_.text_dim) {
      throw DataError("sticker " + ex.sticker_id + ": view embedding width " + std::to_string(v.sequences[i].dim(1)) +
                      " != text_dim " + std::to_string(config_.text_dim));
    }
  }
  auto head_rows = [&](const Tensor& seq) {
    return seq.dim(0) <= max_rows ? seq : slice_rows(seq, 0, max_rows);
  };
  if (view != 0) return {head_rows(v.sequences[view - 1]), v.pooled[view - 1]};

  // All views at once: one long sequence built from every view in order.
  std::vector<Tensor> parts;
  std::vector<double> pooled(config_.text_dim, 0.0);
  double rows = 0.0;
  for (std::size_t i = 0; i < kNumViews; ++i) {
    parts.push_back(head_rows(v.sequences[i]));
    const double n = static_cast<double>(v.sequences[i].dim(0));
    for (std::size_t c = 0; c < config_.text_dim; ++c) pooled[c] += n * v.pooled[i].at(c);
    rows += n;
  }
  for (auto& x : pooled) x /= rows;
  return {concat_rows(parts), Tensor::from({1, config_.text_dim}, std::move(pooled))};
}

ForwardResult MghftModel::forward(std::span<const Example> batch) const {
  std::vector<const Example*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return forward(std::span<const Example* const>(ptrs));
}

ForwardResult MghftModel::forward(std::span<const Example* const> batch) const {
  if (batch.empty()) throw std::invalid_argument("forward: empty batch");
  const FusionConfig& fc = config_.fusion;
  ForwardResult result;
  std::vector<Tensor> logit_rows;
  std::array<std::vector<Tensor>, kNumStages> align_visual, align_text;

  for (const Example* ex : batch) {
    std::vector<StageFeatures> feats = backbone_->forward(ex->image);
    std::vector<Tensor> globals, locals, global_texts, tgfa_texts;
    std::array<AttentionMap, kNumStages> maps;
    for (std::size_t s = 0; s < kNumStages; ++s) {
      const StageHeads& h = heads_[s];
      const StageFeatures& f = feats[s];
      StageText text = stage_text(*ex, s);

      Tensor local = f.v_l;
      if (fc.enable_lf) {
        Tensor projected = (*h.local_text)(text.sequence);
        local = h.local_ca ? (*h.local_ca)(local, projected) : soft_fusion(local, projected);
      }
      locals.push_back(mean_rows(h.local_proj(local)));
      globals.push_back(h.global_proj(f.v_g));

      if (fc.enable_cl) {
        align_visual[s].push_back(f.v_g);
        align_text[s].push_back((*h.align_text)(text.pooled));
      }
      if (fc.enable_gf) global_texts.push_back((*h.global_text)(text.pooled));
      if (fc.enable_tgfa) tgfa_texts.push_back((*h.tgfa_text)(text.pooled));
      maps[s] = {f.grid, f.attn_cls, f.selected};
    }

    Tensor h_g = concat_rows(globals);
    if (fc.enable_gf) h_g = global_fusion(h_g, concat_rows(global_texts));
    std::vector<Tensor> visual{h_g, concat_rows(locals)};
    Tensor h_v = concat_rows(visual);
    Tensor fused = fc.enable_tgfa ? (*tgfa_)(h_v, concat_rows(tgfa_texts)) : h_v;
    logit_rows.push_back((*classifier_)(fused));
    result.attention.push_back(std::move(maps));
  }

  result.logits = concat_rows(logit_rows);
  if (fc.enable_cl) {
    for (std::size_t s = 0; s < kNumStages; ++s) {
      result.align.push_back({concat_rows(align_visual[s]), concat_rows(align_text[s])});
    }
  }
  return result;
}

Tensor MghftModel::alignment(const ForwardResult& result) const {
  if (!config_.fusion.enable_cl) return {};
  return alignment_loss(result.align, config_.fusion.loss);
}

LossBreakdown MghftModel::loss(const ForwardResult& result, std::span<const std::size_t> labels) const {
  return total_loss(result.logits, labels, alignment(result), config_.fusion);
}

}  // namespace mghft
