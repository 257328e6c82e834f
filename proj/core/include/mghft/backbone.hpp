#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mghft/nn.hpp"
#include "mghft/tensor.hpp"

namespace mghft {

inline constexpr std::size_t kNumStages = 4;

struct BackboneConfig {
  std::size_t image_size = 64;
  std::size_t in_channels = 3;
  std::size_t patch_size = 4;  // stage-1 stride; later stages merge 2x2
  std::array<std::size_t, kNumStages> stage_dims{32, 64, 96, 128};
  std::array<std::size_t, kNumStages> stage_depths{1, 1, 1, 1};
  std::array<std::size_t, kNumStages> stage_heads{1, 2, 4, 4};
  std::array<std::size_t, kNumStages> sr_ratios{8, 4, 2, 1};
  std::size_t mlp_ratio = 4;
  std::size_t local_k = 8;
  double init_std = kInitStd;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  /// Side length of the token grid at `stage`.
  std::size_t grid_size(std::size_t stage) const;
  std::size_t token_count(std::size_t stage) const { return grid_size(stage) * grid_size(stage); }
  /// Pooling window actually used for keys/values at `stage`.
  std::size_t effective_sr(std::size_t stage) const;
  /// Local tokens selected at `stage`: min(local_k, token_count(stage)).
  std::size_t local_count(std::size_t stage) const;
};

struct StageFeatures {
  Tensor v_g;                          // [1 x d] stage CLS output
  Tensor v_l;                          // [k x d] selected spatial token outputs
  std::vector<double> attn_cls;        // CLS -> spatial attention, final block, head-averaged
  std::vector<std::size_t> selected;   // spatial indices of v_l rows, in row order
  std::size_t grid = 0;                // attn_cls is grid x grid, row-major
};

struct StageOutput {
  Tensor tokens;  // [N x d] spatial outputs (CLS removed)
  StageFeatures features;
};

/// Indices of the k largest scores, highest first; ties go to the lower index.
std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k);

/// Miniature pyramid vision transformer. Each stage prepends a fresh CLS
/// token, runs spatial-reduction attention blocks and reports the CLS output
/// together with the spatial tokens it attends to most.
class PvtBackbone {
 public:
  PvtBackbone(ParameterStore& store, BackboneConfig config, Rng& rng, const std::string& prefix = "backbone");

  const BackboneConfig& config() const { return config_; }

  /// Stage 0 takes an image [C x H x W]; later stages take the previous
  /// stage's [N x d] tokens on a square grid and merge 2x2 neighbourhoods.
  Tensor patch_embed(std::size_t stage, const Tensor& input) const;
  StageOutput stage_forward(std::size_t stage, const Tensor& tokens) const;
  std::vector<StageFeatures> forward(const Tensor& image) const;

 private:
  struct Block {
    LayerNorm norm1;
    Linear q, k, v, proj;
    LayerNorm norm2;
    Linear fc1, fc2;
  };
  struct Stage {
    Linear embed;
    Tensor pos_embed;
    Tensor cls_token;
    std::vector<Block> blocks;
    std::vector<std::size_t> patch_index;  // im2col gather indices
    Tensor pool;                           // [M x N] averaging matrix, undefined when no reduction
  };

  Tensor attention(const Stage& stage, const Block& block, std::size_t heads, const Tensor& normed,
                   std::vector<double>* attn_cls) const;

  BackboneConfig config_;
  std::vector<Stage> stages_;
};

}  // namespace mghft
