#include "mghft/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mghft/ops.hpp"

namespace mghft {

void BackboneConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || in_channels == 0) {
    throw ConfigError("image_size, patch_size and in_channels must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  const std::size_t grid0 = image_size / patch_size;
  if (grid0 % 8 != 0) {
    throw ConfigError("stage-1 grid " + std::to_string(grid0) + " must be divisible by 8 for three 2x2 merges");
  }
  if (local_k == 0) throw ConfigError("local_k must be positive");
  if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
  for (std::size_t s = 0; s < kNumStages; ++s) {
    if (stage_dims[s] == 0 || stage_heads[s] == 0 || sr_ratios[s] == 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + ": dims, heads and sr ratio must be positive");
    }
    if (stage_dims[s] % stage_heads[s] != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + ": dim " + std::to_string(stage_dims[s]) +
                        " not divisible by " + std::to_string(stage_heads[s]) + " heads");
    }
    if (grid_size(s) % effective_sr(s) != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + ": grid " + std::to_string(grid_size(s)) +
                        " not divisible by reduction ratio " + std::to_string(effective_sr(s)));
    }
  }
}

std::size_t BackboneConfig::grid_size(std::size_t stage) const { return (image_size / patch_size) >> stage; }

std::size_t BackboneConfig::effective_sr(std::size_t stage) const {
  return std::min(sr_ratios[stage], grid_size(stage));
}

std::size_t BackboneConfig::local_count(std::size_t stage) const { return std::min(local_k, token_count(stage)); }

std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

namespace {

// Column order inside a patch is (dy, dx, channel).
std::vector<std::size_t> image_patch_index(std::size_t channels, std::size_t size, std::size_t patch) {
  const std::size_t grid = size / patch;
  std::vector<std::size_t> index;
  index.reserve(channels * size * size);
  for (std::size_t ty = 0; ty < grid; ++ty) {
    for (std::size_t tx = 0; tx < grid; ++tx) {
      for (std::size_t dy = 0; dy < patch; ++dy) {
        for (std::size_t dx = 0; dx < patch; ++dx) {
          for (std::size_t c = 0; c < channels; ++c) {
            index.push_back(c * size * size + (ty * patch + dy) * size + (tx * patch + dx));
          }
        }
      }
    }
  }
  return index;
}

std::vector<std::size_t> token_merge_index(std::size_t dim, std::size_t grid) {
  const std::size_t out_grid = grid / 2;
  std::vector<std::size_t> index;
  index.reserve(dim * grid * grid);
  for (std::size_t ty = 0; ty < out_grid; ++ty) {
    for (std::size_t tx = 0; tx < out_grid; ++tx) {
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t token = (2 * ty + dy) * grid + (2 * tx + dx);
          for (std::size_t c = 0; c < dim; ++c) index.push_back(token * dim + c);
        }
      }
    }
  }
  return index;
}

Tensor pooling_matrix(std::size_t grid, std::size_t ratio) {
  const std::size_t out = grid / ratio;
  const std::size_t n = grid * grid;
  std::vector<double> w(out * out * n, 0.0);
  const double inv = 1.0 / static_cast<double>(ratio * ratio);
  for (std::size_t oy = 0; oy < out; ++oy) {
    for (std::size_t ox = 0; ox < out; ++ox) {
      const std::size_t row = oy * out + ox;
      for (std::size_t dy = 0; dy < ratio; ++dy) {
        for (std::size_t dx = 0; dx < ratio; ++dx) {
          w[row * n + (oy * ratio + dy) * grid + (ox * ratio + dx)] = inv;
        }
      }
    }
  }
  return Tensor::from({out * out, n}, std::move(w));
}

}  // namespace

PvtBackbone::PvtBackbone(ParameterStore& store, BackboneConfig config, Rng& rng, const std::string& prefix)
    : config_(config) {
  config_.validate();
  const double sd = config_.init_std;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::string name = prefix + ".stage" + std::to_string(s + 1);
    const std::size_t d = config_.stage_dims[s];
    const std::size_t grid = config_.grid_size(s);
    Stage st;
    if (s == 0) {
      const std::size_t p = config_.patch_size;
      st.embed = Linear(store, name + ".patch_embed", config_.in_channels * p * p, d, rng, sd);
      st.patch_index = image_patch_index(config_.in_channels, config_.image_size, p);
    } else {
      const std::size_t prev = config_.stage_dims[s - 1];
      st.embed = Linear(store, name + ".patch_embed", prev * 4, d, rng, sd);
      st.patch_index = token_merge_index(prev, grid * 2);
    }
    st.pos_embed = store.add_truncated_normal(name + ".pos_embed", {grid * grid, d}, rng, sd);
    st.cls_token = store.add_truncated_normal(name + ".cls_token", {1, d}, rng, sd);
    for (std::size_t b = 0; b < config_.stage_depths[s]; ++b) {
      const std::string bn = name + ".block" + std::to_string(b + 1);
      const std::size_t hidden = d * config_.mlp_ratio;
      st.blocks.push_back(Block{LayerNorm(store, bn + ".norm1", d), Linear(store, bn + ".attn.q", d, d, rng, sd),
                                Linear(store, bn + ".attn.k", d, d, rng, sd),
                                Linear(store, bn + ".attn.v", d, d, rng, sd),
                                Linear(store, bn + ".attn.proj", d, d, rng, sd), LayerNorm(store, bn + ".norm2", d),
                                Linear(store, bn + ".mlp.fc1", d, hidden, rng, sd),
                                Linear(store, bn + ".mlp.fc2", hidden, d, rng, sd)});
    }
    if (config_.effective_sr(s) > 1) st.pool = pooling_matrix(grid, config_.effective_sr(s));
    stages_.push_back(std::move(st));
  }
}

Tensor PvtBackbone::patch_embed(std::size_t stage, const Tensor& input) const {
  if (stage >= kNumStages) throw std::out_of_range("stage index out of range");
  const Stage& st = stages_[stage];
  const std::size_t grid = config_.grid_size(stage);
  Shape expected;
  if (stage == 0) {
    expected = {config_.in_channels, config_.image_size, config_.image_size};
  } else {
    expected = {grid * grid * 4, config_.stage_dims[stage - 1]};
  }
  if (input.shape() != expected) {
    throw DimensionError("patch_embed stage " + std::to_string(stage + 1) + ": expected input " +
                         shape_str(expected) + ", got " + shape_str(input.shape()));
  }
  const std::size_t cols = st.embed.in_features();
  Tensor patches = gather(input, st.patch_index, {grid * grid, cols});
  return add(st.embed(patches), st.pos_embed);
}

Tensor PvtBackbone::attention(const Stage& stage, const Block& block, std::size_t heads, const Tensor& normed,
                              std::vector<double>* attn_cls) const {
  const std::size_t rows = normed.dim(0);
  const std::size_t d = normed.dim(1);
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor kv_input = normed;
  if (stage.pool.defined()) {
    Tensor cls = slice_rows(normed, 0, 1);
    Tensor pooled = matmul(stage.pool, slice_rows(normed, 1, rows - 1));
    std::vector<Tensor> parts{cls, pooled};
    kv_input = concat_rows(parts);
  }
  Tensor q = block.q(normed);
  Tensor k = block.k(kv_input);
  Tensor v = block.v(kv_input);

  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    head_out.push_back(matmul(weights, vh));
  }

  if (attn_cls) {
    // Selection scores: the CLS query against every unreduced spatial key.
    NoGradGuard no_grad;
    const std::size_t n = rows - 1;
    Tensor full_k = block.k(slice_rows(normed, 1, n)).detach();
    Tensor cls_q = slice_rows(q, 0, 1).detach();
    attn_cls->assign(n, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor scores = matmul(slice_cols(cls_q, h * dh, dh), transpose(slice_cols(full_k, h * dh, dh)));
      Tensor w = softmax(scale(scores, inv_sqrt), 1);
      for (std::size_t j = 0; j < n; ++j) (*attn_cls)[j] += w.at(j) / static_cast<double>(heads);
    }
  }
  return heads == 1 ? head_out.front() : concat_cols(head_out);
}

StageOutput PvtBackbone::stage_forward(std::size_t stage, const Tensor& tokens) const {
  if (stage >= kNumStages) throw std::out_of_range("stage index out of range");
  const Stage& st = stages_[stage];
  const std::size_t n = config_.token_count(stage);
  const std::size_t d = config_.stage_dims[stage];
  if (tokens.shape() != Shape{n, d}) {
    throw DimensionError("stage " + std::to_string(stage + 1) + ": expected tokens " + shape_str({n, d}) +
                         ", got " + shape_str(tokens.shape()));
  }
  std::vector<Tensor> parts{st.cls_token, tokens};
  Tensor x = concat_rows(parts);

  StageOutput out;
  out.features.grid = config_.grid_size(stage);
  std::vector<double>* attn_target = nullptr;
  for (std::size_t b = 0; b < st.blocks.size(); ++b) {
    const Block& block = st.blocks[b];
    attn_target = (b + 1 == st.blocks.size()) ? &out.features.attn_cls : nullptr;
    Tensor attn = attention(st, block, config_.stage_heads[stage], block.norm1(x), attn_target);
    x = add(x, block.proj(attn));
    x = add(x, block.fc2(gelu(block.fc1(block.norm2(x)))));
  }
  if (st.blocks.empty()) {
    // Depth-0 stage: no attention was computed, so score tokens uniformly.
    out.features.attn_cls.assign(n, 1.0 / static_cast<double>(n));
  }

  out.features.v_g = slice_rows(x, 0, 1);
  out.tokens = slice_rows(x, 1, n);
  out.features.selected = top_k_indices(out.features.attn_cls, config_.local_count(stage));
  out.features.v_l = gather_rows(out.tokens, out.features.selected);
  return out;
}

std::vector<StageFeatures> PvtBackbone::forward(const Tensor& image) const {
  const Shape expected{config_.in_channels, config_.image_size, config_.image_size};
  if (image.shape() != expected) {
    throw std::invalid_argument("backbone expects an image of shape " + shape_str(expected) + ", got " +
                                shape_str(image.shape()));
  }
  std::vector<StageFeatures> features;
  features.reserve(kNumStages);
  Tensor input = image;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    StageOutput out = stage_forward(s, patch_embed(s, input));
    input = out.tokens;
    features.push_back(std::move(out.features));
  }
  return features;
}

}  // namespace mghft
