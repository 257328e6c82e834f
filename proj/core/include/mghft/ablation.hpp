#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mghft/dataset.hpp"
#include "mghft/metrics.hpp"
#include "mghft/model.hpp"
#include "mghft/trainer.hpp"

namespace mghft {

enum class AblationTable { kModules, kViewOrder, kVariants, kCustom };

/// The ten module-toggle rows: backbone only, each module alone, every
/// three-module combination and the full model.
std::vector<FusionConfig> module_table_configs(const FusionConfig& base);
/// The eight view-injection rows: six stage orderings, T4 everywhere and all
/// views concatenated.
std::vector<FusionConfig> view_table_configs(const FusionConfig& base);
/// Two-module combinations (CG, GL, CT), the cross-attention replacement and
/// the full model.
std::vector<FusionConfig> variant_configs(const FusionConfig& base);

/// One variant, '+'-separated: module names CL, GF, LF, TGFA, CA, or "none";
/// and at most one view term "order=2-1-3-4", "repeat=4" or "concat".
FusionConfig parse_variant(std::string_view spec, const FusionConfig& base);
/// Comma-separated variants, or "powerset=CL,GF,..." for every subset of the
/// listed modules. Duplicates collapse; the first occurrence keeps its place.
std::vector<FusionConfig> parse_sweep(std::string_view spec, const FusionConfig& base);

/// Canonical identity of a configuration; equal keys train identical models.
std::string config_key(const FusionConfig& config);

struct AblationRow {
  FusionConfig fusion;
  EvalReport report;
  std::size_t steps = 0;
};

/// Trains and evaluates every configuration with the same seed. Each
/// configuration is validated before any training starts. Scores come from
/// the test split, or the validation split when the test split is empty.
std::vector<AblationRow> run_ablation(const std::vector<FusionConfig>& configs, const ModelConfig& base,
                                      const DatasetSplits& data, const TrainConfig& train_config,
                                      std::uint64_t model_seed);

/// Plain-text table with percentage accuracy and F1 columns.
std::string format_table(const std::vector<AblationRow>& rows, AblationTable layout,
                         F1Average average = F1Average::kMacro);

}  // namespace mghft
