#include "mghft/ablation.hpp"

#include <cstdio>
#include <set>

namespace mghft {

namespace {

FusionConfig with_modules(const FusionConfig& base, bool cl, bool gf, bool lf, bool tgfa) {
  FusionConfig c = base;
  c.enable_cl = cl;
  c.enable_gf = gf;
  c.enable_lf = lf;
  c.enable_tgfa = tgfa;
  c.replace_soft_fusion_with_cross_attention = false;
  return c;
}

FusionConfig with_views(const FusionConfig& base, std::array<std::size_t, kNumStages> order) {
  FusionConfig c = base;
  c.view_order = order;
  c.repeat_single_view.reset();
  c.concat_all_views = false;
  return c;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_view_index(const std::string& s) {
  if (s.size() != 1 || s[0] < '1' || s[0] > '4') throw ConfigError("view index must be 1..4, got '" + s + "'");
  return static_cast<std::size_t>(s[0] - '0');
}

}  // namespace

std::vector<FusionConfig> module_table_configs(const FusionConfig& base) {
  return {
      with_modules(base, false, false, false, false), with_modules(base, true, false, false, false),
      with_modules(base, false, true, false, false),  with_modules(base, false, false, true, false),
      with_modules(base, false, false, false, true),  with_modules(base, true, true, true, false),
      with_modules(base, true, true, false, true),    with_modules(base, true, false, true, true),
      with_modules(base, false, true, true, true),    with_modules(base, true, true, true, true),
  };
}

std::vector<FusionConfig> view_table_configs(const FusionConfig& base) {
  std::vector<FusionConfig> out;
  for (const auto& order : std::vector<std::array<std::size_t, kNumStages>>{
           {1, 2, 3, 4}, {1, 2, 4, 3}, {2, 1, 3, 4}, {2, 1, 4, 3}, {3, 4, 1, 2}, {4, 3, 2, 1}}) {
    out.push_back(with_views(base, order));
  }
  FusionConfig repeat = with_views(base, {1, 2, 3, 4});
  repeat.repeat_single_view = 4;
  out.push_back(repeat);
  FusionConfig concat = with_views(base, {1, 2, 3, 4});
  concat.concat_all_views = true;
  out.push_back(concat);
  return out;
}

std::vector<FusionConfig> variant_configs(const FusionConfig& base) {
  FusionConfig ca = with_modules(base, true, true, true, true);
  ca.replace_soft_fusion_with_cross_attention = true;
  return {with_modules(base, true, true, false, false), with_modules(base, false, true, true, false),
          with_modules(base, true, false, false, true), ca, with_modules(base, true, true, true, true)};
}

FusionConfig parse_variant(std::string_view spec, const FusionConfig& base) {
  FusionConfig c = with_views(with_modules(base, false, false, false, false), base.view_order);
  bool view_term = false;
  for (const std::string& term : split(spec, '+')) {
    if (term == "CL") {
      c.enable_cl = true;
    } else if (term == "GF") {
      c.enable_gf = true;
    } else if (term == "LF") {
      c.enable_lf = true;
    } else if (term == "TGFA") {
      c.enable_tgfa = true;
    } else if (term == "CA") {
      c.replace_soft_fusion_with_cross_attention = true;
    } else if (term == "none" || term == "backbone") {
    } else if (term.rfind("order=", 0) == 0 || term == "concat" || term.rfind("repeat=", 0) == 0) {
      if (view_term) throw ConfigError("variant '" + std::string(spec) + "' has more than one view term");
      view_term = true;
      if (term == "concat") {
        c.concat_all_views = true;
      } else if (term[0] == 'r') {
        c.repeat_single_view = parse_view_index(term.substr(7));
      } else {
        const auto parts = split(std::string_view(term).substr(6), '-');
        if (parts.size() != kNumStages) throw ConfigError("order needs four views, got '" + term + "'");
        for (std::size_t i = 0; i < kNumStages; ++i) c.view_order[i] = parse_view_index(parts[i]);
      }
    } else {
      throw ConfigError("unknown term '" + term + "' in variant '" + std::string(spec) + "'");
    }
  }
  c.validate();
  return c;
}

std::vector<FusionConfig> parse_sweep(std::string_view spec, const FusionConfig& base) {
  std::vector<FusionConfig> candidates;
  const std::string s = trim(spec);
  if (s.rfind("powerset=", 0) == 0) {
    std::vector<std::string> modules;
    std::set<std::string> seen;
    for (const auto& m : split(std::string_view(s).substr(9), ',')) {
      if (m != "CL" && m != "GF" && m != "LF" && m != "TGFA") {
        throw ConfigError("powerset accepts CL, GF, LF, TGFA; got '" + m + "'");
      }
      if (seen.insert(m).second) modules.push_back(m);
    }
    for (std::size_t mask = 0; mask < (std::size_t{1} << modules.size()); ++mask) {
      std::string variant = "none";
      for (std::size_t i = 0; i < modules.size(); ++i) {
        if (mask & (std::size_t{1} << i)) variant += "+" + modules[i];
      }
      candidates.push_back(parse_variant(variant, base));
    }
  } else {
    for (const auto& v : split(s, ',')) {
      if (v.empty()) throw ConfigError("empty variant in sweep '" + s + "'");
      candidates.push_back(parse_variant(v, base));
    }
  }
  std::vector<FusionConfig> out;
  std::set<std::string> keys;
  for (auto& c : candidates) {
    if (keys.insert(config_key(c)).second) out.push_back(std::move(c));
  }
  return out;
}

std::string config_key(const FusionConfig& c) {
  std::string key;
  key += c.enable_cl ? '1' : '0';
  key += c.enable_gf ? '1' : '0';
  key += c.enable_lf ? '1' : '0';
  key += c.enable_tgfa ? '1' : '0';
  key += c.replace_soft_fusion_with_cross_attention ? '1' : '0';
  key += '/';
  for (std::size_t s = 0; s < kNumStages; ++s) key += std::to_string(c.view_for_stage(s));
  return key;
}

std::vector<AblationRow> run_ablation(const std::vector<FusionConfig>& configs, const ModelConfig& base,
                                      const DatasetSplits& data, const TrainConfig& train_config,
                                      std::uint64_t model_seed) {
  std::vector<ModelConfig> models;
  for (const auto& fusion : configs) {
    ModelConfig m = base;
    m.fusion = fusion;
    m.validate();
    models.push_back(std::move(m));
  }
  train_config.validate();
  const std::vector<Example>& eval_split = data.test.empty() ? data.val : data.test;

  std::vector<AblationRow> rows;
  for (const auto& m : models) {
    MghftModel model(m, model_seed);
    TrainResult result = train(model, data.train, data.val, train_config);
    rows.push_back({m.fusion, evaluate(model, eval_split), result.steps});
  }
  return rows;
}

std::string format_table(const std::vector<AblationRow>& rows, AblationTable layout, F1Average average) {
  std::string out;
  char buf[256];
  auto mark = [](bool on) { return on ? "x" : "-"; };
  auto stage_view = [](const FusionConfig& c, std::size_t s) {
    const std::size_t v = c.view_for_stage(s);
    return v == 0 ? std::string("T") : "T" + std::to_string(v);
  };
  switch (layout) {
    case AblationTable::kModules:
      out += "  CL    GF    LF  TGFA  Accuracy      F1\n";
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%4s  %4s  %4s  %4s  %8.2f  %6.2f\n", mark(r.fusion.enable_cl),
                      mark(r.fusion.enable_gf), mark(r.fusion.enable_lf), mark(r.fusion.enable_tgfa),
                      100.0 * r.report.accuracy, 100.0 * r.report.f1(average));
        out += buf;
      }
      break;
    case AblationTable::kViewOrder:
      out += "Stage 1  Stage 2  Stage 3  Stage 4  Accuracy      F1\n";
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%7s  %7s  %7s  %7s  %8.2f  %6.2f\n", stage_view(r.fusion, 0).c_str(),
                      stage_view(r.fusion, 1).c_str(), stage_view(r.fusion, 2).c_str(),
                      stage_view(r.fusion, 3).c_str(), 100.0 * r.report.accuracy, 100.0 * r.report.f1(average));
        out += buf;
      }
      break;
    case AblationTable::kVariants:
    case AblationTable::kCustom:
      out += "Variant                      Accuracy      F1\n";
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-27s  %8.2f  %6.2f\n", r.fusion.label().c_str(), 100.0 * r.report.accuracy,
                      100.0 * r.report.f1(average));
        out += buf;
      }
      break;
  }
  return out;
}

}  // namespace mghft
