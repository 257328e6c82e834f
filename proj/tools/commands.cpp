#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "mghft/ablation.hpp"
#include "mghft/archive.hpp"
#include "mghft/attention_export.hpp"
#include "mghft/config.hpp"
#include "mghft/gradcheck_suite.hpp"
#include "mghft/mllm.hpp"
#include "mghft/synthetic.hpp"

namespace mghft::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

ExperimentConfig load_config(const CommonArgs& args) {
  return args.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(args.config);
}

fs::path checkpoint_path(const ExperimentConfig& config, const std::string& flag) {
  const fs::path path = flag.empty() ? config.output_dir / "checkpoint.marc" : fs::path(flag);
  if (!fs::exists(path)) {
    throw std::runtime_error("checkpoint not found: " + path.string() + " (train first or pass --checkpoint)");
  }
  return path;
}

const std::vector<Example>& pick_split(const DatasetSplits& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  return data.test;
}

void report_exclusions(const DatasetSplits& data) {
  std::cerr << "loaded " << data.train.size() << " train, " << data.val.size() << " val, " << data.test.size()
            << " test examples";
  if (data.excluded_missing_views) std::cerr << "; excluded " << data.excluded_missing_views << " without views";
  std::cerr << "\n";
}

F1Average parse_average(const std::string& name) {
  return name == "weighted" ? F1Average::kWeighted : F1Average::kMacro;
}

void print_report(const EvalReport& r, const std::vector<std::string>& classes) {
  std::printf("examples     %zu\n", r.total);
  std::printf("accuracy     %.4f\n", r.accuracy);
  std::printf("macro_f1     %.4f\n", r.macro_f1);
  std::printf("weighted_f1  %.4f\n\n", r.weighted_f1);
  std::printf("%-12s %9s %9s %9s %8s\n", "class", "precision", "recall", "f1", "support");
  for (std::size_t c = 0; c < r.num_classes; ++c) {
    const std::string name = c < classes.size() ? classes[c] : std::to_string(c);
    std::printf("%-12s %9.4f %9.4f %9.4f %8zu\n", name.c_str(), r.per_class_precision[c], r.per_class_recall[c],
                r.per_class_f1[c], r.support[c]);
  }
  std::printf("\nconfusion (rows actual, columns predicted)\n");
  for (const auto& row : r.confusion) {
    for (std::size_t v : row) std::printf("%6zu", v);
    std::printf("\n");
  }
}

ordered_json report_json(const EvalReport& r, const std::vector<std::string>& classes) {
  ordered_json j;
  j["total"] = r.total;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["weighted_f1"] = r.weighted_f1;
  j["class_names"] = classes;
  j["per_class_precision"] = r.per_class_precision;
  j["per_class_recall"] = r.per_class_recall;
  j["per_class_f1"] = r.per_class_f1;
  j["support"] = r.support;
  j["confusion"] = r.confusion;
  return j;
}

}  // namespace

int run_train(const TrainArgs& args) {
  ExperimentConfig config = load_config(args);
  if (!args.out.empty()) config.output_dir = args.out;
  if (args.epochs) config.train.epochs = *args.epochs;
  if (args.max_steps) config.train.max_steps = *args.max_steps;
  if (args.seed) config.seed = config.train.seed = *args.seed;
  config.validate();

  const DatasetSplits data = load_experiment_data(config);
  report_exclusions(data);
  fs::create_directories(config.output_dir);
  write_file_atomic(config.output_dir / "config.json", config.to_json());

  MghftModel model(config.model, config.seed);
  std::cerr << "model " << config.model.fusion.label() << ": " << model.params().scalar_count()
            << " parameters\n";
  TrainOptions options;
  options.checkpoint_path = config.output_dir / "checkpoint.marc";
  options.metrics_path = config.output_dir / "metrics.jsonl";
  options.on_epoch = [](const EpochMetrics& m) { std::printf("%s\n", m.to_json_line().c_str()); };
  const TrainResult result = train(model, data.train, data.val, config.train, options);
  std::cerr << "best val_acc " << result.best_val_acc << " at epoch " << result.best_epoch << "; checkpoint "
            << options.checkpoint_path.string() << "\n";
  return 0;
}

int run_eval(const EvalArgs& args) {
  const ExperimentConfig config = load_config(args);
  const fs::path checkpoint = checkpoint_path(config, args.checkpoint);
  const DatasetSplits data = load_experiment_data(config);
  MghftModel model(config.model, config.seed);
  load_checkpoint(checkpoint, model.params());
  const std::vector<Example>& split = pick_split(data, args.split);
  if (split.empty()) throw std::runtime_error("split '" + args.split + "' is empty");
  const EvalReport report = evaluate(model, split);
  print_report(report, data.class_names);
  std::printf("f1 (%s)     %.4f\n", args.average.c_str(), report.f1(parse_average(args.average)));
  if (!args.report.empty()) write_file_atomic(args.report, report_json(report, data.class_names).dump(2));
  return 0;
}

int run_describe(const DescribeArgs& args) {
  ExperimentConfig config = load_config(args);
  MllmEndpointConfig endpoint = config.mllm;
  if (!args.endpoint.empty()) endpoint.url = args.endpoint;
  if (!args.model.empty()) endpoint.model = args.model;
  if (endpoint.url.empty()) throw UsageError("describe needs --endpoint or mllm.url in the config");

  PromptSet prompts = PromptSet::defaults();
  const fs::path prompt_file = !args.prompts.empty() ? fs::path(args.prompts) : config.text.prompts;
  if (!prompt_file.empty()) prompts = PromptSet::from_json(read_file(prompt_file));

  const std::vector<StickerImage> images = load_sticker_images(args.images);
  if (images.empty()) throw std::runtime_error("no PNG or JPEG images in " + args.images);
  std::optional<DescriptionCache> cache;
  if (!args.cache.empty()) cache.emplace(args.cache);

  HttpChatBackend backend(endpoint);
  GenerationOptions options;
  options.parallel = args.parallel;
  const auto results = generate_descriptions(images, backend, prompts, cache ? &*cache : nullptr, options);

  std::vector<ViewDescriptions> ok;
  std::size_t failed = 0;
  std::size_t cached = 0;
  for (const auto& r : results) {
    if (r.descriptions) {
      ok.push_back(*r.descriptions);
      cached += r.from_cache ? 1 : 0;
    } else {
      ++failed;
      std::cerr << "failed " << r.sticker_id << ": " << r.error << "\n";
    }
  }
  write_descriptions(args.out, ok);
  std::cerr << "wrote " << ok.size() << " descriptions (" << cached << " from cache), " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

int run_encode(const EncodeArgs& args) {
  ExperimentConfig config = load_config(args);
  TextConfig text = config.text;
  if (!args.provider.empty()) text.provider = args.provider;
  if (args.dim) text.dim = *args.dim;
  if (args.seed) text.seed = *args.seed;
  if (args.max_len) text.max_len = *args.max_len;
  if (!args.endpoint.empty()) text.endpoint = args.endpoint;
  if (!args.model.empty()) text.model = args.model;
  if (!args.descriptions.empty()) text.descriptions = args.descriptions;
  if (text.descriptions.empty()) throw UsageError("encode needs --descriptions or text.descriptions in the config");

  const auto encoder = make_encoder(text);
  std::vector<ViewEmbeddings> out;
  for (const auto& d : read_descriptions(text.descriptions)) out.push_back(encode_views(d, *encoder, text.max_len));
  write_embeddings(args.out, out);
  std::cerr << "encoded " << out.size() << " stickers with " << encoder->name() << " into " << args.out << "\n";
  return 0;
}

int run_ablate(const AblateArgs& args) {
  ExperimentConfig config = load_config(args);
  if (args.epochs) config.train.epochs = *args.epochs;
  if (args.max_steps) config.train.max_steps = *args.max_steps;
  if (args.table.empty() && args.sweep.empty()) throw UsageError("ablate needs --table or --sweep");

  std::vector<FusionConfig> configs;
  AblationTable layout = AblationTable::kCustom;
  const FusionConfig& base = config.model.fusion;
  if (args.table == "3") {
    configs = module_table_configs(base);
    layout = AblationTable::kModules;
  } else if (args.table == "4") {
    configs = view_table_configs(base);
    layout = AblationTable::kViewOrder;
  } else if (args.table == "fig5") {
    configs = variant_configs(base);
    layout = AblationTable::kVariants;
  } else {
    try {
      configs = parse_sweep(args.sweep, base);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("invalid --sweep: ") + e.what());
    }
  }

  const DatasetSplits data = load_experiment_data(config);
  report_exclusions(data);
  std::cerr << "running " << configs.size() << " configurations\n";
  const auto rows = run_ablation(configs, config.model, data, config.train, config.seed);
  const std::string table = format_table(rows, layout, parse_average(args.average));
  std::printf("%s", table.c_str());
  if (!args.out.empty()) write_file_atomic(args.out, table);
  if (!args.json.empty()) {
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
      j.push_back({{"label", r.fusion.label()},
                   {"key", config_key(r.fusion)},
                   {"steps", r.steps},
                   {"accuracy", r.report.accuracy},
                   {"macro_f1", r.report.macro_f1},
                   {"weighted_f1", r.report.weighted_f1}});
    }
    write_file_atomic(args.json, j.dump(2));
  }
  return 0;
}

int run_gradcheck(const GradcheckArgs& args) {
  if (!args.config.empty()) load_config(args);
  std::printf("%-20s %14s %8s  %s\n", "operator", "max_rel_error", "values", "status");
  bool ok = true;
  run_gradcheck_suite(args.seed, [&](const GradCheckResult& r) {
    const bool pass = r.max_rel_error < args.tolerance;
    ok = ok && pass;
    std::printf("%-20s %14.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error, r.checked_values, pass ? "ok" : "FAIL");
    std::fflush(stdout);
  });
  return ok ? 0 : 1;
}

int run_export(const ExportArgs& args) {
  const ExperimentConfig config = load_config(args);
  const fs::path checkpoint = checkpoint_path(config, args.checkpoint);
  const DatasetSplits data = load_experiment_data(config);
  MghftModel model(config.model, config.seed);
  load_checkpoint(checkpoint, model.params());

  std::vector<Example> examples;
  if (args.split == "all") {
    for (const auto* part : {&data.train, &data.val, &data.test}) examples.insert(examples.end(), part->begin(), part->end());
  } else {
    examples = pick_split(data, args.split);
  }
  if (args.limit > 0 && examples.size() > args.limit) examples.resize(args.limit);
  const auto paths = export_attention(model, examples, args.out);
  std::cerr << "wrote " << paths.size() << " attention maps to " << args.out << "\n";
  return 0;
}

int run_synth(const SynthArgs& args) {
  ExperimentConfig config = load_config(args);
  if (args.config.empty()) config.model = toy_model_config();
  if (args.image_size % 16 != 0) throw UsageError("--image-size must be a multiple of 16");

  SyntheticSpec spec;
  spec.count = args.count;
  spec.num_classes = args.classes;
  spec.image_size = args.image_size;
  spec.channels = config.model.backbone.in_channels;
  spec.text_dim = args.text_dim;
  spec.seed = args.seed;
  spec.image_signal = args.image_signal;
  spec.image_noise = args.image_noise;
  spec.text_signal = args.text_signal;
  spec.text_noise = args.text_noise;
  const fs::path dir = args.out;
  write_synthetic_dataset(dir, spec);

  config.model.backbone.image_size = args.image_size;
  config.model.backbone.patch_size = args.image_size / 16;
  config.model.text_dim = config.text.dim = args.text_dim;
  config.model.num_classes = args.classes;
  config.data.manifest = "manifest.jsonl";
  config.data.class_names.clear();
  config.text.provider = "precomputed";
  config.text.embeddings = "embeddings.marc";
  config.output_dir = "run";
  if (args.config.empty()) config.train.epochs = 20;
  config.validate();
  write_file_atomic(dir / "config.json", config.to_json());
  std::cerr << "wrote " << spec.count << " examples and config.json to " << dir.string() << "\n";
  return 0;
}

}  // namespace mghft::cli
