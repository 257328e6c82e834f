#include "mghft/config.hpp"

#include <json.hpp>

#include "mghft/archive.hpp"

namespace mghft {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T, std::size_t N>
void read_array(const json& j, const char* key, std::array<T, N>& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<T>>();
  if (v.size() != N) throw ConfigError(std::string(key) + " needs " + std::to_string(N) + " entries");
  std::copy(v.begin(), v.end(), out.begin());
}

void read_path(const json& j, const char* key, const std::filesystem::path& base, std::filesystem::path& out) {
  if (!j.contains(key)) return;
  std::filesystem::path p = j.at(key).get<std::string>();
  if (p.empty()) {
    out.clear();
    return;
  }
  out = (p.is_relative() && !base.empty()) ? base / p : p;
}

std::string reduction_name(StageReduction r) { return r == StageReduction::kMean ? "mean" : "sum"; }

std::string direction_name(MlceDirection d) {
  return d == MlceDirection::kTextTeachesVision ? "text_teaches_vision" : "vision_teaches_text";
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  data.split.validate();
  if (text.provider != "hash" && text.provider != "precomputed" && text.provider != "remote") {
    throw ConfigError("text.provider must be hash, precomputed or remote");
  }
  if (text.dim != model.text_dim) {
    throw ConfigError("text.dim " + std::to_string(text.dim) + " != model.text_dim " +
                      std::to_string(model.text_dim));
  }
  if (text.max_len == 0) throw ConfigError("text.max_len must be positive");
}

ExperimentConfig ExperimentConfig::from_json(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    if (root.contains("model")) {
      const json& m = root.at("model");
      read_field(m, "text_dim", c.model.text_dim);
      read_field(m, "num_classes", c.model.num_classes);
      if (m.contains("backbone")) {
        const json& b = m.at("backbone");
        BackboneConfig& bc = c.model.backbone;
        read_field(b, "image_size", bc.image_size);
        read_field(b, "in_channels", bc.in_channels);
        read_field(b, "patch_size", bc.patch_size);
        read_array(b, "stage_dims", bc.stage_dims);
        read_array(b, "stage_depths", bc.stage_depths);
        read_array(b, "stage_heads", bc.stage_heads);
        read_array(b, "sr_ratios", bc.sr_ratios);
        read_field(b, "mlp_ratio", bc.mlp_ratio);
        read_field(b, "local_k", bc.local_k);
        read_field(b, "init_std", bc.init_std);
      }
      if (m.contains("fusion")) {
        const json& f = m.at("fusion");
        FusionConfig& fc = c.model.fusion;
        read_field(f, "enable_cl", fc.enable_cl);
        read_field(f, "enable_gf", fc.enable_gf);
        read_field(f, "enable_lf", fc.enable_lf);
        read_field(f, "enable_tgfa", fc.enable_tgfa);
        read_field(f, "replace_soft_fusion_with_cross_attention", fc.replace_soft_fusion_with_cross_attention);
        read_array(f, "view_order", fc.view_order);
        if (f.contains("repeat_single_view") && !f.at("repeat_single_view").is_null()) {
          fc.repeat_single_view = f.at("repeat_single_view").get<std::size_t>();
        }
        read_field(f, "concat_all_views", fc.concat_all_views);
        read_field(f, "fusion_dim", fc.fusion_dim);
        read_field(f, "tgfa_heads", fc.tgfa_heads);
        read_field(f, "fusion_text_len", fc.fusion_text_len);
        read_field(f, "align_weight", fc.align_weight);
        if (f.contains("loss")) {
          const json& l = f.at("loss");
          read_field(l, "tau_cl", fc.loss.tau_cl);
          read_field(l, "tau_mlce", fc.loss.tau_mlce);
          read_field(l, "lambda", fc.loss.lambda);
          if (l.contains("stage_reduction")) {
            const auto r = l.at("stage_reduction").get<std::string>();
            if (r != "mean" && r != "sum") throw ConfigError("stage_reduction must be mean or sum");
            fc.loss.stage_reduction = r == "mean" ? StageReduction::kMean : StageReduction::kSum;
          }
          if (l.contains("mlce_direction")) {
            const auto d = l.at("mlce_direction").get<std::string>();
            if (d != "text_teaches_vision" && d != "vision_teaches_text") {
              throw ConfigError("mlce_direction must be text_teaches_vision or vision_teaches_text");
            }
            fc.loss.mlce_direction =
                d == "text_teaches_vision" ? MlceDirection::kTextTeachesVision : MlceDirection::kVisionTeachesText;
          }
        }
      }
    }
    if (root.contains("train")) {
      const json& t = root.at("train");
      read_field(t, "learning_rate", c.train.learning_rate);
      read_field(t, "batch_size", c.train.batch_size);
      read_field(t, "epochs", c.train.epochs);
      read_field(t, "weight_decay", c.train.weight_decay);
      read_field(t, "seed", c.train.seed);
      read_field(t, "cosine_schedule", c.train.cosine_schedule);
      read_field(t, "max_steps", c.train.max_steps);
    }
    if (root.contains("data")) {
      const json& d = root.at("data");
      read_path(d, "manifest", base_dir, c.data.manifest);
      read_path(d, "class_names", base_dir, c.data.class_names);
      read_field(d, "split_seed", c.data.split_seed);
      if (d.contains("split")) {
        const auto r = d.at("split").get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("data.split needs three ratios");
        c.data.split = {r[0], r[1], r[2]};
      }
    }
    if (root.contains("text")) {
      const json& t = root.at("text");
      read_field(t, "provider", c.text.provider);
      read_field(t, "dim", c.text.dim);
      read_field(t, "seed", c.text.seed);
      read_field(t, "max_len", c.text.max_len);
      read_path(t, "embeddings", base_dir, c.text.embeddings);
      read_path(t, "descriptions", base_dir, c.text.descriptions);
      read_path(t, "prompts", base_dir, c.text.prompts);
      read_field(t, "endpoint", c.text.endpoint);
      read_field(t, "model", c.text.model);
    }
    if (!root.contains("text") || !root.at("text").contains("dim")) c.text.dim = c.model.text_dim;
    if (root.contains("mllm")) {
      const json& m = root.at("mllm");
      read_field(m, "url", c.mllm.url);
      read_field(m, "model", c.mllm.model);
      read_field(m, "temperature", c.mllm.temperature);
      read_field(m, "max_tokens", c.mllm.max_tokens);
      if (m.contains("timeout_s")) c.mllm.timeout = std::chrono::seconds(m.at("timeout_s").get<long>());
    }
    read_path(root, "output_dir", base_dir, c.output_dir);
    read_field(root, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config field: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return from_json(text, std::filesystem::absolute(path).parent_path());
}

std::string ExperimentConfig::to_json() const {
  const BackboneConfig& b = model.backbone;
  const FusionConfig& f = model.fusion;
  ordered_json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["model"] = {
      {"text_dim", model.text_dim},
      {"num_classes", model.num_classes},
      {"backbone",
       {{"image_size", b.image_size},
        {"in_channels", b.in_channels},
        {"patch_size", b.patch_size},
        {"stage_dims", b.stage_dims},
        {"stage_depths", b.stage_depths},
        {"stage_heads", b.stage_heads},
        {"sr_ratios", b.sr_ratios},
        {"mlp_ratio", b.mlp_ratio},
        {"local_k", b.local_k},
        {"init_std", b.init_std}}},
      {"fusion",
       {{"enable_cl", f.enable_cl},
        {"enable_gf", f.enable_gf},
        {"enable_lf", f.enable_lf},
        {"enable_tgfa", f.enable_tgfa},
        {"replace_soft_fusion_with_cross_attention", f.replace_soft_fusion_with_cross_attention},
        {"view_order", f.view_order},
        {"repeat_single_view", f.repeat_single_view ? json(*f.repeat_single_view) : json(nullptr)},
        {"concat_all_views", f.concat_all_views},
        {"fusion_dim", f.fusion_dim},
        {"tgfa_heads", f.tgfa_heads},
        {"fusion_text_len", f.fusion_text_len},
        {"align_weight", f.align_weight},
        {"loss",
         {{"tau_cl", f.loss.tau_cl},
          {"tau_mlce", f.loss.tau_mlce},
          {"lambda", f.loss.lambda},
          {"stage_reduction", reduction_name(f.loss.stage_reduction)},
          {"mlce_direction", direction_name(f.loss.mlce_direction)}}}}}};
  j["train"] = {{"learning_rate", train.learning_rate}, {"batch_size", train.batch_size},
                {"epochs", train.epochs},               {"weight_decay", train.weight_decay},
                {"seed", train.seed},                   {"cosine_schedule", train.cosine_schedule},
                {"max_steps", train.max_steps}};
  j["data"] = {{"manifest", data.manifest.string()},
               {"class_names", data.class_names.string()},
               {"split", {data.split.train, data.split.val, data.split.test}},
               {"split_seed", data.split_seed}};
  j["text"] = {{"provider", text.provider},
               {"dim", text.dim},
               {"seed", text.seed},
               {"max_len", text.max_len},
               {"embeddings", text.embeddings.string()},
               {"descriptions", text.descriptions.string()},
               {"prompts", text.prompts.string()},
               {"endpoint", text.endpoint},
               {"model", text.model}};
  j["mllm"] = {{"url", mllm.url},
               {"model", mllm.model},
               {"temperature", mllm.temperature},
               {"max_tokens", mllm.max_tokens},
               {"timeout_s", mllm.timeout.count()}};
  return j.dump(2);
}

ModelConfig toy_model_config() {
  ModelConfig c;
  c.backbone.image_size = 32;
  c.backbone.patch_size = 2;
  c.backbone.stage_dims = {16, 32, 32, 64};
  c.backbone.stage_heads = {1, 2, 2, 4};
  c.backbone.sr_ratios = {8, 4, 2, 1};
  c.backbone.local_k = 4;
  c.fusion.fusion_dim = 64;
  c.fusion.tgfa_heads = 4;
  c.fusion.fusion_text_len = 8;
  c.text_dim = 32;
  c.num_classes = 7;
  return c;
}

std::unique_ptr<EncoderProvider> make_encoder(const TextConfig& config) {
  if (config.provider == "hash") return std::make_unique<HashEmbeddingProvider>(config.dim, config.seed);
  if (config.provider == "precomputed") {
    if (config.embeddings.empty()) throw ConfigError("the precomputed provider needs text.embeddings");
    return std::make_unique<PrecomputedEmbeddingProvider>(config.embeddings);
  }
  if (config.provider == "remote") {
    if (config.endpoint.empty()) throw ConfigError("the remote provider needs text.endpoint");
    return std::make_unique<RemoteEmbeddingProvider>(config.endpoint, config.model, config.dim);
  }
  throw ConfigError("unknown text provider '" + config.provider + "'");
}

std::map<std::string, ViewEmbeddings> load_view_embeddings(const TextConfig& config) {
  if (!config.embeddings.empty() && std::filesystem::exists(config.embeddings)) {
    return read_embeddings(config.embeddings);
  }
  if (config.descriptions.empty()) {
    throw ConfigError("no view embeddings: set text.embeddings to an existing file or text.descriptions");
  }
  const auto encoder = make_encoder(config);
  std::map<std::string, ViewEmbeddings> out;
  for (const auto& d : read_descriptions(config.descriptions)) {
    out.emplace(d.sticker_id, encode_views(d, *encoder, config.max_len));
  }
  return out;
}

DatasetSplits load_experiment_data(const ExperimentConfig& config) {
  if (config.data.manifest.empty()) throw ConfigError("data.manifest is not set");
  const DatasetManifest manifest = read_manifest(config.data.manifest, config.data.class_names);
  if (manifest.class_names.size() != config.model.num_classes) {
    throw ConfigError("dataset has " + std::to_string(manifest.class_names.size()) + " classes but the model has " +
                      std::to_string(config.model.num_classes));
  }
  const ImageLoader images(config.model.backbone.image_size, config.model.backbone.in_channels);
  return load_dataset(manifest, config.data.split, config.data.split_seed, load_view_embeddings(config.text), images);
}

}  // namespace mghft
