#include "mghft/mllm.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "http_util.hpp"
#include "mghft/archive.hpp"

namespace mghft {

using nlohmann::json;

std::string build_chat_request(const MllmEndpointConfig& config, const std::vector<ChatMessage>& conversation) {
  json messages = json::array();
  for (const auto& m : conversation) {
    if (m.role == "assistant") {
      messages.push_back({{"role", "assistant"}, {"content", m.text}});
      continue;
    }
    json content = json::array();
    if (!m.image_base64.empty()) {
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + m.image_mime + ";base64," + m.image_base64}}}});
    }
    content.push_back({{"type", "text"}, {"text", m.text}});
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  return json{{"model", config.model},
              {"messages", messages},
              {"temperature", config.temperature},
              {"max_tokens", config.max_tokens}}
      .dump();
}

std::string parse_chat_response(std::string_view body) {
  try {
    const json j = json::parse(body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw MalformedResponseError("message content is not a string");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("malformed chat response: ") + e.what());
  }
}

HttpChatBackend::HttpChatBackend(MllmEndpointConfig config) : config_(std::move(config)) {
  if (config_.url.empty()) throw ConfigError("MLLM endpoint URL is empty");
  if (config_.api_key.empty()) {
    if (const char* key = std::getenv("MGHFT_MLLM_API_KEY")) config_.api_key = key;
  }
}

std::string HttpChatBackend::complete(const std::vector<ChatMessage>& conversation) const {
  auto res = detail::post_json(config_.url, build_chat_request(config_, conversation), config_.api_key,
                               config_.timeout);
  if (res.status == 0) throw EndpointError("request to " + config_.url + " failed: " + res.error);
  if (res.status < 200 || res.status >= 300) {
    throw EndpointError("endpoint returned HTTP " + std::to_string(res.status));
  }
  return parse_chat_response(res.body);
}

std::vector<StickerImage> load_sticker_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("image directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<StickerImage> images;
  for (const auto& f : files) {
    std::string ext = f.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    images.push_back({f.stem().string(), read_file(f), ext == ".png" ? "image/png" : "image/jpeg"});
  }
  return images;
}

DescriptionCache::DescriptionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string DescriptionCache::key(std::string_view image_bytes, const PromptSet& prompts) {
  return sha256_hex(sha256_hex(image_bytes) + ":" + prompts.hash());
}

std::optional<ViewDescriptions> DescriptionCache::get(const std::string& key) const {
  const auto path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return description_from_json_line(read_file(path));
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entries are regenerated
  }
}

void DescriptionCache::put(const std::string& key, const ViewDescriptions& value) const {
  write_file_atomic(dir_ / (key + ".json"), description_to_json_line(value));
}

namespace {

std::string complete_with_retry(const ChatBackend& backend, const std::vector<ChatMessage>& conversation,
                                const GenerationOptions& options) {
  std::string last_error;
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options.base_backoff * (1 << (attempt - 1)));
    try {
      return backend.complete(conversation);
    } catch (const EndpointError& e) {
      last_error = e.what();
    }
  }
  throw EndpointError("endpoint failed after " + std::to_string(options.max_attempts) + " attempts: " + last_error);
}

DescriptionResult describe_one(const StickerImage& image, const ChatBackend& backend, const PromptSet& prompts,
                               const DescriptionCache* cache, const GenerationOptions& options) {
  DescriptionResult result;
  result.sticker_id = image.sticker_id;
  const std::string key = DescriptionCache::key(image.bytes, prompts);
  if (cache) {
    if (auto hit = cache->get(key)) {
      hit->sticker_id = image.sticker_id;
      result.descriptions = std::move(hit);
      result.from_cache = true;
      return result;
    }
  }

  const std::string encoded = base64_encode(image.bytes);
  ViewDescriptions d;
  d.sticker_id = image.sticker_id;
  d.generator = backend.name();
  try {
    std::vector<ChatMessage> conversation;
    for (std::size_t v = 0; v < kNumViews; ++v) {
      if (!prompts.multi_round) conversation.clear();
      ChatMessage ask{"user", prompts.templates[v], {}, {}};
      if (conversation.empty()) {
        ask.image_base64 = encoded;
        ask.image_mime = image.mime;
      }
      conversation.push_back(std::move(ask));
      std::string answer = complete_with_retry(backend, conversation, options);
      if (answer.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw MalformedResponseError("empty response for view '" + std::string(kViewKeys[v]) + "'");
      }
      d.views[v] = answer;
      conversation.push_back({"assistant", std::move(answer), {}, {}});
    }
  } catch (const std::exception& e) {
    result.error = e.what();
    return result;
  }
  if (cache) cache->put(key, d);
  result.descriptions = std::move(d);
  return result;
}

}  // namespace

std::vector<DescriptionResult> generate_descriptions(const std::vector<StickerImage>& images,
                                                     const ChatBackend& backend, const PromptSet& prompts,
                                                     const DescriptionCache* cache,
                                                     const GenerationOptions& options) {
  std::vector<DescriptionResult> results(images.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      results[i] = describe_one(images[i], backend, prompts, cache, options);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.parallel, 1, std::max<std::size_t>(images.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

}  // namespace mghft
