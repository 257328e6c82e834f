#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mghft/text_context.hpp"

namespace mghft {

struct ChatMessage {
  std::string role;  // "user" or "assistant"
  std::string text;
  std::string image_base64;  // optional, user turns only
  std::string image_mime;
};

/// Transport failure or non-success status; retried by the generator.
class EndpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The endpoint answered but the payload is unusable; not retried.
class MalformedResponseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One chat-completion round trip. Implementations must be safe to call from
/// several threads at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::vector<ChatMessage>& conversation) const = 0;
  virtual std::string name() const = 0;
};

struct MllmEndpointConfig {
  std::string url;  // full chat-completions URL
  std::string model = "llava-v1.6-mistral-7b";
  std::string api_key;  // defaults to $MGHFT_MLLM_API_KEY
  double temperature = 0.2;
  int max_tokens = 256;
  std::chrono::seconds timeout{120};
};

/// Builds the OpenAI-compatible chat-completions request body.
std::string build_chat_request(const MllmEndpointConfig& config, const std::vector<ChatMessage>& conversation);
/// Extracts choices[0].message.content; throws MalformedResponseError.
std::string parse_chat_response(std::string_view body);

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(MllmEndpointConfig config);
  std::string complete(const std::vector<ChatMessage>& conversation) const override;
  std::string name() const override { return "mllm:" + config_.model; }

 private:
  MllmEndpointConfig config_;
};

struct StickerImage {
  std::string sticker_id;
  std::string bytes;
  std::string mime = "image/png";
};

/// Reads every .png/.jpg/.jpeg file in `dir` (sorted); the stem is the sticker id.
std::vector<StickerImage> load_sticker_images(const std::filesystem::path& dir);

/// On-disk cache of generated descriptions keyed by image and prompt hashes.
class DescriptionCache {
 public:
  explicit DescriptionCache(std::filesystem::path dir);
  static std::string key(std::string_view image_bytes, const PromptSet& prompts);
  std::optional<ViewDescriptions> get(const std::string& key) const;
  void put(const std::string& key, const ViewDescriptions& value) const;

 private:
  std::filesystem::path dir_;
};

struct DescriptionResult {
  std::string sticker_id;
  std::optional<ViewDescriptions> descriptions;
  std::string error;  // set when descriptions is empty
  bool from_cache = false;
};

struct GenerationOptions {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds base_backoff{500};
  std::size_t parallel = 4;
};

/// Asks the backend for the four views of each image, one prompt round per
/// view. Per-image failures are reported in the result and never abort the
/// batch. Results keep the input order.
std::vector<DescriptionResult> generate_descriptions(const std::vector<StickerImage>& images,
                                                     const ChatBackend& backend, const PromptSet& prompts,
                                                     const DescriptionCache* cache,
                                                     const GenerationOptions& options = {});

}  // namespace mghft
