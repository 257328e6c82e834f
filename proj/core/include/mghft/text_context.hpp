#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mghft/tensor.hpp"

namespace mghft {

inline constexpr std::size_t kNumViews = 4;
inline constexpr std::size_t kMaxTextLength = 512;

/// The four textual views of a sticker, in injection order T1..T4.
enum class View : std::size_t { kIntention = 0, kStyle = 1, kMainRoles = 2, kDetails = 3 };

inline constexpr std::array<std::string_view, kNumViews> kViewKeys{"intention", "style", "main_roles", "details"};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ViewDescriptions {
  std::string sticker_id;
  std::array<std::string, kNumViews> views;  // indexed by View
  std::string generator;

  const std::string& view(View v) const { return views[static_cast<std::size_t>(v)]; }
  /// Throws DataError when the id or any view text is empty.
  void validate() const;
  bool operator==(const ViewDescriptions&) const = default;
};

// Description files are JSON Lines:
//   {"sticker_id": ..., "views": {"intention", "style", "main_roles", "details"}, "generator": ...}
std::string description_to_json_line(const ViewDescriptions& d);
ViewDescriptions description_from_json_line(std::string_view line);
void write_descriptions(const std::filesystem::path& path, const std::vector<ViewDescriptions>& items);
/// Rejects duplicate sticker ids and invalid records.
std::vector<ViewDescriptions> read_descriptions(const std::filesystem::path& path);

struct PromptSet {
  std::array<std::string, kNumViews> templates;
  /// When true all four rounds share one conversation; otherwise each view
  /// is asked in a fresh conversation with the image attached.
  bool multi_round = true;

  static PromptSet defaults();
  static PromptSet from_json(std::string_view text);
  std::string to_json() const;
  /// Hex SHA-256 of the canonical JSON form; part of every cache key.
  std::string hash() const;
};

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);

// ---------------------------------------------------------------------------
// Text encoders

struct ViewEmbeddings {
  std::string sticker_id;
  std::array<Tensor, kNumViews> sequences;  // [len_i x text_dim], len_i <= max_len
  std::array<Tensor, kNumViews> pooled;     // [1 x text_dim] row means

  std::size_t text_dim() const { return sequences[0].dim(1); }
};

struct EncodeRequest {
  std::string_view sticker_id;
  std::size_t view_index = 0;
  std::string_view text;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frozen text encoder. Implementations return a [tokens x dim] matrix and
/// throw EncodeError on failure instead of producing placeholder values.
class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;
  virtual Tensor encode(const EncodeRequest& request) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
};

/// Whitespace tokens mapped to seeded pseudo-random unit vectors. Identical
/// across runs and platforms for a given (dim, seed).
class HashEmbeddingProvider final : public EncoderProvider {
 public:
  HashEmbeddingProvider(std::size_t dim, std::uint64_t seed);
  Tensor encode(const EncodeRequest& request) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override;

  std::vector<double> token_vector(std::string_view token) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// hash_embedding_provider(text, dim, seed) as a free function.
Tensor hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

/// Looks up sequences in an embedding file by "sticker_id/view_index".
class PrecomputedEmbeddingProvider final : public EncoderProvider {
 public:
  explicit PrecomputedEmbeddingProvider(const std::filesystem::path& path);
  Tensor encode(const EncodeRequest& request) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "precomputed:" + source_; }

 private:
  std::string source_;
  std::size_t dim_ = 0;
  std::map<std::string, Tensor> table_;
};

/// OpenAI-compatible embeddings endpoint: POST {"model", "input"} and read
/// data[0].embedding, either a vector (one row) or a list of token vectors.
class RemoteEmbeddingProvider final : public EncoderProvider {
 public:
  RemoteEmbeddingProvider(std::string endpoint, std::string model, std::size_t dim, std::string api_key = {});
  Tensor encode(const EncodeRequest& request) const override;
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "remote:" + endpoint_ + "#" + model_; }

 private:
  std::string endpoint_;
  std::string model_;
  std::size_t dim_;
  std::string api_key_;
};

/// Encodes all four views, truncating each sequence to `max_len` rows.
ViewEmbeddings encode_views(const ViewDescriptions& d, const EncoderProvider& encoder,
                            std::size_t max_len = kMaxTextLength);

/// Builds a ViewEmbeddings from raw sequences, computing the pooled rows.
ViewEmbeddings make_view_embeddings(std::string sticker_id, std::array<Tensor, kNumViews> sequences,
                                    std::size_t max_len = kMaxTextLength);

// Embedding files use the archive format with kind "embeddings" and one
// entry per sequence named "<sticker_id>/<view_index>", view_index in 1..4.
void write_embeddings(const std::filesystem::path& path, const std::vector<ViewEmbeddings>& items);
std::map<std::string, ViewEmbeddings> read_embeddings(const std::filesystem::path& path);

}  // namespace mghft
