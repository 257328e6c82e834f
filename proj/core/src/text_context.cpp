#include "mghft/text_context.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hash_util.hpp"
#include "http_util.hpp"
#include "mghft/archive.hpp"
#include "mghft/ops.hpp"

namespace mghft {

using nlohmann::json;

void ViewDescriptions::validate() const {
  if (sticker_id.empty()) throw DataError("description record has an empty sticker_id");
  for (std::size_t i = 0; i < kNumViews; ++i) {
    if (views[i].empty()) {
      throw DataError("sticker " + sticker_id + ": view '" + std::string(kViewKeys[i]) + "' is empty");
    }
  }
}

std::string description_to_json_line(const ViewDescriptions& d) {
  json views = json::object();
  for (std::size_t i = 0; i < kNumViews; ++i) views[std::string(kViewKeys[i])] = d.views[i];
  return json{{"sticker_id", d.sticker_id}, {"views", views}, {"generator", d.generator}}.dump();
}

ViewDescriptions description_from_json_line(std::string_view line) {
  ViewDescriptions d;
  try {
    const json j = json::parse(line);
    d.sticker_id = j.at("sticker_id").get<std::string>();
    const json& views = j.at("views");
    for (std::size_t i = 0; i < kNumViews; ++i) d.views[i] = views.at(std::string(kViewKeys[i])).get<std::string>();
    d.generator = j.value("generator", "");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed description record: ") + e.what());
  }
  d.validate();
  return d;
}

void write_descriptions(const std::filesystem::path& path, const std::vector<ViewDescriptions>& items) {
  std::string out;
  for (const auto& d : items) {
    d.validate();
    out += description_to_json_line(d);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<ViewDescriptions> read_descriptions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open description file " + path.string());
  std::vector<ViewDescriptions> items;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ViewDescriptions d;
    try {
      d = description_from_json_line(line);
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(d.sticker_id).second) {
      throw DataError(path.string() + ": duplicate sticker_id " + d.sticker_id);
    }
    items.push_back(std::move(d));
  }
  return items;
}

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.templates = {
      "What is the intended usage of this sticker? Describe the situation in which someone would send it and what "
      "they want to express.",
      "Describe the overall visual style of this sticker, including drawing style, colors and any text it contains.",
      "Who are the main characters in this sticker? Describe what kind of characters or objects they are.",
      "Describe pose, expression, and fine details of the main characters, such as facial expression, gestures and "
      "body language.",
  };
  p.multi_round = true;
  return p;
}

PromptSet PromptSet::from_json(std::string_view text) {
  PromptSet p;
  try {
    const json j = json::parse(text);
    const json& prompts = j.at("prompts");
    if (prompts.size() != kNumViews) throw DataError("prompt set must define exactly four views");
    for (std::size_t i = 0; i < kNumViews; ++i) {
      p.templates[i] = prompts.at(std::string(kViewKeys[i])).get<std::string>();
      if (p.templates[i].empty()) throw DataError("prompt for view " + std::string(kViewKeys[i]) + " is empty");
    }
    p.multi_round = j.value("multi_round", true);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed prompt set: ") + e.what());
  }
  return p;
}

std::string PromptSet::to_json() const {
  json prompts = json::object();
  for (std::size_t i = 0; i < kNumViews; ++i) prompts[std::string(kViewKeys[i])] = templates[i];
  return json{{"prompts", prompts}, {"multi_round", multi_round}}.dump();
}

std::string PromptSet::hash() const { return sha256_hex(to_json()); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

using detail::fnv1a64;
using detail::splitmix64;

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) tokens.push_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

Tensor truncate_rows(const Tensor& t, std::size_t max_len) {
  if (t.dim(0) <= max_len) return t;
  return slice_rows(t, 0, max_len).detach();
}

std::string embedding_key(std::string_view sticker_id, std::size_t view_index) {
  return std::string(sticker_id) + "/" + std::to_string(view_index + 1);
}

}  // namespace

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("hash embedding dim must be positive");
}

std::string HashEmbeddingProvider::name() const {
  return "hash:dim=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_);
}

std::vector<double> HashEmbeddingProvider::token_vector(std::string_view token) const {
  std::uint64_t state = fnv1a64(token) ^ (seed_ * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  std::vector<double> v(dim_);
  double sq = 0.0;
  while (sq == 0.0) {
    for (auto& x : v) {
      x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      sq += x * x;
    }
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& x : v) x *= inv;
  return v;
}

Tensor HashEmbeddingProvider::encode(const EncodeRequest& request) const {
  const auto tokens = split_whitespace(request.text);
  if (tokens.empty()) throw EncodeError("cannot encode empty text");
  std::vector<double> data;
  data.reserve(tokens.size() * dim_);
  for (auto tok : tokens) {
    auto v = token_vector(tok);
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor::from({tokens.size(), dim_}, std::move(data));
}

Tensor hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  return HashEmbeddingProvider(dim, seed).encode({"", 0, text});
}

PrecomputedEmbeddingProvider::PrecomputedEmbeddingProvider(const std::filesystem::path& path)
    : source_(path.string()) {
  Archive archive = read_archive(path);
  if (archive.kind != "embeddings") throw EncodeError(path.string() + " is not an embedding file");
  for (auto& e : archive.entries) {
    if (e.shape.size() != 2) throw EncodeError("embedding " + e.name + " is not a matrix");
    if (dim_ == 0) dim_ = e.shape[1];
    if (e.shape[1] != dim_) throw EncodeError("embedding " + e.name + " has inconsistent width");
    std::vector<double> values(e.values.begin(), e.values.end());
    table_.emplace(e.name, Tensor::from(e.shape, std::move(values)));
  }
  if (table_.empty()) throw EncodeError(path.string() + " contains no embeddings");
}

Tensor PrecomputedEmbeddingProvider::encode(const EncodeRequest& request) const {
  auto it = table_.find(embedding_key(request.sticker_id, request.view_index));
  if (it == table_.end()) {
    throw EncodeError("no precomputed embedding for " + embedding_key(request.sticker_id, request.view_index));
  }
  return it->second;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string endpoint, std::string model, std::size_t dim,
                                                 std::string api_key)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), dim_(dim), api_key_(std::move(api_key)) {}

Tensor RemoteEmbeddingProvider::encode(const EncodeRequest& request) const {
  if (request.text.empty()) throw EncodeError("cannot encode empty text");
  const json body{{"model", model_}, {"input", request.text}};
  auto res = detail::post_json(endpoint_, body.dump(), api_key_, std::chrono::seconds(60));
  if (res.status != 200) {
    throw EncodeError("embedding endpoint failed (status " + std::to_string(res.status) + ") " + res.error);
  }
  try {
    const json j = json::parse(res.body);
    const json& emb = j.at("data").at(0).at("embedding");
    std::vector<double> values;
    std::size_t rows = 0;
    if (!emb.empty() && emb[0].is_array()) {
      for (const auto& row : emb) {
        if (row.size() != dim_) throw EncodeError("embedding row width does not match configured dim");
        for (const auto& x : row) values.push_back(x.get<double>());
        ++rows;
      }
    } else {
      if (emb.size() != dim_) throw EncodeError("embedding width does not match configured dim");
      for (const auto& x : emb) values.push_back(x.get<double>());
      rows = 1;
    }
    if (rows == 0) throw EncodeError("embedding endpoint returned no vectors");
    return Tensor::from({rows, dim_}, std::move(values));
  } catch (const json::exception& e) {
    throw EncodeError(std::string("malformed embedding response: ") + e.what());
  }
}

ViewEmbeddings make_view_embeddings(std::string sticker_id, std::array<Tensor, kNumViews> sequences,
                                    std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  ViewEmbeddings out;
  out.sticker_id = std::move(sticker_id);
  const std::size_t dim = sequences[0].shape().back();
  for (std::size_t i = 0; i < kNumViews; ++i) {
    if (sequences[i].rank() != 2 || sequences[i].dim(1) != dim) {
      throw EncodeError("sticker " + out.sticker_id + ": view " + std::to_string(i + 1) + " has shape " +
                        shape_str(sequences[i].shape()) + ", expected width " + std::to_string(dim));
    }
    NoGradGuard no_grad;
    out.sequences[i] = truncate_rows(sequences[i].detach(), max_len);
    out.pooled[i] = mean_rows(out.sequences[i]);
  }
  return out;
}

ViewEmbeddings encode_views(const ViewDescriptions& d, const EncoderProvider& encoder, std::size_t max_len) {
  d.validate();
  std::array<Tensor, kNumViews> seqs;
  for (std::size_t i = 0; i < kNumViews; ++i) {
    seqs[i] = encoder.encode({d.sticker_id, i, d.views[i]});
    if (!seqs[i].defined() || seqs[i].rank() != 2 || seqs[i].dim(1) != encoder.dim()) {
      throw EncodeError("encoder " + encoder.name() + " returned an invalid sequence for " + d.sticker_id);
    }
  }
  return make_view_embeddings(d.sticker_id, std::move(seqs), max_len);
}

void write_embeddings(const std::filesystem::path& path, const std::vector<ViewEmbeddings>& items) {
  Archive archive;
  archive.kind = "embeddings";
  for (const auto& item : items) {
    for (std::size_t i = 0; i < kNumViews; ++i) {
      const Tensor& t = item.sequences[i];
      archive.entries.push_back({embedding_key(item.sticker_id, i), t.shape(), {t.data().begin(), t.data().end()}});
    }
  }
  write_archive(path, archive);
}

std::map<std::string, ViewEmbeddings> read_embeddings(const std::filesystem::path& path) {
  Archive archive = read_archive(path);
  if (archive.kind != "embeddings") throw DataError(path.string() + " is not an embedding file");
  std::map<std::string, std::array<Tensor, kNumViews>> grouped;
  for (auto& e : archive.entries) {
    const auto slash = e.name.rfind('/');
    if (slash == std::string::npos) throw DataError("bad embedding key " + e.name);
    const std::string id = e.name.substr(0, slash);
    const std::size_t view = std::stoul(e.name.substr(slash + 1));
    if (view < 1 || view > kNumViews) throw DataError("bad view index in embedding key " + e.name);
    std::vector<double> values(e.values.begin(), e.values.end());
    grouped[id][view - 1] = Tensor::from(e.shape, std::move(values));
  }
  std::map<std::string, ViewEmbeddings> out;
  for (auto& [id, seqs] : grouped) {
    for (std::size_t i = 0; i < kNumViews; ++i) {
      if (!seqs[i].defined()) throw DataError("sticker " + id + " is missing view " + std::to_string(i + 1));
    }
    out.emplace(id, make_view_embeddings(id, std::move(seqs)));
  }
  return out;
}

}  // namespace mghft
