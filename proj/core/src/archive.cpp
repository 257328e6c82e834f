#include "mghft/archive.hpp"

#include <unistd.h>

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mghft {

namespace {

constexpr std::string_view kMagic = "MGHFTARC";

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

const ArchiveEntry* Archive::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::string encode_archive(const Archive& archive) {
  nlohmann::json manifest;
  manifest["format_version"] = kArchiveFormatVersion;
  manifest["kind"] = archive.kind;
  manifest["metadata"] = archive.metadata;
  manifest["entries"] = nlohmann::json::array();
  std::set<std::string> seen;
  std::uint64_t offset = 0;
  for (const auto& e : archive.entries) {
    if (!seen.insert(e.name).second) throw ArchiveError("duplicate archive entry: " + e.name);
    if (shape_numel(e.shape) != e.values.size()) {
      throw ArchiveError("entry " + e.name + " has shape " + shape_str(e.shape) + " but " +
                         std::to_string(e.values.size()) + " values");
    }
    manifest["entries"].push_back(
        {{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"count", e.values.size()}});
    offset += e.values.size() * sizeof(float);
  }
  const std::string manifest_text = manifest.dump();

  std::string out(kMagic);
  put_le<std::uint32_t>(out, kArchiveFormatVersion);
  put_le<std::uint64_t>(out, manifest_text.size());
  out += manifest_text;
  out.reserve(out.size() + offset);
  for (const auto& e : archive.entries) {
    for (float v : e.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Archive decode_archive(std::string_view bytes) {
  const std::size_t header = kMagic.size() + 4 + 8;
  if (bytes.size() < header || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ArchiveError("not an MGHFT archive (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(bytes, kMagic.size());
  if (version != kArchiveFormatVersion) {
    throw ArchiveError("unsupported archive format version " + std::to_string(version));
  }
  const auto manifest_len = get_le<std::uint64_t>(bytes, kMagic.size() + 4);
  if (manifest_len > bytes.size() - header) throw ArchiveError("truncated archive manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(header, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(std::string("malformed archive manifest: ") + e.what());
  }
  const std::string_view payload = bytes.substr(header + manifest_len);

  Archive archive;
  try {
    archive.kind = manifest.value("kind", "");
    if (manifest.contains("metadata")) {
      archive.metadata = manifest["metadata"].get<std::map<std::string, std::string>>();
    }
    for (const auto& je : manifest.at("entries")) {
      ArchiveEntry e;
      e.name = je.at("name").get<std::string>();
      e.shape = je.at("shape").get<Shape>();
      const auto offset = je.at("offset").get<std::uint64_t>();
      const auto count = je.at("count").get<std::uint64_t>();
      if (count != shape_numel(e.shape)) throw ArchiveError("entry " + e.name + " count does not match shape");
      if (offset + count * sizeof(float) > payload.size()) throw ArchiveError("entry " + e.name + " is truncated");
      e.values.resize(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        e.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload, offset + i * sizeof(float)));
      }
      archive.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveError(std::string("malformed archive manifest: ") + e.what());
  }
  return archive;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  write_file_atomic(path, encode_archive(archive));
}

Archive read_archive(const std::filesystem::path& path) { return decode_archive(read_file(path)); }

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     std::map<std::string, std::string> metadata) {
  Archive archive;
  archive.kind = "checkpoint";
  archive.metadata = std::move(metadata);
  for (const auto& p : params.parameters()) {
    ArchiveEntry e{p.name, p.tensor.shape(), {}};
    e.values.assign(p.tensor.data().begin(), p.tensor.data().end());
    archive.entries.push_back(std::move(e));
  }
  write_archive(path, archive);
}

std::map<std::string, std::string> load_checkpoint(const std::filesystem::path& path, ParameterStore& params) {
  Archive archive = read_archive(path);
  if (archive.kind != "checkpoint") throw ArchiveError(path.string() + " is not a checkpoint archive");
  if (archive.entries.size() != params.parameters().size()) {
    throw ArchiveError("checkpoint has " + std::to_string(archive.entries.size()) + " parameters, model has " +
                       std::to_string(params.parameters().size()));
  }
  for (auto& p : params.parameters()) {
    const ArchiveEntry* e = archive.find(p.name);
    if (!e) throw ArchiveError("checkpoint is missing parameter " + p.name);
    if (e->shape != p.tensor.shape()) {
      throw ArchiveError("parameter " + p.name + " has shape " + shape_str(e->shape) + " in checkpoint, " +
                         shape_str(p.tensor.shape()) + " in model");
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(e->values[i]);
  }
  return archive.metadata;
}

}  // namespace mghft
