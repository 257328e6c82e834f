#include "mghft/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mghft/archive.hpp"
#include "mghft/dataset.hpp"

namespace mghft {

void SyntheticSpec::validate() const {
  if (count == 0) throw ConfigError("synthetic count must be positive");
  if (num_classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (image_size == 0 || channels == 0 || text_dim == 0 || text_len == 0) {
    throw ConfigError("synthetic sizes must be positive");
  }
  if (image_noise < 0.0 || text_noise < 0.0) throw ConfigError("noise levels must be non-negative");
}

namespace {

std::string synthetic_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "syn%05zu", i);
  return buf;
}

std::vector<double> unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

std::vector<Example> make_synthetic_examples(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t pixels = spec.channels * spec.image_size * spec.image_size;

  std::vector<std::vector<double>> templates(spec.num_classes, std::vector<double>(pixels));
  for (auto& t : templates) {
    for (auto& x : t) x = rng.uniform(-1.0, 1.0);
  }
  std::vector<std::array<std::vector<double>, kNumViews>> directions(spec.num_classes);
  for (auto& per_view : directions) {
    for (auto& d : per_view) d = unit_vector(rng, spec.text_dim);
  }

  const double noise_scale = 1.0 / std::sqrt(static_cast<double>(spec.text_dim));
  std::vector<Example> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Example ex;
    ex.sticker_id = synthetic_id(i);
    ex.image_ref = "pixels.marc#" + ex.sticker_id;
    ex.label = i % spec.num_classes;

    std::vector<double> image(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      const double value = 0.5 + 0.5 * spec.image_signal * templates[ex.label][p] + spec.image_noise * rng.normal();
      image[p] = std::clamp(value, 0.0, 1.0);
    }
    ex.image = Tensor::from({spec.channels, spec.image_size, spec.image_size}, std::move(image));

    std::array<Tensor, kNumViews> sequences;
    for (std::size_t v = 0; v < kNumViews; ++v) {
      std::vector<double> rows(spec.text_len * spec.text_dim);
      for (std::size_t r = 0; r < spec.text_len; ++r) {
        for (std::size_t c = 0; c < spec.text_dim; ++c) {
          rows[r * spec.text_dim + c] =
              spec.text_signal * directions[ex.label][v][c] + spec.text_noise * noise_scale * rng.normal();
        }
      }
      sequences[v] = Tensor::from({spec.text_len, spec.text_dim}, std::move(rows));
    }
    ex.views = make_view_embeddings(ex.sticker_id, std::move(sequences));
    out.push_back(std::move(ex));
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec) {
  const std::vector<Example> examples = make_synthetic_examples(spec);
  std::filesystem::create_directories(dir);

  Archive pixels;
  pixels.kind = "pixels";
  pixels.metadata["image_size"] = std::to_string(spec.image_size);
  pixels.metadata["channels"] = std::to_string(spec.channels);
  std::vector<LabeledExample> items;
  std::vector<ViewEmbeddings> embeddings;
  for (const auto& ex : examples) {
    auto d = ex.image.data();
    pixels.entries.push_back({ex.sticker_id, ex.image.shape(), std::vector<float>(d.begin(), d.end())});
    items.push_back({ex.sticker_id, ex.image_ref, ex.label});
    embeddings.push_back(ex.views);
  }
  write_archive(dir / "pixels.marc", pixels);
  write_embeddings(dir / "embeddings.marc", embeddings);

  std::vector<std::string> class_names;
  if (spec.num_classes == kSer30kClasses.size()) {
    class_names = kSer30kClasses;
  } else {
    for (std::size_t c = 0; c < spec.num_classes; ++c) class_names.push_back("class" + std::to_string(c));
  }
  write_manifest(dir / "manifest.jsonl", items, class_names);
}

}  // namespace mghft
