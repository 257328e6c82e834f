#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace mghft::cli {

struct CommonArgs {
  std::string config;
};

struct TrainArgs : CommonArgs {
  std::string out;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_steps;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs : CommonArgs {
  std::string checkpoint;
  std::string split = "test";
  std::string average = "macro";
  std::string report;
};

struct DescribeArgs : CommonArgs {
  std::string images;
  std::string endpoint;
  std::string out;
  std::string cache;
  std::string model;
  std::string prompts;
  std::size_t parallel = 4;
};

struct EncodeArgs : CommonArgs {
  std::string descriptions;
  std::string out;
  std::string provider;
  std::optional<std::size_t> dim;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_len;
  std::string endpoint;
  std::string model;
};

struct AblateArgs : CommonArgs {
  std::string table;
  std::string sweep;
  std::string out;
  std::string json;
  std::string average = "macro";
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_steps;
};

struct GradcheckArgs : CommonArgs {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

struct ExportArgs : CommonArgs {
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  std::size_t limit = 0;
};

struct SynthArgs : CommonArgs {
  std::string out;
  std::size_t count = 64;
  std::size_t classes = 7;
  std::size_t image_size = 32;
  std::size_t text_dim = 32;
  std::uint64_t seed = 0;
  double image_signal = 0.5;
  double image_noise = 0.1;
  double text_signal = 1.0;
  double text_noise = 1.0;
};

int run_train(const TrainArgs& args);
int run_eval(const EvalArgs& args);
int run_describe(const DescribeArgs& args);
int run_encode(const EncodeArgs& args);
int run_ablate(const AblateArgs& args);
int run_gradcheck(const GradcheckArgs& args);
int run_export(const ExportArgs& args);
int run_synth(const SynthArgs& args);

/// Thrown for invalid command-line combinations; maps to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mghft::cli
