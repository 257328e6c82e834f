// Runs each acceptance criterion and prints one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mghft/ablation.hpp"
#include "mghft/archive.hpp"
#include "mghft/attention_export.hpp"
#include "mghft/config.hpp"
#include "mghft/fusion.hpp"
#include "mghft/gradcheck_suite.hpp"
#include "mghft/model.hpp"
#include "mghft/ops.hpp"
#include "mghft/synthetic.hpp"
#include "mghft/trainer.hpp"

namespace fs = std::filesystem;
using namespace mghft;
using Matrix = std::vector<std::vector<double>>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Plain-loop reference implementations.

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t.at(r, c);
  return m;
}

Matrix normalized(const Matrix& a) {
  Matrix out = a;
  for (auto& row : out) {
    double n = 0.0;
    for (double x : row) n += x * x;
    n = std::sqrt(n);
    for (double& x : row) x /= n;
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> softmax_ref(const std::vector<double>& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += (e[i] = std::exp(x[i] - mx));
  for (double& v : e) v /= z;
  return e;
}

double ce_row(const std::vector<double>& logits, std::size_t target) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[target] - mx - std::log(z));
}

double cross_entropy_ref(const Matrix& logits, const std::vector<std::size_t>& labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += ce_row(logits[i], labels[i]);
  return s / static_cast<double>(logits.size());
}

double contrastive_ref(const Matrix& v, const Matrix& t, double tau) {
  const Matrix fv = normalized(v), ft = normalized(t);
  const std::size_t b = fv.size();
  Matrix s(b, std::vector<double>(b));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s[i][j] = dot(fv[i], ft[j]) / tau;
  double rows = 0.0, cols = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    rows += ce_row(s[i], i);
    std::vector<double> col(b);
    for (std::size_t j = 0; j < b; ++j) col[j] = s[j][i];
    cols += ce_row(col, i);
  }
  return 0.5 * (rows + cols) / static_cast<double>(b);
}

double mlce_ref(const Matrix& v, const Matrix& t, double tau) {
  const Matrix fv = normalized(v), ft = normalized(t);
  const std::size_t b = fv.size();
  double kl = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> cv(b), ct(b);
    for (std::size_t j = 0; j < b; ++j) {
      cv[j] = 0.5 * (1.0 + dot(fv[i], fv[j])) / tau;
      ct[j] = 0.5 * (1.0 + dot(ft[i], ft[j])) / tau;
    }
    const auto p = softmax_ref(ct), q = softmax_ref(cv);
    for (std::size_t j = 0; j < b; ++j) kl += p[j] * std::log(p[j] / q[j]);
  }
  return kl / static_cast<double>(b);
}

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from({rows, cols}, std::move(v));
}

// Criteria.

Outcome gradient_suite() {
  const auto start = Clock::now();
  const auto results = run_gradcheck_suite(0, {});
  const double elapsed = seconds_since(start);
  std::set<std::string> seen;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    seen.insert(r.name);
    if (!(r.max_rel_error <= worst)) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  const std::vector<std::string> required{"matmul",      "softmax",          "layer_norm", "cross_entropy",
                                          "kl_divergence_rows", "soft_fusion", "contrastive_loss", "mlce_loss",
                                          "global_fusion", "tgfa",          "full_model"};
  std::string missing;
  for (const auto& name : required)
    if (!seen.count(name)) missing += " " + name;
  const bool pass = missing.empty() && worst < 1e-4 && elapsed < 60.0;
  return {pass, std::to_string(results.size()) + " operators, worst " + worst_name + " " + fmt("%.2e", worst) + ", " +
                    fmt("%.1f s", elapsed) + (missing.empty() ? "" : ", missing:" + missing)};
}

Outcome soft_fusion_oracle() {
  Rng rng(2);
  double worst = 0.0;
  bool identity = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8), d = 1 + rng.below(16);
    Tensor v = random_matrix(rng, n, d, -2, 2), t = random_matrix(rng, m, d, -2, 2);
    const Matrix out = to_matrix(soft_fusion(v, t));
    const Matrix vv = to_matrix(v), tt = to_matrix(t);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> scores(m);
      for (std::size_t j = 0; j < m; ++j) scores[j] = dot(vv[i], tt[j]);
      const auto w = softmax_ref(scores);
      for (std::size_t c = 0; c < d; ++c) {
        double expect = vv[i][c];
        for (std::size_t j = 0; j < m; ++j) expect += w[j] * tt[j][c];
        worst = std::max(worst, std::abs(out[i][c] - expect));
      }
    }
    if (soft_fusion(v, Tensor::zeros({m, d})).to_vector() != v.to_vector()) identity = false;
  }
  return {identity && worst <= 1e-6,
          std::string("zero-text identity ") + (identity ? "exact" : "BROKEN") + ", max deviation " + fmt("%.2e", worst)};
}

Outcome contrastive_properties() {
  Rng rng(3);
  double sym = 0.0, scl = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 2 + rng.below(15), d = 2 + rng.below(16);
    const double tau = rng.uniform(0.05, 2.0);
    Tensor v = random_matrix(rng, b, d), t = random_matrix(rng, b, d);
    const double base = contrastive_loss(v, t, tau).item();
    sym = std::max(sym, std::abs(base - contrastive_loss(t, v, tau).item()));
    const double alpha = std::exp(rng.uniform(-3, 3)), beta = std::exp(rng.uniform(-3, 3));
    scl = std::max(scl, std::abs(base - contrastive_loss(scale(v, alpha), scale(t, beta), tau).item()));
  }
  return {sym <= 1e-9 && scl <= 1e-6, "symmetry " + fmt("%.2e", sym) + ", rescaling " + fmt("%.2e", scl)};
}

Outcome mlce_properties() {
  Rng rng(4);
  double lowest = 1e300, coincide = 0.0, ref_dev = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 2 + rng.below(15), d = 2 + rng.below(16);
    const double tau = rng.uniform(0.05, 2.0);
    Tensor v = random_matrix(rng, b, d), t = random_matrix(rng, b, d);
    const double loss = mlce_loss(v, t, tau).item();
    lowest = std::min(lowest, loss);
    if (trial < 100) ref_dev = std::max(ref_dev, std::abs(loss - mlce_ref(to_matrix(v), to_matrix(t), tau)));
    coincide = std::max(coincide, std::abs(mlce_loss(v, scale(v, rng.uniform(0.1, 10.0)), tau).item()));
  }
  // Identical text rows against orthogonal visual rows at unit temperature.
  const double closed = mlce_loss(Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::from({2, 2}, {1, 0, 1, 0}), 1.0).item();
  const double closed_dev = std::abs(closed - 0.030929803620161317);
  return {lowest >= 0.0 && coincide <= 1e-9 && closed_dev <= 1e-6 && ref_dev <= 1e-9,
          "min " + fmt("%.2e", lowest) + ", coincident " + fmt("%.2e", coincide) + ", 2x2 closed form dev " +
              fmt("%.2e", closed_dev)};
}

Outcome total_loss_composition() {
  ModelConfig c = gradcheck_model_config();
  c.fusion.align_weight = 0.5;
  c.fusion.loss.lambda = 30.0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MghftModel model(c, seed);
    auto batch = gradcheck_batch(c, 100 + seed);
    ForwardResult r = model.forward(batch);
    std::vector<std::size_t> labels;
    for (const auto& ex : batch) labels.push_back(ex.label);
    const double total = model.loss(r, labels).total.item();
    double align = 0.0;
    for (const auto& st : r.align) {
      const Matrix v = to_matrix(st.visual), t = to_matrix(st.text);
      align += contrastive_ref(v, t, c.fusion.loss.tau_cl) + 30.0 * mlce_ref(v, t, c.fusion.loss.tau_mlce);
    }
    align /= static_cast<double>(r.align.size());
    const double expect = cross_entropy_ref(to_matrix(r.logits), labels) + 0.5 * align;
    worst = std::max(worst, std::abs(total - expect));
  }
  return {worst <= 1e-9, "max |total - (CE + 0.5 align)| " + fmt("%.2e", worst) + " over 5 models"};
}

std::vector<std::size_t> argsort_top_k(const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

Outcome selection_oracle() {
  BackboneConfig standard;
  BackboneConfig small = gradcheck_model_config().backbone;
  small.local_k = 5;
  std::size_t checked = 0, mismatches = 0;
  Rng rng(6);
  for (const BackboneConfig& cfg : {standard, small}) {
    ParameterStore store;
    PvtBackbone backbone(store, cfg, rng);
    NoGradGuard no_grad;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> px(cfg.in_channels * cfg.image_size * cfg.image_size);
      for (double& x : px) x = rng.uniform();
      const auto feats = backbone.forward(Tensor::from({cfg.in_channels, cfg.image_size, cfg.image_size}, px));
      for (std::size_t s = 0; s < kNumStages; ++s) {
        if (cfg.token_count(s) > 64) continue;
        ++checked;
        if (feats[s].selected != argsort_top_k(feats[s].attn_cls, cfg.local_k)) ++mismatches;
      }
    }
  }
  return {mismatches == 0 && checked > 0,
          std::to_string(checked) + " stage selections over 200 inputs, " + std::to_string(mismatches) + " mismatches"};
}

// First epoch whose train accuracy reaches 95%, or 0; also the best accuracy seen.
std::pair<std::size_t, double> steps_to_fit(const FusionConfig& fusion, const std::vector<Example>& data) {
  ModelConfig c = toy_model_config();
  c.fusion = fusion;
  MghftModel model(c, 7);
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.batch_size = 16;
  t.epochs = 50;
  t.max_steps = 200;
  std::size_t reached = 0;
  double best = 0.0;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochMetrics& m) {
    best = std::max(best, m.val_acc);
    if (!reached && m.val_acc >= 0.95) reached = m.step;
  };
  train(model, data, data, t, opt);  // accuracy is measured on the training set itself
  return {reached, best};
}

Outcome learning_sanity() {
  ModelConfig c = toy_model_config();
  SyntheticSpec spec;
  spec.count = 64;
  spec.num_classes = c.num_classes;
  spec.image_size = c.backbone.image_size;
  spec.text_dim = c.text_dim;
  spec.seed = 0;
  const auto data = make_synthetic_examples(spec);
  const auto start = Clock::now();
  const auto [full_steps, full_best] = steps_to_fit(FusionConfig{}, data);
  FusionConfig off = parse_variant("none", FusionConfig{});
  const auto [off_steps, off_best] = steps_to_fit(off, data);
  const bool full_ok = full_steps > 0;
  const bool slower = off_steps == 0 ? off_best < full_best : off_steps > full_steps;
  auto describe = [](std::size_t steps, double best) {
    return (steps ? "95% at step " + std::to_string(steps) : std::string("never 95%")) + " (best " +
           fmt("%.1f%%", 100 * best) + ")";
  };
  return {full_ok && slower, "full " + describe(full_steps, full_best) + "; all toggles off " +
                                 describe(off_steps, off_best) + "; " + fmt("%.0f s", seconds_since(start))};
}

int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

struct CliContext {
  fs::path cli;
  fs::path work;
  fs::path dataset() const { return work / "data"; }
  fs::path config() const { return dataset() / "config.json"; }
  fs::path log(const std::string& name) const { return work / (name + ".log"); }
  int call(const std::string& args, const std::string& log_name) const {
    return run(quote(cli) + " " + args + " > " + quote(log(log_name)) + " 2>&1");
  }
};

std::vector<std::string> keys_from_json(const fs::path& path) {
  std::vector<std::string> out;
  for (const auto& row : nlohmann::json::parse(read_file(path))) out.push_back(row.at("key").get<std::string>());
  return out;
}

Outcome ablation_harness(const CliContext& ctx) {
  const std::vector<std::string> table3{"00000/1234", "10000/1234", "01000/1234", "00100/1234", "00010/1234",
                                        "11100/1234", "11010/1234", "10110/1234", "01110/1234", "11110/1234"};
  const std::vector<std::string> table4{"11110/1234", "11110/1243", "11110/2134", "11110/2143",
                                        "11110/3412", "11110/4321", "11110/4444", "11110/0000"};
  const auto start = Clock::now();
  std::string detail;
  bool pass = true;
  for (const auto& [table, expected] : {std::pair{std::string("3"), table3}, std::pair{std::string("4"), table4}}) {
    const fs::path json = ctx.work / ("table" + table + ".json");
    const int code = ctx.call("ablate --config " + quote(ctx.config()) + " --table " + table + " --json " + quote(json) +
                                  " --out " + quote(ctx.work / ("table" + table + ".txt")),
                              "ablate" + table);
    std::vector<std::string> keys;
    if (code == 0) keys = keys_from_json(json);
    const bool ok = code == 0 && keys == expected;
    pass = pass && ok;
    detail += "table " + table + ": " + std::to_string(keys.size()) + " rows" + (ok ? "" : " (exit " +
              std::to_string(code) + ", see " + ctx.log("ablate" + table).string() + ")") + "; ";
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 600.0;
  return {pass, detail + fmt("%.0f s", elapsed)};
}

Outcome determinism(const CliContext& ctx) {
  std::string logs[2], reports[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = ctx.work / ("run" + std::to_string(i));
    const std::string cfg = "--config " + quote(ctx.config());
    if (ctx.call("train " + cfg + " --out " + quote(out), "train" + std::to_string(i)) != 0 ||
        ctx.call("eval " + cfg + " --checkpoint " + quote(out / "checkpoint.marc") + " --split test --report " +
                     quote(out / "report.json"),
                 "eval" + std::to_string(i)) != 0) {
      return {false, "run " + std::to_string(i) + " failed, see " + ctx.work.string()};
    }
    logs[i] = read_file(out / "metrics.jsonl");
    reports[i] = read_file(out / "report.json");
  }
  const bool pass = !logs[0].empty() && logs[0] == logs[1] && reports[0] == reports[1];
  return {pass, std::to_string(std::count(logs[0].begin(), logs[0].end(), '\n')) + " epoch lines, metric logs " +
                    (logs[0] == logs[1] ? "identical" : "DIFFER") + ", eval reports " +
                    (reports[0] == reports[1] ? "identical" : "DIFFER")};
}

Outcome attention_export(const CliContext& ctx) {
  const fs::path out = ctx.work / "attention";
  if (ctx.call("export-attn --config " + quote(ctx.config()) + " --checkpoint " +
                   quote(ctx.work / "run0" / "checkpoint.marc") + " --split all --out " + quote(out),
               "export") != 0) {
    return {false, "export-attn failed, see " + ctx.log("export").string()};
  }
  const ExperimentConfig cfg = ExperimentConfig::load(ctx.config());
  const std::size_t grid = cfg.model.backbone.grid_size(kNumStages - 1);
  std::size_t files = 0, bad = 0;
  double worst_sum = 0.0, lowest = 1e300;
  for (const auto& entry : fs::directory_iterator(out)) {
    ++files;
    const AttentionRecord r = AttentionRecord::from_json(read_file(entry.path()));
    bool shape_ok = r.grid == grid && r.values.size() == grid;
    double total = 0.0;
    for (const auto& row : r.values) {
      shape_ok = shape_ok && row.size() == grid;
      for (double v : row) {
        total += v;
        lowest = std::min(lowest, v);
      }
    }
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    if (!shape_ok) ++bad;
  }
  const bool pass = files > 0 && bad == 0 && lowest >= 0.0 && worst_sum <= 1e-6;
  return {pass, std::to_string(files) + " maps of " + std::to_string(grid) + "x" + std::to_string(grid) +
                    ", min value " + fmt("%.2e", lowest) + ", max |sum - 1| " + fmt("%.2e", worst_sum) +
                    (bad ? ", " + std::to_string(bad) + " with wrong shape" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  CliContext ctx;
  std::vector<int> only;
  app.add_option("--cli", ctx.cli, "Path to the mghft executable")->required()->check(CLI::ExistingFile);
  app.add_option("--work", ctx.work, "Scratch directory")->required();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);
  ctx.cli = fs::absolute(ctx.cli);
  ctx.work = fs::absolute(ctx.work);

  bool dataset_ready = false;
  auto with_dataset = [&](std::function<Outcome()> f) {
    return [&ctx, &dataset_ready, f]() -> Outcome {
      if (!dataset_ready) {
        if (ctx.call("synth --out " + quote(ctx.dataset()), "synth") != 0) {
          return {false, "synth failed, see " + ctx.log("synth").string()};
        }
        dataset_ready = true;
      }
      return f();
    };
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite below 1e-4 within 60 s", gradient_suite},
      {"soft fusion zero-text identity and brute-force oracle", soft_fusion_oracle},
      {"contrastive loss symmetry and scale invariance", contrastive_properties},
      {"mlce loss nonnegative, zero when coincident, 2x2 closed form", mlce_properties},
      {"total loss equals CE + 0.5 (L_cl + 30 L_mlce)", total_loss_composition},
      {"local-token selection matches exhaustive argsort", selection_oracle},
      {"learning sanity: full model fits, backbone-only is slower", learning_sanity},
      {"ablate --table 3 and --table 4 at toy scale", with_dataset([&] { return ablation_harness(ctx); })},
      {"identical seeds give bitwise-identical metric logs", with_dataset([&] { return determinism(ctx); })},
      {"exported attention maps are grid-shaped distributions", with_dataset([&] { return attention_export(ctx); })},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    if (number == 10 && !only.empty() && std::find(only.begin(), only.end(), 9) == only.end()) {
      with_dataset([&] { return determinism(ctx); })();
    }
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  [%2d] %s: %s\n", o.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
