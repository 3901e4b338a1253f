// tcmtl: train, fine-tune, evaluate and inspect multi-task landmark models.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcmt/checkpoint.hpp"
#include "tcmt/dataset.hpp"
#include "tcmt/run_config.hpp"
#include "tcmt/synthetic.hpp"
#include "tcmt/task_covariance.hpp"
#include "tcmt/trainer.hpp"

namespace fs = std::filesystem;
using namespace tcmt;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kIo = 2, kNumeric = 3 };

// Flags shared by train and finetune; unset ones leave the config file values alone.
struct Overrides {
  std::string config;
  std::string manifest;
  std::string validation_manifest;
  std::string out;
  std::string log_dir;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> cov_update_every, tau, batch, epochs;
  std::optional<double> rho, epsilon, eta1, eta2;
  std::vector<std::string> sets;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "key=value run configuration file");
    app->add_option("--manifest", manifest, "training manifest (CSV)");
    app->add_option("--validation-manifest", validation_manifest,
                    "validation manifest; default is a seeded split of --manifest");
    app->add_option("--out", out, "output checkpoint path");
    app->add_option("--log-dir", log_dir, "directory for train_log.csv");
    app->add_option("--mode", mode, "joint | fld_only | fld_plus_group:<group> | fld_plus_random | "
                                    "baseline_early_stopping");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--cov-update-every", cov_update_every, "epochs between task covariance updates (0 = never)");
    app->add_option("--rho", rho, "scale of the trend coefficient");
    app->add_option("--tau", tau, "error strip length in samples");
    app->add_option("--epsilon", epsilon, "lower bound of each task coefficient");
    app->add_option("--eta1", eta1, "gradient step size");
    app->add_option("--eta2", eta2, "weight decay step size");
    app->add_option("--batch", batch, "mini-batch size");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--set", sets, "extra key=value config override (repeatable)");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    auto put = [&](const char* key, const std::string& v) {
      if (!v.empty()) c.set(key, v);
    };
    put("manifest", manifest);
    put("validation_manifest", validation_manifest);
    put("out", out);
    put("log_dir", log_dir);
    put("mode", mode);
    if (seed) c.set("seed", std::to_string(*seed));
    if (cov_update_every) c.set("cov_update_every", std::to_string(*cov_update_every));
    if (tau) c.set("tau", std::to_string(*tau));
    if (batch) c.set("batch", std::to_string(*batch));
    if (epochs) c.set("epochs", std::to_string(*epochs));
    if (rho) c.set("rho", format_double(*rho));
    if (epsilon) c.set("epsilon", format_double(*epsilon));
    if (eta1) c.set("eta1", format_double(*eta1));
    if (eta2) c.set("eta2", format_double(*eta2));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      c.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return c;
  }
};

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " given");
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " not found: " + p.string());
}

void require_output_dir(const fs::path& file) {
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  if (!fs::is_directory(dir)) throw DataError("output directory does not exist: " + dir.string());
}

// Image sizes are checked from headers before anything is decoded.
void check_image_sizes(const Manifest& m, std::size_t side) {
  for (const auto& r : m.records) {
    const auto [w, h] = read_pgm_size(r.image_path);
    if (w != side || h != side) {
      throw ConfigError(r.image_path.string() + " is " + std::to_string(w) + "x" + std::to_string(h) +
                        " but the network expects " + std::to_string(side) + "x" + std::to_string(side) +
                        " images");
    }
  }
}

Manifest load_nonempty(const fs::path& p) {
  require_file(p, "manifest");
  Manifest m = load_manifest(p);
  if (m.records.empty()) throw ConfigError("manifest " + p.string() + " has no samples");
  return m;
}

std::pair<Dataset, Dataset> load_splits(const RunConfig& c, std::size_t side) {
  const Manifest m = load_nonempty(c.manifest);
  check_image_sizes(m, side);
  if (c.validation_manifest.empty()) {
    return split(m.load_all(side), c.train.validation_fraction, c.train.seed);
  }
  const Manifest v = load_nonempty(c.validation_manifest);
  check_image_sizes(v, side);
  if (!(v.layout == m.layout)) throw ConfigError("validation manifest declares a different task layout");
  return {m.load_all(side), v.load_all(side)};
}

void write_outputs(const RunConfig& c, const TrainResult& r) {
  save_checkpoint(c.out, r.checkpoint);
  const fs::path log_dir = c.log_dir.empty() ? fs::path(".") : c.log_dir;
  write_file_atomic(log_dir / "train_log.csv", r.log.to_csv());
  const auto& rows = r.log.rows;
  std::printf("wrote %s (%zu iterations)", c.out.string().c_str(), static_cast<std::size_t>(r.checkpoint.iteration));
  if (!rows.empty()) std::printf(", final validation mean error %.6f", rows.back().val_mean_error);
  std::printf("\n");
}

void prepare_outputs(RunConfig& c) {
  if (c.out.empty()) c.out = "checkpoint.tcmt";
  require_output_dir(c.out);
  if (!c.log_dir.empty()) fs::create_directories(c.log_dir);
}

int cmd_train(const Overrides& o) {
  RunConfig c = o.resolve();
  const NetConfig net = c.net();
  c.train.validate();
  prepare_outputs(c);
  auto [train_set, val_set] = load_splits(c, net.input_side);
  write_outputs(c, train(train_set, val_set, c.train, net));
  return kOk;
}

int cmd_finetune(const Overrides& o, const std::string& checkpoint_path) {
  RunConfig c = o.resolve();
  if (!checkpoint_path.empty()) c.checkpoint = checkpoint_path;
  require_file(c.checkpoint, "checkpoint");
  c.train.validate();
  prepare_outputs(c);
  const Checkpoint pre = load_checkpoint(c.checkpoint);
  auto [train_set, val_set] = load_splits(c, pre.state.net.input_side);
  write_outputs(c, fine_tune(pre, train_set, val_set, c.train));
  return kOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path, const std::string& curve_path,
             const std::string& report_path) {
  require_file(checkpoint_path, "checkpoint");
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Manifest m = load_nonempty(manifest_path);
  check_image_sizes(m, ck.state.net.input_side);
  const MetricsReport r = evaluate(ck.state, m.load_all(ck.state.net.input_side));
  std::printf("samples %zu\nmean_error %.6f\nfailure_rate %.6f\n", r.samples, r.mean_error, r.failure_rate);
  for (std::size_t p = 0; p < r.per_point_mean.size(); ++p) {
    std::printf("point_%zu %.6f\n", p, r.per_point_mean[p]);
  }
  write_file_atomic(curve_path, r.curve_csv());
  if (!report_path.empty()) write_file_atomic(report_path, r.report_csv());
  return kOk;
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& names) {
  std::string s = "task";
  for (const auto& n : names) s += "," + n;
  s += "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    s += names[i];
    for (std::size_t j = 0; j < m.cols(); ++j) s += "," + format_double(m(i, j));
    s += "\n";
  }
  return s;
}

int cmd_inspect(const std::string& checkpoint_path, const fs::path& out_dir, bool normalize) {
  require_file(checkpoint_path, "checkpoint");
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  fs::create_directories(out_dir);
  const TaskLayout& l = ck.state.layout;
  const Matrix c = correlation_matrix(ck.state.covariance);
  std::vector<std::string> names;
  for (std::size_t m = 0; m < l.landmark_count; ++m) {
    names.push_back((m % 2 ? "y" : "x") + std::to_string(m / 2));
  }
  names.insert(names.end(), l.attribute_names.begin(), l.attribute_names.end());
  write_file_atomic(out_dir / "correlation.csv", matrix_csv(c, names));
  if (l.attribute_count() == 0) {
    std::printf("wrote %s (no attribute tasks, no group report)\n", (out_dir / "correlation.csv").string().c_str());
    return kOk;
  }
  const GroupCorrelationReport g = group_correlation_report(c, l, normalize);
  std::string s = "group";
  for (std::size_t p = 0; p < g.point_count; ++p) s += ",point_" + std::to_string(p);
  s += ",mean\n";
  std::vector<std::size_t> all(g.point_count);
  for (std::size_t p = 0; p < all.size(); ++p) all[p] = p;
  for (std::size_t k = 0; k < g.groups.size(); ++k) {
    s += g.groups[k];
    for (double v : g.values[k]) s += "," + format_double(v);
    s += "," + format_double(g.mean_over_points(k, all)) + "\n";
  }
  write_file_atomic(out_dir / "group_report.csv", s);
  std::printf("%s", s.c_str());
  return kOk;
}

int cmd_synth(const std::string& spec_path, const std::string& preset, std::optional<std::size_t> samples,
              std::optional<std::uint64_t> seed, std::size_t dense_points, const fs::path& out_dir) {
  SynthSpec spec;
  if (!spec_path.empty()) {
    spec = load_synth_spec(spec_path);
  } else if (preset == "planted") {
    spec = planted_face_spec(100, 1);
  } else if (preset == "dense") {
    spec = dense_face_spec(dense_points, 100, 1);
  } else {
    throw ConfigError("synth needs --spec or --preset planted|dense");
  }
  if (samples) spec.samples = *samples;
  if (seed) spec.seed = *seed;
  spec.validate();
  write_synthetic(generate_synthetic(spec), out_dir);
  write_file_atomic(out_dir / "spec.txt", spec.to_text());
  std::printf("wrote %zu images and manifest.csv to %s\n", spec.samples, out_dir.string().c_str());
  return kOk;
}

void apply_thread_cap() {
  if (const char* env = std::getenv("TCMTL_THREADS")) {
    try {
      const auto n = parse_size(env, "TCMTL_THREADS");
      if (n == 0) throw ConfigError("TCMTL_THREADS must be at least 1");
      omp_set_num_threads(static_cast<int>(n));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("environment: ") + e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task facial landmark training with learned task covariance and task coefficients"};
  app.require_subcommand(1);

  Overrides train_o, tune_o;
  auto* train_cmd = app.add_subcommand("train", "train a model from a manifest");
  train_o.add_to(train_cmd);

  auto* tune_cmd = app.add_subcommand("finetune", "landmark-only training of a new layout from a checkpoint's filters");
  std::string tune_checkpoint;
  tune_cmd->add_option("--checkpoint", tune_checkpoint, "pre-trained checkpoint");
  tune_o.add_to(tune_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "landmark error metrics of a checkpoint on a manifest");
  std::string eval_checkpoint, eval_manifest, eval_curve = "curve.csv", eval_report;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "manifest to evaluate on")->required();
  eval_cmd->add_option("--out", eval_curve, "cumulative error curve CSV")->capture_default_str();
  eval_cmd->add_option("--report", eval_report, "per-point report CSV");

  auto* inspect_cmd = app.add_subcommand("inspect-correlation", "task correlation matrix and attribute group report");
  std::string inspect_checkpoint, inspect_out = ".";
  bool inspect_normalize = false;
  inspect_cmd->add_option("--checkpoint", inspect_checkpoint, "checkpoint to inspect")->required();
  inspect_cmd->add_option("--out", inspect_out, "output directory")->capture_default_str();
  inspect_cmd->add_flag("--normalize", inspect_normalize, "normalize each attribute's row over points");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset (PGM images + manifest)");
  std::string synth_spec, synth_preset, synth_out;
  std::optional<std::size_t> synth_samples;
  std::optional<std::uint64_t> synth_seed;
  std::size_t synth_points = 20;
  synth_cmd->add_option("--spec", synth_spec, "key=value synthetic spec file");
  synth_cmd->add_option("--preset", synth_preset, "built-in spec: planted | dense");
  synth_cmd->add_option("--points", synth_points, "landmark points of the dense preset")->capture_default_str();
  synth_cmd->add_option("--samples", synth_samples, "override the number of samples");
  synth_cmd->add_option("--seed", synth_seed, "override the seed");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    apply_thread_cap();
    if (*train_cmd) return cmd_train(train_o);
    if (*tune_cmd) return cmd_finetune(tune_o, tune_checkpoint);
    if (*eval_cmd) return cmd_eval(eval_checkpoint, eval_manifest, eval_curve, eval_report);
    if (*inspect_cmd) return cmd_inspect(inspect_checkpoint, inspect_out, inspect_normalize);
    if (*synth_cmd) return cmd_synth(synth_spec, synth_preset, synth_samples, synth_seed, synth_points, synth_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
  return kOk;
}
