// gradsim: command-line entry point for the gradient-similarity toolkit.

#include "config.hpp"

#include "gradsim/bank.hpp"
#include "gradsim/denoise.hpp"
#include "gradsim/density.hpp"
#include "gradsim/enforce.hpp"
#include "gradsim/error.hpp"
#include "gradsim/experiments.hpp"
#include "gradsim/param_io.hpp"
#include "gradsim/parallel.hpp"
#include "gradsim/report.hpp"
#include "gradsim/version.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using namespace gradsim;
using cli::json;

namespace {

struct RunOutput {
  std::vector<std::string> files;
  std::map<std::string, std::string> provenance;
};

using Handler = std::function<RunOutput(const json& cfg, const fs::path& out)>;

void log(const std::string& msg) { std::cerr << msg << '\n'; }

void write_text(const fs::path& path, const std::string& text, RunOutput& out) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) {
    throw FormatError("cannot write " + path.string());
  }
  out.files.push_back(path.filename().string());
}

template <class Fn> void write_with(const fs::path& path, Fn&& fn, RunOutput& out) {
  std::ofstream os(path, std::ios::binary);
  fn(os);
  if (!os) {
    throw FormatError("cannot write " + path.string());
  }
  out.files.push_back(path.filename().string());
}

std::uint64_t seed_of(const json& cfg) { return cfg.value("seed", std::uint64_t{0}); }
std::size_t threads_of(const json& cfg) { return resolve_threads(cfg.value("threads", std::size_t{0})); }

std::optional<std::size_t> optional_index(const json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) {
    return std::nullopt;
  }
  return cfg.at(key).get<std::size_t>();
}

GradientBank bank_from_config(const json& cfg, const LoadedParams& loaded, const Dataset& data) {
  BankOptions opt;
  opt.output = optional_index(cfg, "output");
  opt.binarize_by_label = cfg.value("binarize", false);
  if (cfg.value("adversary", false)) {
    opt.adversary_seed = seed_of(cfg);
  }
  opt.threads = threads_of(cfg);
  if (!opt.output && !opt.binarize_by_label && loaded.spec.output_dim() > 1) {
    log("note: multi-output network, bank keeps all " + std::to_string(loaded.spec.output_dim()) + " rows");
  }
  return GradientBank::build(loaded.spec, loaded.params, data, opt);
}

RunOutput run_train(const json& cfg, const fs::path& out) {
  RunOutput r;
  const Dataset data = cli::data_from_json(cfg.at("data"), seed_of(cfg));
  r.provenance = data.provenance;
  const NetworkSpec spec = cli::network_from_json(cfg.at("network"), data.input_dim(), data.label_dim());
  const TrainConfig tc = cli::train_from_json(cfg.at("train"), seed_of(cfg));
  const TrainResult res = train(spec, data, tc);
  save_params(out / "params.json", spec, res.params);
  r.files.push_back("params.json");
  write_with(out / "loss.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"epoch", "mean_loss"});
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
      csv.row({std::to_string(e), format_double(res.epoch_loss[e])});
    }
  }, r);
  log("final mean loss " + format_double(res.epoch_loss.back()));
  return r;
}

RunOutput run_bank(const json& cfg, const fs::path& out) {
  RunOutput r;
  const LoadedParams loaded = load_params(cfg.at("params").get<std::string>());
  const Dataset data = cli::data_from_json(cfg.at("data"), seed_of(cfg));
  r.provenance = data.provenance;
  const GradientBank bank = bank_from_config(cfg, loaded, data);
  bank.save(out / "bank.bin");
  r.files.push_back("bank.bin");
  const json summary = {{"n", bank.size()},
                        {"output_dim", bank.output_dim()},
                        {"param_count", bank.param_count()},
                        {"excluded", bank.excluded()}};
  write_text(out / "bank.json", summary.dump(1) + "\n", r);
  log("bank: n=" + std::to_string(bank.size()) + " d=" + std::to_string(bank.output_dim()) +
      " p=" + std::to_string(bank.param_count()) + " excluded=" + std::to_string(bank.excluded().size()));
  return r;
}

RunOutput run_neighbors(const json& cfg, const fs::path& out) {
  RunOutput r;
  GradientBank bank;
  if (cfg.contains("bank") && !cfg.at("bank").is_null()) {
    bank = GradientBank::load(cfg.at("bank").get<std::string>());
    r.provenance["bank"] = cfg.at("bank").get<std::string>();
  } else {
    const LoadedParams loaded = load_params(cfg.at("params").get<std::string>());
    const Dataset data = cli::data_from_json(cfg.at("data"), seed_of(cfg));
    r.provenance = data.provenance;
    bank = bank_from_config(cfg, loaded, data);
  }
  bank.set_threads(threads_of(cfg));
  const NeighborReport rep = neighbor_report(bank, cli::density_from_json(cfg.at("density")));
  write_with(out / "neighbors.csv", [&](std::ostream& os) { write_neighbor_csv(rep, os); }, r);
  write_text(out / "neighbors.json", neighbor_report_json(rep) + "\n", r);
  std::vector<double> ns;
  for (const auto& rec : rep.records) {
    ns.push_back(rec.n_soft);
  }
  if (!ns.empty()) {
    log("median N_S " + format_double(median(ns)) + " over " + std::to_string(ns.size()) + " samples");
  }
  return r;
}

RunOutput run_denoise(const json& cfg, const fs::path& out) {
  RunOutput r;
  const LoadedParams loaded = load_params(cfg.at("params").get<std::string>());
  const Dataset data = cli::data_from_json(cfg.at("data"), seed_of(cfg));
  r.provenance = data.provenance;
  const std::size_t output = cfg.value("output", std::size_t{0});
  BankOptions opt;
  opt.output = output;
  opt.threads = threads_of(cfg);
  const GradientBank bank = GradientBank::build(loaded.spec, loaded.params, data, opt);
  const LabeledState state = LabeledState::from_model(loaded.spec, loaded.params, data, output, opt.threads);
  const DenoiseReport rep = denoise_report(bank, state);
  write_text(out / "denoise.json", denoise_report_json(rep) + "\n", r);
  write_with(out / "denoise.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"index", "factor", "shift", "bound", "residual", "normalized_residual", "negative_mass"});
    const auto f = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& rec : rep.records) {
      csv.row({std::to_string(rec.index), f(rec.factor), f(rec.shift), f(rec.bound), format_double(rec.residual.raw),
               f(rec.residual.normalized), format_double(rec.negative_mass)});
    }
  }, r);
  log("mean denoising factor " + format_double(rep.factor.mean) + ", mean |shift| " +
      format_double(rep.shift.mean_abs));
  return r;
}

RunOutput run_sweep(const json& cfg, const fs::path& out) {
  RunOutput r;
  const SweepConfig sc = cli::sweep_from_json(cfg);
  const SweepResult res = run_toy_sweep(sc, log);
  write_with(out / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(res, os); }, r);
  write_text(out / "sweep.svg", sweep_svg(res), r);
  write_text(out / "sweep_summary.json", sweep_summary_json(res) + "\n", r);
  for (const auto& w : res.warnings) {
    log("warning: " + w);
  }
  for (std::size_t e = 0; e < res.estimators.size(); ++e) {
    const auto& fit = res.fits[e];
    log(res.estimators[e] + " slope " + (fit.slope ? format_double(*fit.slope) : std::string("undefined")));
  }
  r.provenance["sampling"] = sc.jitter ? "jittered" : "equally-spaced";
  return r;
}

RunOutput run_dup_noise(const json& cfg, const fs::path& out) {
  RunOutput r;
  std::vector<std::size_t> dups;
  if (cfg.at("n_dup").is_array()) {
    dups = cfg.at("n_dup").get<std::vector<std::size_t>>();
  } else {
    dups = {cfg.at("n_dup").get<std::size_t>()};
  }
  json summary = {{"runs", json::array()}};
  std::vector<DuplicateNoiseResult> results;
  for (std::size_t n_dup : dups) {
    const DuplicateNoiseSpec spec = cli::dup_noise_from_json(cfg, n_dup);
    results.push_back(run_duplicate_noise(spec));
    summary["runs"].push_back(json::parse(duplicate_noise_json(results.back())));
    log("n_dup=" + std::to_string(n_dup) + " error std " + format_double(results.back().error_std) +
        " (sigma/sqrt(n) = " + format_double(results.back().expected_std) + ")");
  }
  if (results.size() >= 2) {
    const double ratio = results.back().error_std / results.front().error_std;
    const double expected = std::sqrt(static_cast<double>(dups.front()) / static_cast<double>(dups.back()));
    summary["std_ratio"] = ratio;
    summary["expected_ratio"] = expected;
    log("std ratio " + format_double(ratio) + " (expected " + format_double(expected) + ")");
  }
  write_with(out / "dup_noise.csv", [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"n_dup", "trial", "site", "alpha", "truth", "error", "factor"});
    for (const auto& res : results) {
      for (const auto& tr : res.trials) {
        for (std::size_t s = 0; s < tr.errors.size(); ++s) {
          csv.row({std::to_string(res.spec.n_dup), std::to_string(tr.trial), std::to_string(s),
                   format_double(res.site_alpha[s]), format_double(res.site_truth[s]), format_double(tr.errors[s]),
                   format_double(tr.factors[s])});
        }
      }
    }
  }, r);
  write_text(out / "dup_noise.json", summary.dump(1) + "\n", r);
  return r;
}

RunOutput run_enforce(const json& cfg, const fs::path& out) {
  RunOutput r;
  const EnforceDemoConfig ec = cli::enforce_from_json(cfg);
  const EnforceDemoResult res = run_enforce_demo(ec, log);
  write_with(out / "trace.csv", [&](std::ostream& os) { write_enforce_trace_csv(res, os); }, r);
  write_with(out / "validation.csv", [&](std::ostream& os) { write_enforce_validation_csv(res, os); }, r);
  write_text(out / "validation.svg", enforce_validation_svg(res), r);
  write_text(out / "criterion.svg", enforce_criterion_svg(res), r);
  write_text(out / "groups.json", groups_to_json(res.groups) + "\n", r);
  r.provenance["source"] = ec.source;
  if (ec.source == "idx") {
    r.provenance["note"] = "dense MLP substitute on an MNIST subset, not the convolutional network";
  }
  return r;
}

/// A flag whose value, when given, is written at a JSON pointer of the config.
class Overrides {
public:
  template <class T> void add(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<std::optional<T>>();
    app->add_option(flag, *value, help);
    apply_.push_back([value, pointer](json& cfg) {
      if (*value) {
        cfg[json::json_pointer(pointer)] = **value;
      }
    });
  }
  void apply(json& cfg) const {
    for (const auto& f : apply_) {
      f(cfg);
    }
  }

private:
  std::vector<std::function<void(json&)>> apply_;
};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-similarity analysis of neural networks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    Handler handler;
    Overrides overrides;
  };
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out_dir = "out";

  std::vector<std::unique_ptr<Command>> commands;
  const auto add = [&](const std::string& name, const std::string& help, Handler h) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->handler = std::move(h);
    cmd->app->add_option("--config", config_path, "JSON config file or a previous manifest.json");
    cmd->app->add_option("--seed", seed, "Base seed");
    cmd->app->add_option("--out", out_dir, "Output directory")->capture_default_str();
    cmd->app->add_option("--threads", threads, "Worker threads (0 = all cores)");
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  auto& train_cmd = add("train", "Train a network and save its parameters", run_train);
  train_cmd.overrides.add<double>(train_cmd.app, "--frequency", "/data/frequency", "Toy sinusoid frequency");
  train_cmd.overrides.add<std::size_t>(train_cmd.app, "--n", "/data/n", "Toy sample count");
  train_cmd.overrides.add<std::size_t>(train_cmd.app, "--epochs", "/train/epochs", "Training epochs");
  train_cmd.overrides.add<double>(train_cmd.app, "--lr", "/train/lr", "Adam learning rate");
  train_cmd.overrides.add<std::size_t>(train_cmd.app, "--batch-size", "/train/batch_size", "Mini-batch size");
  train_cmd.overrides.add<double>(train_cmd.app, "--init-gain", "/train/init_gain", "Initialization gain");
  train_cmd.overrides.add<std::vector<std::size_t>>(train_cmd.app, "--hidden", "/network/hidden", "Hidden layer widths");
  train_cmd.overrides.add<std::string>(train_cmd.app, "--activation", "/network/activation", "Hidden activation");

  auto& bank_cmd = add("bank", "Build a gradient bank and spill it to disk", run_bank);
  bank_cmd.overrides.add<std::string>(bank_cmd.app, "--params", "/params", "Parameter container");
  bank_cmd.overrides.add<double>(bank_cmd.app, "--frequency", "/data/frequency", "Toy sinusoid frequency");
  bank_cmd.overrides.add<std::size_t>(bank_cmd.app, "--n", "/data/n", "Toy sample count");
  bank_cmd.overrides.add<std::size_t>(bank_cmd.app, "--output-index", "/output", "Keep one output coordinate");
  bank_cmd.overrides.add<bool>(bank_cmd.app, "--binarize", "/binarize", "Keep the labelled-class row");

  auto& nb_cmd = add("neighbors", "Neighbor counts, histograms and nearest neighbors", run_neighbors);
  nb_cmd.overrides.add<std::string>(nb_cmd.app, "--params", "/params", "Parameter container");
  nb_cmd.overrides.add<std::string>(nb_cmd.app, "--bank", "/bank", "Gradient bank file (instead of params)");
  nb_cmd.overrides.add<double>(nb_cmd.app, "--frequency", "/data/frequency", "Toy sinusoid frequency");
  nb_cmd.overrides.add<std::size_t>(nb_cmd.app, "--n", "/data/n", "Toy sample count");
  nb_cmd.overrides.add<std::vector<double>>(nb_cmd.app, "--taus", "/density/taus", "Hard thresholds");
  nb_cmd.overrides.add<std::vector<double>>(nb_cmd.app, "--alphas", "/density/alphas", "Positive powers");
  nb_cmd.overrides.add<std::size_t>(nb_cmd.app, "--bins", "/density/bins", "Histogram bins");
  nb_cmd.overrides.add<std::size_t>(nb_cmd.app, "--k", "/density/k_nearest", "Nearest neighbors per sample");

  auto& dn_cmd = add("denoise", "Denoising factor, prediction shift and Lipschitz bound", run_denoise);
  dn_cmd.overrides.add<std::string>(dn_cmd.app, "--params", "/params", "Parameter container");
  dn_cmd.overrides.add<double>(dn_cmd.app, "--frequency", "/data/frequency", "Toy sinusoid frequency");
  dn_cmd.overrides.add<std::size_t>(dn_cmd.app, "--n", "/data/n", "Toy sample count");
  dn_cmd.overrides.add<std::size_t>(dn_cmd.app, "--output-index", "/output", "Output coordinate");

  auto& sw_cmd = add("sweep-toy", "Neighbor counts of toy sinusoid fits across frequencies", run_sweep);
  sw_cmd.overrides.add<std::vector<double>>(sw_cmd.app, "--frequencies", "/frequencies", "Frequencies");
  sw_cmd.overrides.add<std::size_t>(sw_cmd.app, "--repeats", "/repeats", "Seeds per frequency");
  sw_cmd.overrides.add<std::size_t>(sw_cmd.app, "--n", "/n", "Samples per dataset");
  sw_cmd.overrides.add<std::size_t>(sw_cmd.app, "--epochs", "/train/epochs", "Training epochs");
  sw_cmd.overrides.add<double>(sw_cmd.app, "--lr", "/train/lr", "Adam learning rate");
  sw_cmd.overrides.add<std::size_t>(sw_cmd.app, "--batch-size", "/train/batch_size", "Mini-batch size");
  sw_cmd.overrides.add<double>(sw_cmd.app, "--init-gain", "/train/init_gain", "Initialization gain");
  sw_cmd.overrides.add<std::vector<std::size_t>>(sw_cmd.app, "--hidden", "/network/hidden", "Hidden layer widths");
  sw_cmd.overrides.add<std::string>(sw_cmd.app, "--activation", "/network/activation", "Hidden activation");

  auto& dup_cmd = add("dup-noise", "Label-noise averaging over duplicated inputs", run_dup_noise);
  dup_cmd.overrides.add<std::vector<std::size_t>>(dup_cmd.app, "--n-dup", "/n_dup", "Duplicates per site");
  dup_cmd.overrides.add<std::size_t>(dup_cmd.app, "--sites", "/n_sites", "Distinct inputs");
  dup_cmd.overrides.add<double>(dup_cmd.app, "--sigma", "/sigma", "Label noise std");
  dup_cmd.overrides.add<std::size_t>(dup_cmd.app, "--trials", "/trials", "Noise draws");
  dup_cmd.overrides.add<std::size_t>(dup_cmd.app, "--epochs", "/train/epochs", "Training epochs");

  auto& en_cmd = add("enforce-demo", "Training with and without the similarity criterion", run_enforce);
  en_cmd.overrides.add<std::string>(en_cmd.app, "--source", "/source", "blobs or idx");
  en_cmd.overrides.add<std::string>(en_cmd.app, "--images", "/idx/images", "IDX image file");
  en_cmd.overrides.add<std::string>(en_cmd.app, "--labels", "/idx/labels", "IDX label file");
  en_cmd.overrides.add<std::size_t>(en_cmd.app, "--count", "/idx/count", "IDX subset size");
  en_cmd.overrides.add<double>(en_cmd.app, "--aux-weight", "/aux_weight", "Criterion weight");
  en_cmd.overrides.add<std::size_t>(en_cmd.app, "--epochs", "/train/epochs", "Training epochs");

  CLI11_PARSE(app, argc, argv);

  for (const auto& cmd : commands) {
    if (!cmd->app->parsed()) {
      continue;
    }
    const std::string name = cmd->app->get_name();
    try {
      const auto started = std::chrono::system_clock::now();
      const auto t0 = std::chrono::steady_clock::now();
      json cfg = cli::default_config(name);
      if (!config_path.empty()) {
        cli::merge_into(cfg, cli::load_config_file(config_path, name));
      }
      if (seed) {
        cfg["seed"] = *seed;
      }
      if (threads) {
        cfg["threads"] = *threads;
      }
      cmd->overrides.apply(cfg);
      const fs::path out(out_dir);
      fs::create_directories(out);
      const RunOutput res = cmd->handler(cfg, out);
      cli::Manifest m;
      m.command = name;
      m.config = cfg;
      m.outputs = res.files;
      m.provenance = res.provenance;
      m.started = started;
      m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      cli::write_manifest(out, m);
      log("wrote " + std::to_string(res.files.size()) + " file(s) and manifest.json to " + out.string());
    } catch (const std::exception& e) {
      std::cerr << "gradsim " << name << ": error: " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}
