#include "gradsim/experiments.hpp"

#include "gradsim/bank.hpp"
#include "gradsim/denoise.hpp"
#include "gradsim/error.hpp"
#include "gradsim/idx.hpp"
#include "gradsim/parallel.hpp"
#include "gradsim/report.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/svg.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <set>
#include <stdexcept>

namespace gradsim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json finite_or_null(double v) {
  if (!std::isfinite(v)) {
    return nullptr;
  }
  return v;
}

nlohmann::json opt_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) {
    return nullptr;
  }
  return *v;
}

void report(const ProgressFn& progress, std::mutex& mutex, const std::string& msg) {
  if (progress) {
    std::lock_guard lock(mutex);
    progress(msg);
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

} // namespace

// ---------------------------------------------------------------------------
// Toy sweep

TrainConfig toy_train_config() {
  TrainConfig t;
  t.adam.lr = 1e-4;
  t.epochs = 80;
  t.batch_size = 4;
  t.init_gain = 3.0;
  return t;
}

void SweepConfig::validate() const {
  if (frequencies.empty()) {
    throw std::invalid_argument("sweep: at least one frequency is required");
  }
  for (double f : frequencies) {
    ToySpec{f, n, 0, jitter}.validate();
  }
  if (repeats < 1) {
    throw std::invalid_argument("sweep: repeats must be at least 1");
  }
  NetworkSpec::mlp(2, hidden, 1, activation).validate();
  train.validate();
  estimators.validate();
}

std::vector<std::string> estimator_names(const DensityConfig& config) {
  std::vector<std::string> names = {"N_S"};
  for (double t : config.taus) {
    names.push_back("N_tau@" + format_double(t));
  }
  for (double a : config.alphas) {
    names.push_back("N_alpha@" + format_double(a));
  }
  return names;
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw ShapeError("fit_loglog: x and y must have equal length");
  }
  std::vector<double> lx, ly;
  std::set<double> distinct;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] > 0.0 && y[k] > 0.0 && std::isfinite(x[k]) && std::isfinite(y[k])) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
      distinct.insert(x[k]);
    }
  }
  SlopeFit fit;
  fit.points = lx.size();
  if (distinct.size() < 2) {
    return fit;
  }
  const double mx = mean_of(lx);
  const double my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - *fit.slope * mx;
  return fit;
}

std::size_t SweepResult::estimator_index(const std::string& name) const {
  const auto it = std::find(estimators.begin(), estimators.end(), name);
  if (it == estimators.end()) {
    throw std::out_of_range("unknown estimator: " + name);
  }
  return static_cast<std::size_t>(it - estimators.begin());
}

SweepResult run_toy_sweep(const SweepConfig& config, const ProgressFn& progress) {
  config.validate();
  SweepResult result;
  result.estimators = estimator_names(config.estimators);
  result.frequencies = config.frequencies;
  const std::size_t nf = config.frequencies.size();
  const std::size_t ne = result.estimators.size();
  result.cells.resize(nf * config.repeats);
  DensityConfig density = config.estimators;
  density.k_nearest = 0;
  const NetworkSpec spec = NetworkSpec::mlp(2, config.hidden, 1, config.activation);
  std::mutex progress_mutex;

  parallel_for(result.cells.size(), resolve_threads(config.threads), [&](std::size_t c) {
    SweepCell& cell = result.cells[c];
    cell.frequency = config.frequencies[c / config.repeats];
    cell.repeat = c % config.repeats;
    cell.seed = config.train.seed + cell.repeat;
    const Dataset data = gen_toy({cell.frequency, config.n, cell.seed, config.jitter});
    TrainConfig tc = config.train;
    tc.seed = cell.seed;
    TrainResult trained;
    try {
      trained = train(spec, data, tc);
    } catch (const TrainingError& e) {
      cell.diverged = true;
      cell.error = e.what();
      cell.median.assign(ne, kNaN);
      cell.mean.assign(ne, kNaN);
      report(progress, progress_mutex,
             "f=" + format_double(cell.frequency) + " seed=" + std::to_string(cell.seed) + " diverged: " + e.what());
      return;
    }
    cell.final_loss = trained.epoch_loss.back();
    double se = 0.0;
    for (const auto& s : data.samples) {
      const double e = forward(spec, trained.params, s.input)[0] - s.label[0];
      se += e * e;
    }
    cell.rmse = std::sqrt(se / static_cast<double>(data.size()));
    const GradientBank bank = GradientBank::build(spec, trained.params, data, BankOptions{});
    const NeighborReport rep = neighbor_report(bank, density);
    std::vector<std::vector<double>> columns(ne, std::vector<double>(rep.records.size()));
    for (std::size_t i = 0; i < rep.records.size(); ++i) {
      const auto& r = rep.records[i];
      columns[0][i] = r.n_soft;
      for (std::size_t t = 0; t < r.n_tau.size(); ++t) {
        columns[1 + t][i] = static_cast<double>(r.n_tau[t]);
      }
      for (std::size_t a = 0; a < r.n_alpha.size(); ++a) {
        columns[1 + r.n_tau.size() + a][i] = r.n_alpha[a];
      }
    }
    for (const auto& col : columns) {
      cell.median.push_back(median(col));
      cell.mean.push_back(mean_of(col));
    }
    report(progress, progress_mutex,
           "f=" + format_double(cell.frequency) + " seed=" + std::to_string(cell.seed) +
               " rmse=" + format_double(cell.rmse) + " median N_S=" + format_double(cell.median[0]));
  });

  result.median_over_seeds.assign(ne, std::vector<double>(nf, kNaN));
  for (std::size_t f = 0; f < nf; ++f) {
    std::size_t kept = 0;
    for (std::size_t e = 0; e < ne; ++e) {
      std::vector<double> vals;
      for (std::size_t r = 0; r < config.repeats; ++r) {
        const SweepCell& cell = result.cells[f * config.repeats + r];
        if (!cell.diverged) {
          vals.push_back(cell.median[e]);
        }
      }
      kept = vals.size();
      if (!vals.empty()) {
        result.median_over_seeds[e][f] = median(vals);
      }
    }
    if (kept < config.repeats) {
      result.warnings.push_back("f=" + format_double(config.frequencies[f]) + ": " +
                                std::to_string(config.repeats - kept) + " diverged cell(s) excluded");
    }
  }
  for (std::size_t e = 0; e < ne; ++e) {
    result.fits.push_back(fit_loglog(config.frequencies, result.median_over_seeds[e]));
  }
  if (!result.fits.empty() && !result.fits[0].slope) {
    result.warnings.push_back("slope undefined: fewer than two frequencies with results");
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& os) {
  CsvWriter csv(os);
  csv.row({"frequency", "repeat", "seed", "estimator", "median", "mean", "status"});
  for (const auto& cell : result.cells) {
    for (std::size_t e = 0; e < result.estimators.size(); ++e) {
      csv.row({format_double(cell.frequency), std::to_string(cell.repeat), std::to_string(cell.seed),
               result.estimators[e], cell.diverged ? "" : format_double(cell.median[e]),
               cell.diverged ? "" : format_double(cell.mean[e]), cell.diverged ? "diverged" : "ok"});
    }
  }
}

std::string sweep_svg(const SweepResult& result) {
  std::vector<Series> series;
  for (std::size_t e = 0; e < result.estimators.size(); ++e) {
    series.push_back({result.estimators[e], result.frequencies, result.median_over_seeds[e]});
  }
  return render_svg({"Median neighbor count vs frequency", "frequency f", "median count", true, true}, series);
}

std::string sweep_summary_json(const SweepResult& result) {
  nlohmann::json j;
  j["frequencies"] = result.frequencies;
  nlohmann::json est = nlohmann::json::array();
  for (std::size_t e = 0; e < result.estimators.size(); ++e) {
    nlohmann::json med = nlohmann::json::array();
    for (double v : result.median_over_seeds[e]) {
      med.push_back(finite_or_null(v));
    }
    est.push_back({{"name", result.estimators[e]},
                   {"median_over_seeds", med},
                   {"slope", opt_json(result.fits[e].slope)},
                   {"intercept", opt_json(result.fits[e].intercept)},
                   {"points", result.fits[e].points}});
  }
  j["estimators"] = est;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"frequency", c.frequency},
                     {"repeat", c.repeat},
                     {"seed", c.seed},
                     {"status", c.diverged ? "diverged" : "ok"},
                     {"error", c.error},
                     {"final_loss", finite_or_null(c.final_loss)},
                     {"rmse", finite_or_null(c.rmse)}});
  }
  j["cells"] = cells;
  j["warnings"] = result.warnings;
  return j.dump(1);
}

// ---------------------------------------------------------------------------
// Duplicate noise

TrainConfig DuplicateNoiseSpec::default_train() {
  TrainConfig t;
  t.adam.lr = 3e-3;
  t.epochs = 1500;
  t.batch_size = 1024;
  return t;
}

void DuplicateNoiseSpec::validate() const {
  if (n_dup < 1) {
    throw std::invalid_argument("dup-noise: n_dup must be at least 1");
  }
  if (n_sites < 1) {
    throw std::invalid_argument("dup-noise: n_sites must be at least 1");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("dup-noise: sigma must be positive");
  }
  if (trials < 1) {
    throw std::invalid_argument("dup-noise: trials must be at least 1");
  }
  NetworkSpec::mlp(2, hidden, 1, activation).validate();
  train.validate();
}

DuplicateNoiseResult run_duplicate_noise(const DuplicateNoiseSpec& spec, const ProgressFn& progress) {
  spec.validate();
  DuplicateNoiseResult result;
  result.spec = spec;
  const NetworkSpec net = NetworkSpec::mlp(2, spec.hidden, 1, spec.activation);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::vector<double>> inputs;
  for (std::size_t s = 0; s < spec.n_sites; ++s) {
    const double a = static_cast<double>(s) / static_cast<double>(spec.n_sites);
    result.site_alpha.push_back(a);
    result.site_truth.push_back(std::sin(two_pi * a));
    inputs.push_back({std::cos(two_pi * a), std::sin(two_pi * a)});
  }
  result.trials.resize(spec.trials);
  std::mutex progress_mutex;
  parallel_for(spec.trials, resolve_threads(spec.threads), [&](std::size_t t) {
    CounterRng noise(spec.seed + t, "dup-noise");
    Dataset data;
    for (std::size_t s = 0; s < spec.n_sites; ++s) {
      for (std::size_t k = 0; k < spec.n_dup; ++k) {
        data.samples.push_back({inputs[s], {result.site_truth[s] + spec.sigma * noise.normal()}});
      }
    }
    TrainConfig tc = spec.train;
    tc.seed = spec.seed + t;
    const TrainResult trained = train(net, data, tc);
    DuplicateNoiseTrial& trial = result.trials[t];
    trial.trial = t;
    trial.final_loss = trained.epoch_loss.back();
    const GradientBank bank = GradientBank::build(net, trained.params, data, BankOptions{});
    for (std::size_t s = 0; s < spec.n_sites; ++s) {
      trial.errors.push_back(forward(net, trained.params, inputs[s])[0] - result.site_truth[s]);
      trial.factors.push_back(denoising_factor(s * spec.n_dup, bank).value_or(kNaN));
    }
    report(progress, progress_mutex, "trial " + std::to_string(t) + " loss=" + format_double(trial.final_loss));
  });
  double pooled = 0.0, sq = 0.0, fsum = 0.0;
  std::size_t fcount = 0;
  const double nt = static_cast<double>(spec.trials);
  for (std::size_t s = 0; s < spec.n_sites; ++s) {
    double m = 0.0;
    for (const auto& tr : result.trials) {
      m += tr.errors[s] / nt;
    }
    double v = 0.0;
    for (const auto& tr : result.trials) {
      v += (tr.errors[s] - m) * (tr.errors[s] - m);
      sq += tr.errors[s] * tr.errors[s];
      if (std::isfinite(tr.factors[s])) {
        fsum += tr.factors[s];
        ++fcount;
      }
    }
    pooled += spec.trials > 1 ? v / (nt - 1.0) : 0.0;
  }
  result.error_std = std::sqrt(pooled / static_cast<double>(spec.n_sites));
  result.error_rms = std::sqrt(sq / (nt * static_cast<double>(spec.n_sites)));
  result.mean_factor = fcount ? fsum / static_cast<double>(fcount) : kNaN;
  result.expected_std = spec.sigma / std::sqrt(static_cast<double>(spec.n_dup));
  return result;
}

void write_duplicate_noise_csv(const DuplicateNoiseResult& result, std::ostream& os) {
  CsvWriter csv(os);
  csv.row({"trial", "site", "alpha", "truth", "error", "factor"});
  for (const auto& tr : result.trials) {
    for (std::size_t s = 0; s < tr.errors.size(); ++s) {
      csv.row({std::to_string(tr.trial), std::to_string(s), format_double(result.site_alpha[s]),
               format_double(result.site_truth[s]), format_double(tr.errors[s]), format_double(tr.factors[s])});
    }
  }
}

std::string duplicate_noise_json(const DuplicateNoiseResult& result) {
  nlohmann::json j;
  j["n_dup"] = result.spec.n_dup;
  j["n_sites"] = result.spec.n_sites;
  j["sigma"] = result.spec.sigma;
  j["trials"] = result.spec.trials;
  j["error_std"] = finite_or_null(result.error_std);
  j["error_rms"] = finite_or_null(result.error_rms);
  j["expected_std"] = finite_or_null(result.expected_std);
  j["mean_factor"] = finite_or_null(result.mean_factor);
  return j.dump(1);
}

// ---------------------------------------------------------------------------
// Enforcement demo

TrainConfig EnforceDemoConfig::default_train() {
  TrainConfig t;
  t.adam.lr = 1e-3;
  t.epochs = 5;
  t.batch_size = 16;
  return t;
}

void EnforceDemoConfig::validate() const {
  if (source != "blobs" && source != "idx") {
    throw std::invalid_argument("enforce-demo: source must be 'blobs' or 'idx'");
  }
  if (source == "idx" && (idx_images.empty() || idx_labels.empty())) {
    throw std::invalid_argument("enforce-demo: idx source needs image and label files");
  }
  if (!(aux_weight >= 0.0)) {
    throw std::invalid_argument("enforce-demo: aux_weight must be nonnegative");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("enforce-demo: validation fraction must lie in (0, 1)");
  }
  if (group_batch < 1 || eval_every < 1) {
    throw std::invalid_argument("enforce-demo: group batch and eval interval must be at least 1");
  }
  train.validate();
}

namespace {

std::size_t class_of(const Sample& s) {
  if (s.label.size() == 1) {
    return s.label[0] > 0.0 ? 1 : 0;
  }
  return static_cast<std::size_t>(std::max_element(s.label.begin(), s.label.end()) - s.label.begin());
}

double accuracy(const NetworkSpec& spec, const ParamVector& params, const Dataset& data) {
  std::size_t hits = 0;
  for (const auto& s : data.samples) {
    const auto out = forward(spec, params, s.input);
    const std::size_t predicted =
        out.size() == 1 ? (out[0] > 0.0 ? 1 : 0)
                        : static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
    hits += predicted == class_of(s) ? 1 : 0;
  }
  return data.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(data.size());
}

} // namespace

EnforceDemoResult run_enforce_demo(const EnforceDemoConfig& config, const ProgressFn& progress) {
  config.validate();
  Dataset all;
  if (config.source == "blobs") {
    all = gen_blobs(config.blobs);
  } else {
    all = read_idx(config.idx_images, config.idx_labels, {config.idx_count, config.train.seed});
  }
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(config.validation_fraction * static_cast<double>(all.size()))));
  if (n_val >= all.size()) {
    throw std::invalid_argument("enforce-demo: dataset too small for a validation split");
  }
  std::vector<std::size_t> order(all.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    order[k] = k;
  }
  CounterRng split_rng(config.train.seed, "split");
  split_rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const Dataset train_set = all.subset(train_idx);
  const Dataset val_set = all.subset(val_idx);

  const bool classification = config.source == "idx";
  const std::size_t out_dim = classification ? kIdxClasses : 1;
  const NetworkSpec spec = NetworkSpec::mlp(all.input_dim(), config.hidden, out_dim, config.activation);
  TrainConfig tc = config.train;
  if (classification) {
    tc.loss = LossKind::cross_entropy_presoftmax;
  }

  EnforceDemoResult result;
  result.train_size = train_set.size();
  result.validation_size = val_set.size();
  std::vector<std::vector<std::size_t>> members(classification ? kIdxClasses : 2);
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    members[class_of(train_set.samples[i])].push_back(i);
  }
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].size() < 2) {
      continue;
    }
    SimilarityGroup g;
    g.name = classification ? "class" + std::to_string(c) : (c == 0 ? "blob-" : "blob+");
    g.indices = members[c];
    g.batch_size = std::min(config.group_batch, members[c].size() / 2);
    g.output = classification ? c : 0;
    result.groups.push_back(std::move(g));
  }
  if (result.groups.empty()) {
    throw std::invalid_argument("enforce-demo: no class has two training samples");
  }

  std::mutex progress_mutex;
  for (double w : {0.0, config.aux_weight}) {
    EnforceCurve curve;
    curve.aux_weight = w;
    const StepObserver observer = [&](const ParamVector& params, std::size_t step) {
      if (step % config.eval_every == 0) {
        curve.eval_steps.push_back(step);
        curve.validation_accuracy.push_back(accuracy(spec, params, val_set));
      }
    };
    const AuxTrainResult trained =
        train_with_auxiliary(spec, train_set, result.groups, tc, w, config.threads, std::nullopt, observer);
    curve.eval_steps.push_back(trained.train.steps.size());
    curve.validation_accuracy.push_back(accuracy(spec, trained.train.params, val_set));
    curve.trace = trained.trace;
    report(progress, progress_mutex,
           "aux_weight=" + format_double(w) + " final accuracy=" + format_double(curve.validation_accuracy.back()));
    result.curves.push_back(std::move(curve));
    if (config.aux_weight == 0.0) {
      break;
    }
  }
  return result;
}

void write_enforce_trace_csv(const EnforceDemoResult& result, std::ostream& os) {
  CsvWriter csv(os);
  csv.row({"step", "main_loss", "criterion", "aux_weight"});
  for (const auto& c : result.curves) {
    for (const auto& r : c.trace) {
      csv.row({std::to_string(r.step), format_double(r.main_loss),
               r.criterion ? format_double(*r.criterion) : "", format_double(r.aux_weight)});
    }
  }
}

void write_enforce_validation_csv(const EnforceDemoResult& result, std::ostream& os) {
  CsvWriter csv(os);
  csv.row({"step", "aux_weight", "validation_accuracy"});
  for (const auto& c : result.curves) {
    for (std::size_t k = 0; k < c.eval_steps.size(); ++k) {
      csv.row({std::to_string(c.eval_steps[k]), format_double(c.aux_weight), format_double(c.validation_accuracy[k])});
    }
  }
}

std::string enforce_validation_svg(const EnforceDemoResult& result) {
  std::vector<Series> series;
  for (const auto& c : result.curves) {
    Series s{"aux_weight " + format_double(c.aux_weight), {}, c.validation_accuracy};
    for (std::size_t st : c.eval_steps) {
      s.x.push_back(static_cast<double>(st));
    }
    series.push_back(std::move(s));
  }
  return render_svg({"Validation accuracy", "minibatches", "accuracy", false, false}, series);
}

std::string enforce_criterion_svg(const EnforceDemoResult& result) {
  std::vector<Series> series;
  for (const auto& c : result.curves) {
    Series s{"aux_weight " + format_double(c.aux_weight), {}, {}};
    for (const auto& r : c.trace) {
      if (r.criterion) {
        s.x.push_back(static_cast<double>(r.step));
        s.y.push_back(*r.criterion);
      }
    }
    series.push_back(std::move(s));
  }
  return render_svg({"Batch criterion", "minibatches", "criterion", false, true}, series);
}

} // namespace gradsim
