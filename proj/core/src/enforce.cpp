#include "gradsim/enforce.hpp"

#include "gradsim/density.hpp"
#include "gradsim/error.hpp"
#include "gradsim/parallel.hpp"
#include "gradsim/report.hpp"
#include "gradsim/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace gradsim {

std::string_view to_string(PairingMode m) { return m == PairingMode::all_pairs ? "all-pairs" : "two-batch"; }

PairingMode parse_pairing_mode(std::string_view name) {
  if (name == "all-pairs") {
    return PairingMode::all_pairs;
  }
  if (name == "two-batch") {
    return PairingMode::two_batch;
  }
  throw std::invalid_argument("unknown pairing mode: " + std::string(name));
}

void SimilarityGroup::validate(std::size_t dataset_size) const {
  if (indices.size() < 2) {
    throw std::invalid_argument("group '" + name + "': needs at least two samples");
  }
  std::set<std::size_t> seen;
  for (std::size_t i : indices) {
    if (i >= dataset_size) {
      throw std::invalid_argument("group '" + name + "': index " + std::to_string(i) + " out of range");
    }
    if (!seen.insert(i).second) {
      throw std::invalid_argument("group '" + name + "': duplicate index " + std::to_string(i));
    }
  }
  if (mode == PairingMode::two_batch && (batch_size < 1 || 2 * batch_size > indices.size())) {
    throw std::invalid_argument("group '" + name + "': batch size must lie in [1, n/2]");
  }
}

std::vector<SimilarityGroup> parse_groups(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text);
  const auto& list = j.is_object() && j.contains("groups") ? j.at("groups") : j;
  if (!list.is_array()) {
    throw FormatError("groups: expected an array of groups");
  }
  std::vector<SimilarityGroup> groups;
  for (const auto& g : list) {
    SimilarityGroup s;
    s.name = g.value("name", std::string("group") + std::to_string(groups.size()));
    s.indices = g.at("indices").get<std::vector<std::size_t>>();
    s.mode = parse_pairing_mode(g.value("mode", std::string("two-batch")));
    s.batch_size = g.value("batch_size", std::size_t{1});
    s.output = g.value("output", std::size_t{0});
    groups.push_back(std::move(s));
  }
  return groups;
}

std::string groups_to_json(std::span<const SimilarityGroup> groups) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& g : groups) {
    list.push_back({{"name", g.name},
                    {"indices", g.indices},
                    {"mode", std::string(to_string(g.mode))},
                    {"batch_size", g.batch_size},
                    {"output", g.output}});
  }
  return nlohmann::json{{"groups", list}}.dump(1);
}

namespace {

std::vector<double> gradient_row(const NetworkSpec& spec, const ParamVector& params, std::span<const double> x,
                                 std::optional<std::size_t> output) {
  const std::size_t d = spec.output_dim();
  if (d > 1 && !output) {
    throw ShapeError("an output coordinate is required for multi-output networks");
  }
  const std::size_t c = output.value_or(0);
  if (c >= d) {
    throw ShapeError("output coordinate out of range");
  }
  std::vector<double> seed(d, 0.0);
  seed[c] = 1.0;
  return vector_jacobian(spec, params, x, seed);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < y.size(); ++k) {
    y[k] += a * x[k];
  }
}

} // namespace

PairLoss pair_loss(const NetworkSpec& spec, const ParamVector& params, std::span<const double> x,
                   std::span<const double> x_other, std::optional<std::size_t> output) {
  const auto g = gradient_row(spec, params, x, output);
  const auto h = gradient_row(spec, params, x_other, output);
  const double a = norm(g);
  const double b = norm(h);
  PairLoss out;
  if (!(a > 0.0) || !(b > 0.0)) {
    out.skipped = true;
    return out;
  }
  const double k = std::clamp(dot(g, h) / (a * b), -1.0, 1.0);
  out.value = -k;
  // grad k = H (g'/(ab) - k g/a^2) + H' (g/(ab) - k g'/b^2)
  const std::size_t p = g.size();
  std::vector<double> w(p), w_other(p);
  for (std::size_t q = 0; q < p; ++q) {
    w[q] = h[q] / (a * b) - k * g[q] / (a * a);
    w_other[q] = g[q] / (a * b) - k * h[q] / (b * b);
  }
  const std::size_t c = output.value_or(0);
  const auto hv = grad_of_inner_product(spec, params, x, w, c);
  const auto hv_other = grad_of_inner_product(spec, params, x_other, w_other, c);
  out.gradient.resize(p);
  for (std::size_t q = 0; q < p; ++q) {
    out.gradient[q] = -(hv[q] + hv_other[q]);
  }
  return out;
}

GroupStats group_stats(std::span<const std::size_t> indices, const GradientBank& bank) {
  if (indices.size() < 2) {
    throw std::invalid_argument("group_stats: needs at least two samples");
  }
  if (bank.output_dim() != 1) {
    throw ShapeError("group_stats: single-output bank required");
  }
  const std::size_t p = bank.param_count();
  const double n = static_cast<double>(indices.size());
  std::vector<double> mu(p, 0.0);
  for (std::size_t i : indices) {
    if (!bank.defined(i)) {
      throw std::invalid_argument("group_stats: sample " + std::to_string(i) + " has an undefined gradient");
    }
    axpy(1.0 / n, bank.unit(i), mu);
  }
  GroupStats s;
  s.mean_norm_sq = dot(mu, mu);
  double pair_sum = 0.0;
  double var = 0.0;
  for (std::size_t a = 0; a < indices.size(); ++a) {
    const auto u = bank.unit(indices[a]);
    for (std::size_t b = a + 1; b < indices.size(); ++b) {
      pair_sum += dot(u, bank.unit(indices[b]));
    }
    double d2 = 0.0;
    for (std::size_t q = 0; q < p; ++q) {
      const double diff = u[q] - mu[q];
      d2 += diff * diff;
    }
    var += d2;
  }
  s.mean_pairwise = pair_sum / (n * (n - 1.0) / 2.0);
  s.variance = var / n;
  return s;
}

namespace {

struct BatchGradients {
  std::vector<std::vector<double>> rows;
  std::vector<double> mean;
};

BatchGradients batch_gradients(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                               std::span<const std::size_t> batch, std::size_t output, std::size_t threads) {
  BatchGradients out;
  out.rows.resize(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    out.rows[b] = gradient_row(spec, params, dataset.samples.at(batch[b]).input, output);
  });
  out.mean.assign(params.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : out.rows) {
    axpy(inv, r, out.mean);
  }
  return out;
}

} // namespace

BatchCriterion batch_criterion(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                               std::span<const std::size_t> batch1, std::span<const std::size_t> batch2,
                               std::size_t output, bool with_gradient, std::size_t threads) {
  if (batch1.empty() || batch1.size() != batch2.size()) {
    throw std::invalid_argument("batch_criterion: batches must be nonempty and of equal size");
  }
  for (auto batch : {batch1, batch2}) {
    for (std::size_t i : batch) {
      if (i >= dataset.size()) {
        throw std::invalid_argument("batch_criterion: index " + std::to_string(i) + " out of range");
      }
    }
  }
  threads = resolve_threads(threads);
  const auto g1 = batch_gradients(spec, params, dataset, batch1, output, threads);
  const auto g2 = batch_gradients(spec, params, dataset, batch2, output, threads);
  const std::size_t p = params.size();
  const double a = norm(g1.mean);
  const double b = norm(g2.mean);
  BatchCriterion out;
  if (!(a > 0.0) || !(b > 0.0)) {
    return out;
  }
  std::vector<double> diff(p);
  for (std::size_t q = 0; q < p; ++q) {
    diff[q] = g1.mean[q] - g2.mean[q];
  }
  const double nb = static_cast<double>(batch1.size());
  const double d2 = dot(diff, diff);
  out.value = nb * d2 / (a * b);
  if (!with_gradient) {
    return out;
  }
  // The 1/n_B of each batch mean cancels n_B, leaving one HVP per member.
  std::vector<double> w1(p), w2(p);
  const double r = d2 / (a * b);
  for (std::size_t q = 0; q < p; ++q) {
    w1[q] = 2.0 * diff[q] / (a * b) - r * g1.mean[q] / (a * a);
    w2[q] = -2.0 * diff[q] / (a * b) - r * g2.mean[q] / (b * b);
  }
  const std::size_t m = batch1.size();
  std::vector<std::vector<double>> parts(2 * m);
  parallel_for(2 * m, threads, [&](std::size_t k) {
    const bool first = k < m;
    const std::size_t idx = first ? batch1[k] : batch2[k - m];
    parts[k] = grad_of_inner_product(spec, params, dataset.samples.at(idx).input, first ? w1 : w2, output);
  });
  out.gradient.assign(p, 0.0);
  for (const auto& part : parts) {
    axpy(1.0, part, out.gradient);
  }
  return out;
}

double density_homogeneity_loss(const GradientBank& bank, double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("density_homogeneity_loss: q must lie in (0, 1]");
  }
  const auto counts = bank.output_dim() == 1 ? count_soft_fast(bank) : count_soft_fast_multid(bank).values;
  const double n = static_cast<double>(bank.size());
  double s = 0.0;
  for (double c : counts) {
    const double e = c / n - q;
    s += e * e;
  }
  return s;
}

namespace {

/// -mean pairwise k^C over the whole group and its gradient, via
/// mean pairwise = n/(n-1) |mu|^2 - 1/(n-1) with mu the mean unit gradient.
BatchCriterion all_pairs_loss(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                              std::span<const std::size_t> indices, std::size_t output, bool with_gradient,
                              std::size_t threads) {
  const std::size_t m = indices.size();
  const std::size_t p = params.size();
  std::vector<std::vector<double>> rows(m);
  std::vector<double> norms(m);
  parallel_for(m, threads, [&](std::size_t k) {
    rows[k] = gradient_row(spec, params, dataset.samples.at(indices[k]).input, output);
    norms[k] = norm(rows[k]);
  });
  BatchCriterion out;
  std::vector<double> mu(p, 0.0);
  const double n = static_cast<double>(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (!(norms[k] > 0.0)) {
      return out;
    }
    axpy(1.0 / (n * norms[k]), rows[k], mu);
  }
  const double mu2 = dot(mu, mu);
  out.value = -(n / (n - 1.0) * mu2 - 1.0 / (n - 1.0));
  if (!with_gradient) {
    return out;
  }
  // d|mu|^2 = (2/n) sum_k mu . (I - u_k u_k^T) H_k dtheta / |g_k|
  std::vector<std::vector<double>> parts(m);
  parallel_for(m, threads, [&](std::size_t k) {
    const double a = norms[k];
    const double proj = dot(mu, rows[k]) / a;
    std::vector<double> w(p);
    for (std::size_t q = 0; q < p; ++q) {
      w[q] = (mu[q] - proj * rows[k][q] / a) / a;
    }
    parts[k] = grad_of_inner_product(spec, params, dataset.samples.at(indices[k]).input, w, output);
  });
  out.gradient.assign(p, 0.0);
  const double scale = -(n / (n - 1.0)) * 2.0 / n;
  for (const auto& part : parts) {
    axpy(scale, part, out.gradient);
  }
  return out;
}

} // namespace

AuxTrainResult train_with_auxiliary(const NetworkSpec& spec, const Dataset& dataset,
                                    std::span<const SimilarityGroup> groups, const TrainConfig& config,
                                    double aux_weight, std::size_t threads,
                                    const std::optional<ParamVector>& initial, const StepObserver& observer) {
  if (!(aux_weight >= 0.0) || !std::isfinite(aux_weight)) {
    throw std::invalid_argument("aux_weight must be finite and nonnegative");
  }
  if (groups.empty()) {
    throw std::invalid_argument("train_with_auxiliary: at least one group is required");
  }
  for (const auto& g : groups) {
    g.validate(dataset.size());
    if (g.output >= spec.output_dim()) {
      throw ShapeError("group '" + g.name + "': output coordinate out of range");
    }
  }
  threads = resolve_threads(threads);
  CounterRng rng(config.seed, "groups");
  std::vector<std::size_t> scratch;
  AuxiliaryLoss aux = [&](const ParamVector& params, std::span<double> grad, const StepContext& ctx) {
    if (observer) {
      observer(params, ctx.step);
    }
    const SimilarityGroup& g = groups[rng.below(groups.size())];
    const bool with_gradient = aux_weight > 0.0;
    BatchCriterion c;
    if (g.mode == PairingMode::all_pairs) {
      c = all_pairs_loss(spec, params, dataset, g.indices, g.output, with_gradient, threads);
    } else {
      scratch.assign(g.indices.begin(), g.indices.end());
      // Partial Fisher-Yates: the first 2 n_B entries are a uniform draw
      // without replacement.
      const std::size_t nb = g.batch_size;
      for (std::size_t k = 0; k < 2 * nb; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.below(scratch.size() - k));
        std::swap(scratch[k], scratch[j]);
      }
      const std::span<const std::size_t> s(scratch);
      c = batch_criterion(spec, params, dataset, s.subspan(0, nb), s.subspan(nb, nb), g.output, with_gradient,
                          threads);
    }
    if (!c.value) {
      return 0.0;
    }
    if (with_gradient) {
      axpy(aux_weight, c.gradient, grad);
    }
    return *c.value;
  };
  AuxTrainResult out;
  out.train = train(spec, dataset, config, aux, initial);
  out.trace.reserve(out.train.steps.size());
  for (const auto& s : out.train.steps) {
    out.trace.push_back({s.step, s.epoch, s.main_loss, s.criterion, aux_weight});
  }
  return out;
}

void write_trace_csv(std::span<const AuxTraceRow> trace, std::ostream& os) {
  CsvWriter csv(os);
  csv.row({"step", "main_loss", "criterion", "aux_weight"});
  for (const auto& r : trace) {
    csv.row({std::to_string(r.step), format_double(r.main_loss), r.criterion ? format_double(*r.criterion) : "",
             format_double(r.aux_weight)});
  }
}

} // namespace gradsim
