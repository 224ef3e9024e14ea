#include "gradsim/density.hpp"

#include "gradsim/error.hpp"
#include "gradsim/parallel.hpp"
#include "gradsim/report.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gradsim {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_index(std::size_t i, const GradientBank& bank) {
  if (i >= bank.size()) {
    throw std::out_of_range("sample index " + std::to_string(i) + " out of range");
  }
}

std::string tau_label(double t) { return "N_tau@" + format_double(t); }
std::string alpha_label(double a) { return "N_alpha@" + format_double(a); }

} // namespace

void DensityConfig::validate() const {
  for (double t : taus) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw std::invalid_argument("density: tau must lie in [0, 1]");
    }
  }
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("density: alpha must be positive");
    }
  }
  if (bins == 0) {
    throw std::invalid_argument("density: bins must be at least 1");
  }
}

std::size_t count_hard(std::size_t i, const GradientBank& bank, double tau, bool include_self) {
  check_index(i, bank);
  std::size_t count = 0;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j == i && !include_self) {
      continue;
    }
    if (bank.similarity(i, j) >= tau) {
      ++count;
    }
  }
  return count;
}

double count_soft_naive(std::size_t i, const GradientBank& bank, bool include_self) {
  check_index(i, bank);
  double s = 0.0;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j == i && !include_self) {
      continue;
    }
    s += bank.similarity(i, j);
  }
  return s;
}

std::vector<double> count_soft_fast(const GradientBank& bank, bool include_self) {
  if (bank.size() > 0 && bank.output_dim() != 1) {
    throw ShapeError("count_soft_fast: single-output bank required (use count_soft_fast_multid)");
  }
  return count_soft_fast_multid(bank, include_self).values;
}

MultiOutputCounts count_soft_fast_multid(const GradientBank& bank, bool include_self) {
  MultiOutputCounts out;
  const std::size_t n = bank.size();
  out.values.assign(n, 0.0);
  out.excluded = bank.excluded();
  if (n == 0) {
    return out;
  }
  const std::size_t d = bank.output_dim();
  const std::size_t p = bank.param_count();
  // One accumulated p-vector per output row; only the diagonal of the d x d
  // table u_i,a . S_b enters the trace.
  const std::vector<double> sums = deterministic_sum(n, d * p, bank.threads(), [&](std::size_t j, std::span<double> acc) {
    if (!bank.defined(j)) {
      return;
    }
    for (std::size_t r = 0; r < d; ++r) {
      const auto u = bank.unit(j, r);
      double* a = acc.data() + r * p;
      for (std::size_t q = 0; q < p; ++q) {
        a[q] += u[q];
      }
    }
  });
  parallel_for(n, bank.threads(), [&](std::size_t i) {
    if (!bank.defined(i)) {
      return;
    }
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      s += dot(bank.unit(i, r), std::span<const double>(sums).subspan(r * p, p));
    }
    s /= static_cast<double>(d);
    out.values[i] = include_self ? s : s - 1.0;
  });
  return out;
}

double count_positive_alpha(std::size_t i, const GradientBank& bank, double alpha, bool include_self) {
  check_index(i, bank);
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("count_positive_alpha: alpha must be positive");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j == i && !include_self) {
      continue;
    }
    const double k = bank.similarity(i, j);
    if (k > 0.0) {
      s += std::pow(k, alpha);
    }
  }
  return s;
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram make_histogram(std::span<const double> similarities, std::size_t bins) {
  if (bins == 0) {
    throw std::invalid_argument("histogram: bins must be at least 1");
  }
  Histogram h;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
  }
  for (double k : similarities) {
    const double pos = (std::clamp(k, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(bins);
    const auto b = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, std::floor(pos))));
    ++h.counts[b];
  }
  return h;
}

Histogram histogram(std::size_t i, const GradientBank& bank, std::size_t bins, bool include_self) {
  check_index(i, bank);
  std::vector<double> row;
  row.reserve(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j != i || include_self) {
      row.push_back(bank.similarity(i, j));
    }
  }
  Histogram h = make_histogram(row, bins);
  h.include_self = include_self;
  return h;
}

namespace {

std::vector<Neighbor> nearest_from_row(std::size_t i, std::span<const double> row, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j != i) {
      all.push_back({j, row[j]});
    }
  }
  k = std::min(k, all.size());
  const auto order = [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.index < b.index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), order);
  all.resize(k);
  return all;
}

} // namespace

std::vector<Neighbor> k_nearest(std::size_t i, const GradientBank& bank, std::size_t k) {
  check_index(i, bank);
  if (bank.size() > 0 && k > bank.size() - 1) {
    throw std::invalid_argument("k_nearest: k must not exceed n - 1");
  }
  std::vector<double> row(bank.size());
  bank.similarity_row(i, row);
  return nearest_from_row(i, row, k);
}

Uncertainty uncertainty_factor(std::size_t i, const GradientBank& bank) {
  check_index(i, bank);
  Uncertainty u;
  u.numerator = bank.inner(i, i);
  for (std::size_t j = 0; j < bank.size(); ++j) {
    u.denominator += bank.inner(i, j);
  }
  if (u.denominator != 0.0) {
    u.value = u.numerator / u.denominator;
  }
  return u;
}

std::vector<Uncertainty> uncertainty_fast(const GradientBank& bank) {
  const std::size_t n = bank.size();
  std::vector<Uncertainty> out(n);
  if (n == 0) {
    return out;
  }
  if (bank.output_dim() != 1) {
    throw ShapeError("uncertainty_fast: single-output bank required");
  }
  const std::size_t p = bank.param_count();
  const std::vector<double> g = deterministic_sum(n, p, bank.threads(), [&](std::size_t j, std::span<double> acc) {
    if (!bank.defined(j)) {
      return;
    }
    const double s = bank.norm(j);
    const auto u = bank.unit(j);
    for (std::size_t q = 0; q < p; ++q) {
      acc[q] += s * u[q];
    }
  });
  parallel_for(n, bank.threads(), [&](std::size_t i) {
    Uncertainty& u = out[i];
    u.numerator = bank.inner(i, i);
    if (bank.defined(i)) {
      u.denominator = bank.norm(i) * dot(bank.unit(i), g);
    }
    if (u.denominator != 0.0) {
      u.value = u.numerator / u.denominator;
    }
  });
  return out;
}

void for_each_similarity_row(const GradientBank& bank,
                             const std::function<void(std::size_t, std::span<const double>)>& fn,
                             std::size_t block_rows) {
  const std::size_t n = bank.size();
  if (n == 0) {
    return;
  }
  const std::size_t d = bank.output_dim();
  const std::size_t p = bank.param_count();
  block_rows = std::max<std::size_t>(1, block_rows);
  const std::size_t rows = n * d;
  // Gather all whitened rows once: row i * d + r.
  Eigen::Map<const RowMajor> all(bank.unit(0).data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  std::vector<double> row(n);
  for (std::size_t begin = 0; begin < n; begin += block_rows) {
    const std::size_t count = std::min(block_rows, n - begin);
    const RowMajor block = all.middleRows(static_cast<Eigen::Index>(begin * d), static_cast<Eigen::Index>(count * d)) *
                           all.transpose();
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t i = begin + b;
      for (std::size_t j = 0; j < n; ++j) {
        if (!bank.defined(i) || !bank.defined(j)) {
          row[j] = 0.0;
          continue;
        }
        if (i == j) {
          row[j] = 1.0;
          continue;
        }
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          s += block(static_cast<Eigen::Index>(b * d + r), static_cast<Eigen::Index>(j * d + r));
        }
        row[j] = std::clamp(s / static_cast<double>(d), -1.0, 1.0);
      }
      fn(i, row);
    }
  }
}

NeighborReport neighbor_report(const GradientBank& bank, const DensityConfig& config) {
  config.validate();
  NeighborReport report;
  report.config = config;
  report.n = bank.size();
  report.output_dim = bank.output_dim();
  report.excluded = bank.excluded();
  report.records.resize(bank.size());
  std::vector<Uncertainty> unc;
  if (bank.output_dim() == 1) {
    unc = uncertainty_fast(bank);
  }
  const std::size_t k = bank.size() == 0 ? 0 : std::min(config.k_nearest, bank.size() - 1);
  std::vector<double> hist_row;
  for_each_similarity_row(bank, [&](std::size_t i, std::span<const double> row) {
    NeighborRecord& rec = report.records[i];
    rec.index = i;
    rec.defined = bank.defined(i);
    rec.n_tau.assign(config.taus.size(), 0);
    rec.n_alpha.assign(config.alphas.size(), 0.0);
    hist_row.clear();
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double s = row[j];
      if (j != i || config.histogram_include_self) {
        hist_row.push_back(s);
      }
      if (j == i && !config.include_self) {
        continue;
      }
      rec.n_soft += s;
      for (std::size_t t = 0; t < config.taus.size(); ++t) {
        rec.n_tau[t] += s >= config.taus[t] ? 1 : 0;
      }
      if (s > 0.0) {
        for (std::size_t a = 0; a < config.alphas.size(); ++a) {
          rec.n_alpha[a] += std::pow(s, config.alphas[a]);
        }
      }
    }
    rec.histogram = make_histogram(hist_row, config.bins);
    rec.histogram.include_self = config.histogram_include_self;
    if (k > 0) {
      rec.nearest = nearest_from_row(i, row, k);
    }
    if (!unc.empty()) {
      rec.uncertainty = unc[i].value;
    }
  });
  return report;
}

namespace {

nlohmann::json number_or_null(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) {
    return nullptr;
  }
  return *v;
}

} // namespace

std::string neighbor_report_json(const NeighborReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["output_dim"] = report.output_dim;
  j["taus"] = report.config.taus;
  j["alphas"] = report.config.alphas;
  j["bins"] = report.config.bins;
  j["include_self"] = report.config.include_self;
  j["histogram_include_self"] = report.config.histogram_include_self;
  j["excluded"] = report.excluded;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json s;
    s["index"] = r.index;
    s["defined"] = r.defined;
    s["N_S"] = r.n_soft;
    s["N_tau"] = r.n_tau;
    s["N_alpha"] = r.n_alpha;
    s["uncertainty"] = number_or_null(r.uncertainty);
    s["histogram"] = {{"edges", r.histogram.edges}, {"counts", r.histogram.counts}};
    nlohmann::json nn = nlohmann::json::array();
    for (const auto& nb : r.nearest) {
      nn.push_back({{"index", nb.index}, {"similarity", nb.similarity}});
    }
    s["nearest"] = std::move(nn);
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  return j.dump(1);
}

void write_neighbor_csv(const NeighborReport& report, std::ostream& os) {
  CsvWriter csv(os);
  std::vector<std::string> header = {"index", "N_S"};
  for (double t : report.config.taus) {
    header.push_back(tau_label(t));
  }
  for (double a : report.config.alphas) {
    header.push_back(alpha_label(a));
  }
  header.push_back("uncertainty");
  csv.row(header);
  for (const auto& r : report.records) {
    std::vector<std::string> row = {std::to_string(r.index), format_double(r.n_soft)};
    for (std::size_t c : r.n_tau) {
      row.push_back(std::to_string(c));
    }
    for (double v : r.n_alpha) {
      row.push_back(format_double(v));
    }
    row.push_back(r.uncertainty ? format_double(*r.uncertainty) : "");
    csv.row(row);
  }
}

double median(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("median of an empty set");
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

} // namespace gradsim
