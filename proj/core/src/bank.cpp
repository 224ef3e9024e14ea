#include "gradsim/bank.hpp"

#include "gradsim/error.hpp"
#include "gradsim/parallel.hpp"
#include "gradsim/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace gradsim {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'S', 'B', 'A', 'N', 'K', '\0', '\1'};
constexpr std::uint64_t kVersion = 1;
constexpr std::size_t kBlock = 64;

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace

std::vector<double> deterministic_sum(std::size_t n, std::size_t p, std::size_t threads,
                                      const std::function<void(std::size_t, std::span<double>)>& add_sample) {
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  if (blocks == 0) {
    return std::vector<double>(p, 0.0);
  }
  std::vector<double> partial(blocks * p, 0.0);
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::span<double> acc(partial.data() + b * p, p);
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      add_sample(i, acc);
    }
  });
  for (std::size_t stride = 1; stride < blocks; stride *= 2) {
    const std::size_t pairs = (blocks + 2 * stride - 1) / (2 * stride);
    parallel_for(pairs, threads, [&](std::size_t k) {
      const std::size_t left = 2 * k * stride;
      const std::size_t right = left + stride;
      if (right >= blocks) {
        return;
      }
      double* a = partial.data() + left * p;
      const double* b = partial.data() + right * p;
      for (std::size_t q = 0; q < p; ++q) {
        a[q] += b[q];
      }
    });
  }
  partial.resize(p);
  return partial;
}

GradientBank GradientBank::from_gradients(std::span<const GradientMatrix> gradients, std::size_t threads) {
  GradientBank bank;
  bank.threads_ = std::max<std::size_t>(1, threads);
  bank.n_ = gradients.size();
  if (bank.n_ == 0) {
    return bank;
  }
  bank.d_ = gradients[0].rows();
  bank.p_ = gradients[0].cols();
  if (bank.d_ == 0 || bank.p_ == 0) {
    throw ShapeError("gradient bank: empty gradient matrix");
  }
  for (const auto& g : gradients) {
    if (g.rows() != bank.d_ || g.cols() != bank.p_) {
      throw ShapeError("gradient bank: all gradients must share d and p");
    }
  }
  const std::size_t n = bank.n_, d = bank.d_, p = bank.p_;
  bank.unit_.assign(n * d * p, 0.0);
  bank.norms_.assign(n * d, 0.0);
  bank.self_.assign(n * d * d, 0.0);
  bank.self_sqrt_.assign(n * d * d, 0.0);
  bank.defined_.assign(n, 0);

  parallel_for(n, bank.threads_, [&](std::size_t i) {
    const GradientMatrix& g = gradients[i];
    double* unit = bank.unit_.data() + i * d * p;
    for (std::size_t r = 0; r < d; ++r) {
      bank.norms_[i * d + r] = g.norm(r);
    }
    if (d == 1) {
      const double nrm = g.norm(0);
      bank.self_[i] = nrm * nrm;
      bank.self_sqrt_[i] = nrm;
      if (nrm > 0.0 && std::isfinite(nrm)) {
        const auto row = g.row(0);
        for (std::size_t q = 0; q < p; ++q) {
          unit[q] = row[q] / nrm;
        }
        bank.defined_[i] = 1;
      }
      return;
    }
    const KernelMatrix self = kernel_matrix(g, g);
    std::copy(self.values().begin(), self.values().end(), bank.self_.begin() + i * d * d);
    const InverseSqrt w = inverse_sqrt_psd(self);
    std::copy(w.sqrt.values().begin(), w.sqrt.values().end(), bank.self_sqrt_.begin() + i * d * d);
    if (!w.inv_sqrt || w.floored) {
      return;
    }
    for (std::size_t a = 0; a < d; ++a) {
      double* out = unit + a * p;
      for (std::size_t b = 0; b < d; ++b) {
        const double c = (*w.inv_sqrt)(a, b);
        const auto row = g.row(b);
        for (std::size_t q = 0; q < p; ++q) {
          out[q] += c * row[q];
        }
      }
    }
    bank.defined_[i] = 1;
  });
  return bank;
}

GradientBank GradientBank::build(const NetworkSpec& spec, const ParamVector& params, const Dataset& dataset,
                                 const BankOptions& options) {
  params.check_matches(spec);
  dataset.validate(spec.input_dim(), spec.output_dim());
  const std::size_t threads = resolve_threads(options.threads);
  if (options.output && *options.output >= spec.output_dim()) {
    throw ShapeError("gradient bank: output coordinate out of range");
  }
  if (options.adversary_seed && !options.binarize_by_label) {
    throw std::invalid_argument("gradient bank: adversary sampling requires binarize_by_label");
  }
  if (options.adversary_seed && spec.output_dim() < 2) {
    throw ShapeError("gradient bank: adversary sampling needs at least two classes");
  }
  std::vector<GradientMatrix> grads(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const Sample& s = dataset.samples[i];
    GradientMatrix g = per_sample_gradient(spec, params, s.input);
    if (options.binarize_by_label) {
      const std::size_t right = argmax(s.label);
      std::optional<std::size_t> adversary;
      if (options.adversary_seed) {
        CounterRng rng(*options.adversary_seed, "adversary");
        const std::size_t draw = static_cast<std::size_t>(rng.at(i) % (spec.output_dim() - 1));
        adversary = draw >= right ? draw + 1 : draw;
      }
      g = binarize_classification_gradient(g, right, adversary);
    } else if (options.output) {
      g = GradientMatrix::from_row(std::vector<double>(g.row(*options.output).begin(), g.row(*options.output).end()));
    }
    grads[i] = std::move(g);
  });
  return from_gradients(grads, threads);
}

bool operator==(const GradientBank& a, const GradientBank& b) {
  return a.n_ == b.n_ && a.d_ == b.d_ && a.p_ == b.p_ && a.unit_ == b.unit_ && a.norms_ == b.norms_ &&
         a.self_ == b.self_ && a.self_sqrt_ == b.self_sqrt_ && a.defined_ == b.defined_;
}

std::vector<std::size_t> GradientBank::excluded() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n_; ++i) {
    if (!defined_[i]) {
      out.push_back(i);
    }
  }
  return out;
}

KernelMatrix GradientBank::self_kernel(std::size_t i) const {
  return KernelMatrix(d_, std::vector<double>(self_.begin() + i * d_ * d_, self_.begin() + (i + 1) * d_ * d_));
}

KernelMatrix GradientBank::self_kernel_sqrt(std::size_t i) const {
  return KernelMatrix(d_,
                      std::vector<double>(self_sqrt_.begin() + i * d_ * d_, self_sqrt_.begin() + (i + 1) * d_ * d_));
}

double GradientBank::similarity(std::size_t i, std::size_t j) const {
  if (!defined_[i] || !defined_[j]) {
    return 0.0;
  }
  if (i == j) {
    return 1.0;
  }
  double s = 0.0;
  for (std::size_t r = 0; r < d_; ++r) {
    s += dot(unit(i, r), unit(j, r));
  }
  return std::clamp(s / static_cast<double>(d_), -1.0, 1.0);
}

SimilarityValue GradientBank::similarity_value(std::size_t i, std::size_t j) const {
  SimilarityValue v;
  v.kind = d_ == 1 ? SimilarityKind::correlation : SimilarityKind::trace;
  if (defined_[i] && defined_[j]) {
    v.value = similarity(i, j);
  }
  return v;
}

std::optional<KernelMatrix> GradientBank::normalized_kernel(std::size_t i, std::size_t j) const {
  if (!defined_[i] || !defined_[j]) {
    return std::nullopt;
  }
  if (i == j) {
    return KernelMatrix::identity(d_);
  }
  std::vector<double> v(d_ * d_);
  for (std::size_t a = 0; a < d_; ++a) {
    for (std::size_t b = 0; b < d_; ++b) {
      v[a * d_ + b] = dot(unit(i, a), unit(j, b));
    }
  }
  return KernelMatrix(d_, std::move(v), KernelKind::normalized);
}

KernelMatrix GradientBank::raw_kernel(std::size_t i, std::size_t j) const {
  std::vector<double> out(d_ * d_, 0.0);
  if (i == j) {
    return self_kernel(i);
  }
  const auto kc = normalized_kernel(i, j);
  if (!kc) {
    return KernelMatrix(d_, std::move(out));
  }
  const KernelMatrix si = self_kernel_sqrt(i);
  const KernelMatrix sj = self_kernel_sqrt(j);
  for (std::size_t a = 0; a < d_; ++a) {
    for (std::size_t b = 0; b < d_; ++b) {
      double s = 0.0;
      for (std::size_t c = 0; c < d_; ++c) {
        for (std::size_t e = 0; e < d_; ++e) {
          s += si(a, c) * (*kc)(c, e) * sj(e, b);
        }
      }
      out[a * d_ + b] = s;
    }
  }
  return KernelMatrix(d_, std::move(out));
}

void GradientBank::require_single_output(const char* what) const {
  if (d_ != 1) {
    throw ShapeError(std::string(what) + ": requires a single-output bank");
  }
}

double GradientBank::inner(std::size_t i, std::size_t j) const {
  require_single_output("inner");
  if (i == j) {
    return self_[i];
  }
  if (!defined_[i] || !defined_[j]) {
    return 0.0;
  }
  return norms_[i] * norms_[j] * dot(unit(i), unit(j));
}

void GradientBank::similarity_row(std::size_t i, std::span<double> out) const {
  if (out.size() != n_) {
    throw ShapeError("similarity_row: output length must equal bank size");
  }
  for (std::size_t j = 0; j < n_; ++j) {
    out[j] = similarity(i, j);
  }
}

namespace {

template <class T> void put(std::ofstream& os, const T& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(T)); }

void put_doubles(std::ofstream& os, const double* v, std::size_t count) {
  os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(count * sizeof(double)));
}

class Reader {
public:
  Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) {
      throw FormatError("gradient bank: cannot open " + path_);
    }
  }
  template <class T> T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }
  void read(void* dst, std::size_t bytes) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) {
      throw FormatError("gradient bank: truncated file " + path_ + " at byte " + std::to_string(offset_));
    }
    offset_ += bytes;
  }
  void seek(std::uint64_t offset) {
    in_.seekg(static_cast<std::streamoff>(offset));
    if (!in_) {
      throw FormatError("gradient bank: bad record offset " + std::to_string(offset) + " in " + path_);
    }
    offset_ = offset;
  }
  std::uint64_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

private:
  std::ifstream in_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

} // namespace

void GradientBank::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw FormatError("gradient bank: cannot write " + path.string());
  }
  os.write(kMagic.data(), kMagic.size());
  put<std::uint64_t>(os, kVersion);
  put<std::uint64_t>(os, n_);
  put<std::uint64_t>(os, d_);
  put<std::uint64_t>(os, p_);
  const std::uint64_t header = kMagic.size() + 4 * sizeof(std::uint64_t);
  const std::uint64_t index = n_ * 2 * sizeof(std::uint64_t);
  const std::uint64_t record = (d_ + 2 * d_ * d_ + d_ * p_) * sizeof(double);
  for (std::size_t i = 0; i < n_; ++i) {
    put<std::uint64_t>(os, header + index + i * record);
    put<std::uint64_t>(os, defined_[i]);
  }
  for (std::size_t i = 0; i < n_; ++i) {
    put_doubles(os, norms_.data() + i * d_, d_);
    put_doubles(os, self_.data() + i * d_ * d_, d_ * d_);
    put_doubles(os, self_sqrt_.data() + i * d_ * d_, d_ * d_);
    put_doubles(os, unit_.data() + i * d_ * p_, d_ * p_);
  }
  if (!os) {
    throw FormatError("gradient bank: write failed for " + path.string());
  }
}

GradientBank GradientBank::load(const std::filesystem::path& path) {
  Reader in(path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kMagic) {
    throw FormatError("gradient bank: bad magic in " + in.path() + " at byte 0");
  }
  const auto version = in.get<std::uint64_t>();
  if (version != kVersion) {
    throw FormatError("gradient bank: unsupported version " + std::to_string(version));
  }
  GradientBank bank;
  bank.n_ = in.get<std::uint64_t>();
  bank.d_ = in.get<std::uint64_t>();
  bank.p_ = in.get<std::uint64_t>();
  const std::uint64_t file_size = std::filesystem::file_size(path);
  const std::uint64_t record = (bank.d_ + 2 * bank.d_ * bank.d_ + bank.d_ * bank.p_) * sizeof(double);
  if (bank.n_ > 0 && (bank.d_ == 0 || bank.p_ == 0)) {
    throw FormatError("gradient bank: zero dimension in header of " + in.path());
  }
  if (bank.n_ > file_size / (2 * sizeof(std::uint64_t) + record) + 1) {
    throw FormatError("gradient bank: header sample count exceeds file size in " + in.path());
  }
  std::vector<std::uint64_t> offsets(bank.n_);
  bank.defined_.assign(bank.n_, 0);
  for (std::size_t i = 0; i < bank.n_; ++i) {
    offsets[i] = in.get<std::uint64_t>();
    const auto flags = in.get<std::uint64_t>();
    if (flags > 1) {
      throw FormatError("gradient bank: bad flags at byte " + std::to_string(in.offset() - 8));
    }
    bank.defined_[i] = static_cast<unsigned char>(flags);
    if (offsets[i] + record > file_size) {
      throw FormatError("gradient bank: record " + std::to_string(i) + " runs past end of file");
    }
  }
  const std::size_t n = bank.n_, d = bank.d_, p = bank.p_;
  bank.norms_.resize(n * d);
  bank.self_.resize(n * d * d);
  bank.self_sqrt_.resize(n * d * d);
  bank.unit_.resize(n * d * p);
  for (std::size_t i = 0; i < n; ++i) {
    in.seek(offsets[i]);
    in.read(bank.norms_.data() + i * d, d * sizeof(double));
    in.read(bank.self_.data() + i * d * d, d * d * sizeof(double));
    in.read(bank.self_sqrt_.data() + i * d * d, d * d * sizeof(double));
    in.read(bank.unit_.data() + i * d * p, d * p * sizeof(double));
  }
  return bank;
}

} // namespace gradsim
