#include "gradsim/idx.hpp"

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

namespace gradsim {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("idx: cannot open " + path.string());
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError("idx: " + path.string() + " truncated at byte " + std::to_string(bytes.size()) +
                      ", expected a header field at byte " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%08x (expected 0x%08x)", got, want);
    throw FormatError("idx: bad magic " + std::string(buf) + " at byte 0 of " + path.string());
  }
}

void check_payload(const std::vector<std::uint8_t>& bytes, std::size_t header, std::size_t payload,
                   const std::filesystem::path& path) {
  if (bytes.size() < header + payload) {
    throw FormatError("idx: " + path.string() + " truncated at byte " + std::to_string(bytes.size()) +
                      ", expected " + std::to_string(header + payload) + " bytes");
  }
  if (bytes.size() > header + payload) {
    throw FormatError("idx: " + path.string() + " has trailing data from byte " + std::to_string(header + payload));
  }
}

void put32(std::ofstream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

} // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  check_magic(be32(bytes, 0, path), kImageMagic, path);
  IdxImages img;
  img.count = be32(bytes, 4, path);
  img.rows = be32(bytes, 8, path);
  img.cols = be32(bytes, 12, path);
  const std::size_t payload = img.count * img.rows * img.cols;
  check_payload(bytes, 16, payload, path);
  img.pixels.assign(bytes.begin() + 16, bytes.end());
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  check_magic(be32(bytes, 0, path), kLabelMagic, path);
  const std::size_t count = be32(bytes, 4, path);
  check_payload(bytes, 8, count, path);
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= kIdxClasses) {
      throw FormatError("idx: label " + std::to_string(labels[k]) + " out of range 0..9 at byte " +
                        std::to_string(8 + k) + " of " + path.string());
    }
  }
  return labels;
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw ShapeError("idx: pixel buffer does not match count x rows x cols");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  put32(os, kImageMagic);
  put32(os, static_cast<std::uint32_t>(images.count));
  put32(os, static_cast<std::uint32_t>(images.rows));
  put32(os, static_cast<std::uint32_t>(images.cols));
  os.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
  if (!os) {
    throw FormatError("idx: cannot write " + path.string());
  }
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  put32(os, kLabelMagic);
  put32(os, static_cast<std::uint32_t>(labels.size()));
  os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!os) {
    throw FormatError("idx: cannot write " + path.string());
  }
}

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const IdxSubset& subset) {
  const IdxImages img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != img.count) {
    throw FormatError("idx: " + std::to_string(img.count) + " images but " + std::to_string(lab.size()) + " labels");
  }
  if (subset.count && *subset.count > img.count) {
    throw std::invalid_argument("idx: subset of " + std::to_string(*subset.count) + " requested from " +
                                std::to_string(img.count) + " samples");
  }
  std::vector<std::size_t> keep(img.count);
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (subset.count && *subset.count < img.count) {
    CounterRng rng(subset.seed, "idx-subset");
    rng.shuffle(std::span<std::size_t>(keep));
    keep.resize(*subset.count);
    std::sort(keep.begin(), keep.end());
  }
  const std::size_t dim = img.rows * img.cols;
  Dataset data;
  data.samples.reserve(keep.size());
  for (std::size_t k : keep) {
    Sample s;
    s.input.resize(dim);
    for (std::size_t q = 0; q < dim; ++q) {
      s.input[q] = static_cast<double>(img.pixels[k * dim + q]) / 255.0;
    }
    s.label.assign(kIdxClasses, 0.0);
    s.label[lab[k]] = 1.0;
    data.samples.push_back(std::move(s));
  }
  data.provenance = {{"source", images.filename().string()},
                     {"labels", labels.filename().string()},
                     {"total", std::to_string(img.count)},
                     {"kept", std::to_string(keep.size())},
                     {"subset_seed", std::to_string(subset.seed)}};
  return data;
}

} // namespace gradsim
