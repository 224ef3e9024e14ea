#pragma once

#include "gradsim/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace gradsim {

/// Raw contents of an IDX image file (magic 0x00000803).
struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels; ///< count * rows * cols, row-major
};

IdxImages read_idx_images(const std::filesystem::path& path);
/// Labels file (magic 0x00000801); every label must lie in 0..9.
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

struct IdxSubset {
  std::optional<std::size_t> count; ///< keep this many samples, drawn by seed
  std::uint64_t seed = 0;
};

/// Images scaled to [0, 1] as inputs, one-hot labels over 10 classes. A subset
/// is drawn without replacement from stream "idx-subset" and kept in file
/// order.
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const IdxSubset& subset = {});

inline constexpr std::size_t kIdxClasses = 10;

} // namespace gradsim
