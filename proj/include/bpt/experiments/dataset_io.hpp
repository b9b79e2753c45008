#pragma once

#include <cstddef>
#include <filesystem>

#include "bpt/common/error.hpp"
#include "bpt/nn/dataset.hpp"

namespace bpt::experiments {

enum class DatasetErrorKind {
  io,
  bad_magic,
  truncated,
  count_mismatch,
  ragged_row,
  non_numeric,
  label_out_of_range,
};

class DatasetError : public ValidationError {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

 private:
  DatasetErrorKind kind_;
};

/// IDX images (magic 0x00000803, u8 pixels) and labels (0x00000801), big-endian
/// headers. Pixels are scaled by 1/255 into (1, H, W) tensors. `classes` = 0
/// infers max label + 1; `limit` = 0 reads every item.
nn::Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                             std::size_t classes = 0, std::size_t limit = 0);

/// Writes pixels as round(255 * v) clamped to [0, 255]; inputs must be single-channel.
void save_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                      const nn::Dataset& data);

struct CsvLayout {
  std::size_t height = 28;
  std::size_t width = 28;
  /// Column holding the class index; negative counts from the end.
  long label_column = -1;
  std::size_t classes = 0;
};

/// Rectangular numeric CSV, one sample per row. A first row that does not
/// parse as numbers is taken as a header and skipped.
nn::Dataset load_csv_dataset(const std::filesystem::path& path, const CsvLayout& layout);

/// Writes features then the label in the last column, reals in shortest
/// round-trip form, with a header row.
void save_csv_dataset(const std::filesystem::path& path, const nn::Dataset& data);

}  // namespace bpt::experiments
