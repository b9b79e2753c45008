#include "bpt/experiments/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace bpt::experiments {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(b, 4);
}

void check_header(const std::vector<std::uint8_t>& bytes, std::size_t header, std::uint32_t magic,
                  const std::filesystem::path& path) {
  if (bytes.size() < 4) {
    throw DatasetError(DatasetErrorKind::truncated, path.string() + ": truncated IDX header");
  }
  if (be32(bytes, 0) != magic) {
    std::ostringstream msg;
    msg << path.string() << ": bad IDX magic 0x" << std::hex << be32(bytes, 0) << ", expected 0x"
        << magic;
    throw DatasetError(DatasetErrorKind::bad_magic, msg.str());
  }
  if (bytes.size() < header) {
    throw DatasetError(DatasetErrorKind::truncated, path.string() + ": truncated IDX header");
  }
}

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_number(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* end = cell.data() + cell.size();
  const auto r = std::from_chars(cell.data(), end, out);
  return r.ec == std::errc() && r.ptr == end && std::isfinite(out);
}

std::size_t check_labels(const nn::Dataset& d, std::size_t classes, const std::string& where) {
  std::size_t top = 0;
  for (const auto& s : d.samples) top = std::max<std::size_t>(top, s.label + 1);
  if (classes == 0) return top;
  for (std::size_t k = 0; k < d.samples.size(); ++k) {
    if (d.samples[k].label >= classes) {
      throw DatasetError(DatasetErrorKind::label_out_of_range,
                         where + ": label " + std::to_string(d.samples[k].label) + " of item " +
                             std::to_string(k) + " is out of range for " + std::to_string(classes) +
                             " classes");
    }
  }
  return classes;
}

}  // namespace

nn::Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                             std::size_t classes, std::size_t limit) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  check_header(img, 16, 0x00000803, images);
  check_header(lab, 8, 0x00000801, labels);
  const std::size_t n = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  const std::size_t nl = be32(lab, 4);
  if (n != nl) {
    throw DatasetError(DatasetErrorKind::count_mismatch, images.string() + " holds " + std::to_string(n) +
                                                             " images but " + labels.string() + " holds " +
                                                             std::to_string(nl) + " labels");
  }
  const std::size_t pixels = rows * cols;
  if (img.size() - 16 < n * pixels) {
    throw DatasetError(DatasetErrorKind::truncated, images.string() + ": truncated pixel data");
  }
  if (lab.size() - 8 < n) throw DatasetError(DatasetErrorKind::truncated, labels.string() + ": truncated label data");

  const std::size_t take = limit ? std::min(limit, n) : n;
  nn::Dataset d;
  d.samples.reserve(take);
  for (std::size_t k = 0; k < take; ++k) {
    nn::Sample s{nn::Tensor3(nn::Shape3{1, rows, cols}), lab[8 + k]};
    const std::uint8_t* p = img.data() + 16 + k * pixels;
    for (std::size_t q = 0; q < pixels; ++q) s.x[q] = static_cast<double>(p[q]) / 255.0;
    d.samples.push_back(std::move(s));
  }
  d.classes = check_labels(d, classes, labels.string());
  d.provenance = {images.string(), labels.string()};
  return d;
}

void save_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                      const nn::Dataset& data) {
  nn::Shape3 shape{1, 0, 0};
  if (!data.empty()) shape = data.samples.front().x.shape();
  if (shape.depth != 1) throw ValidationError("IDX images must be single-channel");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw DatasetError(DatasetErrorKind::io, "cannot write " + images.string());
  put_be32(img, 0x00000803);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(shape.height));
  put_be32(img, static_cast<std::uint32_t>(shape.width));
  put_be32(lab, 0x00000801);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (const auto& s : data.samples) {
    if (s.x.shape() != shape) throw ShapeError("samples have different shapes");
    if (s.label > 255) throw ValidationError("IDX labels must fit in one byte");
    for (double v : s.x.values()) {
      img.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    lab.put(static_cast<char>(s.label));
  }
}

nn::Dataset load_csv_dataset(const std::filesystem::path& path, const CsvLayout& layout) {
  std::ifstream in(path);
  if (!in) throw DatasetError(DatasetErrorKind::io, "cannot open " + path.string());
  const std::size_t features = layout.height * layout.width;
  if (features == 0) throw ValidationError("CSV layout needs a positive height and width");
  nn::Dataset d;
  std::string line;
  std::size_t lineno = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    std::size_t bad = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (!parse_number(cells[c], values[c])) {
        numeric = false;
        bad = c;
        break;
      }
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!numeric) {
      if (columns == 0 && d.empty()) {
        columns = cells.size();  // header
        continue;
      }
      throw DatasetError(DatasetErrorKind::non_numeric,
                         where + ": cell " + std::to_string(bad + 1) + " '" + cells[bad] + "' is not a number");
    }
    if (columns == 0) columns = cells.size();
    if (cells.size() != columns) {
      throw DatasetError(DatasetErrorKind::ragged_row, where + ": row has " + std::to_string(cells.size()) +
                                                           " cells, expected " + std::to_string(columns));
    }
    if (columns != features + 1) {
      throw DatasetError(DatasetErrorKind::ragged_row,
                         where + ": rows need " + std::to_string(features) + " features plus a label");
    }
    const long lc = layout.label_column < 0 ? static_cast<long>(columns) + layout.label_column
                                            : layout.label_column;
    if (lc < 0 || lc >= static_cast<long>(columns)) throw ValidationError("label column out of range");
    const double label = values[static_cast<std::size_t>(lc)];
    if (label < 0 || label != std::floor(label) || label > 4294967295.0 ||
        (layout.classes && label >= static_cast<double>(layout.classes))) {
      throw DatasetError(DatasetErrorKind::label_out_of_range,
                         where + ": label " + cells[static_cast<std::size_t>(lc)] + " is not a valid class index");
    }
    nn::Sample s{nn::Tensor3(nn::Shape3{1, layout.height, layout.width}), static_cast<std::uint32_t>(label)};
    std::size_t q = 0;
    for (std::size_t c = 0; c < columns; ++c) {
      if (static_cast<long>(c) != lc) s.x[q++] = values[c];
    }
    d.samples.push_back(std::move(s));
  }
  d.classes = check_labels(d, layout.classes, path.string());
  d.provenance = {path.string()};
  return d;
}

void save_csv_dataset(const std::filesystem::path& path, const nn::Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DatasetError(DatasetErrorKind::io, "cannot write " + path.string());
  const std::size_t features = data.empty() ? 0 : data.samples.front().x.size();
  for (std::size_t k = 0; k < features; ++k) out << 'f' << k << ',';
  out << "label\n";
  for (const auto& s : data.samples) {
    if (s.x.size() != features) throw ShapeError("samples have different shapes");
    for (double v : s.x.values()) out << shortest(v) << ',';
    out << s.label << '\n';
  }
}

}  // namespace bpt::experiments
