#include "modeldx/sparse_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "modeldx/hashing.hpp"

namespace modeldx {

DataError::DataError(const std::string& what, std::size_t line)
    : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
      line_(line) {}

bool is_canonical(FeatureView set) noexcept {
  return std::adjacent_find(set.begin(), set.end(),
                            [](FeatureIndex a, FeatureIndex b) { return a >= b; }) == set.end();
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      parts.push_back(s.substr(pos));
      return parts;
    }
    parts.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

bool parse_label(std::string_view token, std::size_t line_no) {
  if (token == "1") return true;
  if (token == "0") return false;
  throw DataError("label must be 0 or 1, got '" + std::string(token) + "'", line_no);
}

}  // namespace

SparseDataset::SparseDataset(std::vector<Feature> features, std::vector<Item> items)
    : features_(std::move(features)), items_(std::move(items)), splits_(items_.size(), Split::train) {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    auto& f = features_[i];
    if (f.index != i) throw DataError("feature indices must be dense 0..F-1 in order");
    f.name = std::string(trim(f.name));
    if (f.name.empty()) throw DataError("feature " + std::to_string(i) + " has an empty name");
    if (!by_name_.emplace(f.name, f.index).second)
      throw DataError("duplicate feature name '" + f.name + "'");
  }
  by_id_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    if (!by_id_.emplace(item.id, i).second)
      throw DataError("duplicate item id " + std::to_string(item.id));
    if (!is_canonical(item.active))
      throw DataError("item " + std::to_string(item.id) + " active set is not sorted and unique");
    if (!item.active.empty() && item.active.back() >= features_.size())
      throw DataError("item " + std::to_string(item.id) + " references feature " +
                      std::to_string(item.active.back()) + " out of range");
  }
}

const Item* SparseDataset::find(ItemId id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

std::optional<FeatureIndex> SparseDataset::feature_by_name(std::string_view name) const {
  auto it = by_name_.find(std::string(trim(name)));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> SparseDataset::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (splits_[i] == split) out.push_back(i);
  return out;
}

double SparseDataset::positive_rate(Split split) const {
  std::size_t n = 0, pos = 0;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (splits_[i] != split) continue;
    ++n;
    pos += items_[i].label ? 1 : 0;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(pos) / n;
}

double SparseDataset::positive_rate() const {
  if (items_.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pos = std::count_if(items_.begin(), items_.end(), [](const Item& i) { return i.label; });
  return static_cast<double>(pos) / items_.size();
}

SparseDataset SparseDataset::with_splits(std::vector<Split> splits) const {
  if (splits.size() != items_.size()) throw DataError("split vector size does not match item count");
  SparseDataset copy = *this;
  copy.splits_ = std::move(splits);
  return copy;
}

SparseDataset parse_sparse_text(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("empty input", 1);

  const auto header = split_on(lines[0], ' ');
  if (header.size() != 2 || header[0] != "#features")
    throw DataError("expected '#features <F>'", 1);
  const auto count = parse_number<std::size_t>(header[1]);
  if (!count) throw DataError("bad feature count '" + std::string(header[1]) + "'", 1);
  if (lines.size() < 1 + *count) throw DataError("truncated feature header", lines.size());

  std::vector<std::optional<std::string>> names(*count);
  for (std::size_t i = 0; i < *count; ++i) {
    const auto line_no = i + 2;
    const auto line = lines[i + 1];
    if (line.substr(0, 3) != "#f ") throw DataError("expected '#f <index> <name>'", line_no);
    const auto rest = line.substr(3);
    const auto space = rest.find(' ');
    if (space == std::string_view::npos) throw DataError("feature line without a name", line_no);
    const auto index = parse_number<std::size_t>(rest.substr(0, space));
    if (!index) throw DataError("bad feature index", line_no);
    if (*index >= *count) throw DataError("feature index " + std::to_string(*index) + " out of range", line_no);
    if (names[*index]) throw DataError("feature index " + std::to_string(*index) + " declared twice", line_no);
    names[*index] = std::string(trim(rest.substr(space + 1)));
  }
  std::vector<Feature> features;
  features.reserve(*count);
  for (std::size_t i = 0; i < *count; ++i)
    features.push_back({static_cast<FeatureIndex>(i), std::move(*names[i])});

  std::vector<Item> items;
  for (std::size_t li = 1 + *count; li < lines.size(); ++li) {
    const auto line_no = li + 1;
    const auto line = lines[li];
    if (line.empty()) {
      if (li + 1 == lines.size()) break;
      throw DataError("blank item line", line_no);
    }
    const auto tokens = split_on(line, ' ');
    Item item;
    item.id = static_cast<ItemId>(items.size());
    item.label = parse_label(tokens[0], line_no);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto tok = tokens[t];
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos || tok.substr(colon + 1) != "1")
        throw DataError("expected '<index>:1', got '" + std::string(tok) + "'", line_no);
      const auto index = parse_number<FeatureIndex>(tok.substr(0, colon));
      if (!index) throw DataError("bad feature index in '" + std::string(tok) + "'", line_no);
      if (*index >= *count)
        throw DataError("feature index " + std::to_string(*index) + " out of range", line_no);
      if (!item.active.empty() && *index <= item.active.back())
        throw DataError("feature indices must be strictly ascending", line_no);
      item.active.push_back(*index);
    }
    items.push_back(std::move(item));
  }
  return SparseDataset(std::move(features), std::move(items));
}

SparseDataset parse_dense_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("empty input", 1);
  const auto header = split_on(lines[0], ',');
  if (trim(header[0]) != "label") throw DataError("first column must be 'label'", 1);

  std::vector<Feature> features;
  for (std::size_t c = 1; c < header.size(); ++c)
    features.push_back({static_cast<FeatureIndex>(c - 1), std::string(trim(header[c]))});

  std::vector<Item> items;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto line_no = li + 1;
    if (lines[li].empty()) {
      if (li + 1 == lines.size()) break;
      throw DataError("blank row", line_no);
    }
    const auto cells = split_on(lines[li], ',');
    if (cells.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " cells, got " +
                          std::to_string(cells.size()), line_no);
    Item item;
    item.id = static_cast<ItemId>(items.size());
    item.label = parse_label(trim(cells[0]), line_no);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto cell = trim(cells[c]);
      if (cell == "1") {
        item.active.push_back(static_cast<FeatureIndex>(c - 1));
      } else if (cell != "0") {
        throw DataError("cell must be 0 or 1, got '" + std::string(cell) + "'", line_no);
      }
    }
    items.push_back(std::move(item));
  }
  return SparseDataset(std::move(features), std::move(items));
}

SparseDataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  return format == DataFormat::sparse_text ? parse_sparse_text(text) : parse_dense_csv(text);
}

DataFormat parse_format(std::string_view name) {
  if (name == "sparse") return DataFormat::sparse_text;
  if (name == "csv") return DataFormat::dense_csv;
  throw DataError("unknown data format '" + std::string(name) + "' (expected sparse|csv)");
}

std::string serialize(const SparseDataset& dataset) {
  std::string out = "#features " + std::to_string(dataset.num_features()) + "\n";
  for (const auto& f : dataset.features())
    out += "#f " + std::to_string(f.index) + " " + f.name + "\n";
  for (const auto& item : dataset.items()) {
    out += item.label ? '1' : '0';
    for (auto f : item.active) {
      out += ' ';
      out += std::to_string(f);
      out += ":1";
    }
    out += '\n';
  }
  return out;
}

std::string dataset_hash(const SparseDataset& dataset) { return hex64(fnv1a64(serialize(dataset))); }

SparseDataset split_dataset(const SparseDataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  const auto n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Split> splits(n, Split::test);
  for (std::size_t i = 0; i < n_train; ++i) splits[order[i]] = Split::train;
  return dataset.with_splits(std::move(splits));
}

}  // namespace modeldx
