#pragma once

// Interaction-data ingestion: delimited triplet parsing, identifier
// remapping, the dual row/column compressed store, and train/test splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "poisfact/errors.hpp"

namespace poisfact {

using index_t = std::uint32_t;

/// One parsed input line: external user and item tokens plus a positive count.
struct RawTriplet {
  std::string user_id;
  std::string item_id;
  double count = 0.0;

  bool operator==(const RawTriplet&) const = default;
};

/// A stored entry in internal index space.
struct Entry {
  index_t user = 0;
  index_t item = 0;
  double value = 0.0;

  bool operator==(const Entry&) const = default;
};

namespace detail {

inline std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_real(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_real(std::string_view s) {
  while (!s.empty() && (s.front() == ' ')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads `user<delim>item<delim>count` lines. Extra columns are ignored and
/// blank lines skipped. Duplicate pairs are kept as separate triplets.
inline std::vector<RawTriplet> parse_triplets(std::istream& source, char delimiter = ',',
                                              bool has_header = false) {
  std::vector<RawTriplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(source, line)) {
    ++lineno;
    if (has_header && lineno == 1) continue;
    std::string_view view = detail::trim_cr(line);
    if (view.empty()) continue;

    auto fields = detail::split_fields(view, delimiter);
    if (fields.size() < 3) throw ParseError(lineno, "expected at least 3 columns");
    if (fields[0].empty()) throw ParseError(lineno, "empty user id");
    if (fields[1].empty()) throw ParseError(lineno, "empty item id");

    auto count = detail::parse_real(fields[2]);
    if (!count) throw ValueError(lineno, "non-numeric count '" + std::string(fields[2]) + "'");
    if (!std::isfinite(*count)) throw ValueError(lineno, "non-finite count");
    if (*count < 0.0) throw ValueError(lineno, "negative count");
    if (*count == 0.0) throw ValueError(lineno, "zero count (zeros are implicit)");

    out.push_back({std::string(fields[0]), std::string(fields[1]), *count});
  }
  if (source.bad()) throw IoError("read failure on triplet stream");
  return out;
}

/// Bijection between external tokens and contiguous indices [0, size()).
class IdTable {
 public:
  index_t intern(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    auto idx = static_cast<index_t>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), idx);
    return idx;
  }

  std::optional<index_t> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& token(index_t idx) const { return tokens_.at(idx); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool operator==(const IdTable& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, index_t> index_;
};

struct IdMap {
  IdTable users;
  IdTable items;

  bool operator==(const IdMap&) const = default;
};

/// Writes `token<delim>index` lines in index order.
inline void write_id_table(std::ostream& out, const IdTable& table, char delimiter = ',') {
  for (std::size_t i = 0; i < table.size(); ++i)
    out << table.token(static_cast<index_t>(i)) << delimiter << i << '\n';
}

/// Reads a table written by write_id_table. Lines may come in any order but
/// the indices must cover [0, count) exactly once.
inline IdTable read_id_table(std::istream& in, char delimiter = ',') {
  std::vector<std::optional<std::string>> slots;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = detail::trim_cr(line);
    if (view.empty()) continue;
    auto fields = detail::split_fields(view, delimiter);
    if (fields.size() != 2 || fields[0].empty()) throw ParseError(lineno, "expected token and index");
    std::size_t idx = 0;
    auto res = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), idx);
    if (res.ec != std::errc{} || res.ptr != fields[1].data() + fields[1].size())
      throw ParseError(lineno, "bad index '" + std::string(fields[1]) + "'");
    if (idx >= slots.size()) slots.resize(idx + 1);
    if (slots[idx]) throw ParseError(lineno, "duplicate index " + std::to_string(idx));
    slots[idx] = std::string(fields[0]);
  }
  IdTable table;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw ParseError(0, "id table has a gap at index " + std::to_string(i));
    if (table.intern(*slots[i]) != i) throw ParseError(0, "duplicate token '" + *slots[i] + "'");
  }
  return table;
}

/// Index/value lists of one row or one column.
struct SparseVectorView {
  std::span<const index_t> indices;
  std::span<const double> values;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
};

/// Nonnegative count matrix stored twice: compressed by row (per-user item
/// lists) and compressed by column (per-item user lists). Immutable once built.
class SparseInteractions {
 public:
  SparseInteractions() = default;

  /// Builds both views from entries in any order. Duplicate (user, item)
  /// pairs are summed in input order.
  static SparseInteractions from_entries(std::size_t rows, std::size_t cols,
                                         std::vector<Entry> entries) {
    for (const auto& e : entries) {
      if (e.user >= rows || e.item >= cols)
        throw DataMismatch("entry (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                           ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
      if (!(e.value > 0.0) || !std::isfinite(e.value))
        throw DomainError("stored counts must be positive and finite");
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    std::vector<Entry> merged;
    merged.reserve(entries.size());
    for (const auto& e : entries) {
      if (!merged.empty() && merged.back().user == e.user && merged.back().item == e.item)
        merged.back().value += e.value;
      else
        merged.push_back(e);
    }

    SparseInteractions s;
    s.rows_ = rows;
    s.cols_ = cols;
    const std::size_t nnz = merged.size();

    s.row_ptr_.assign(rows + 1, 0);
    s.row_idx_.resize(nnz);
    s.row_val_.resize(nnz);
    for (std::size_t p = 0; p < nnz; ++p) {
      ++s.row_ptr_[merged[p].user + 1];
      s.row_idx_[p] = merged[p].item;
      s.row_val_[p] = merged[p].value;
    }
    for (std::size_t r = 0; r < rows; ++r) s.row_ptr_[r + 1] += s.row_ptr_[r];

    // Counting sort into columns; scanning rows in order keeps users sorted.
    s.col_ptr_.assign(cols + 1, 0);
    for (const auto& e : merged) ++s.col_ptr_[e.item + 1];
    for (std::size_t c = 0; c < cols; ++c) s.col_ptr_[c + 1] += s.col_ptr_[c];
    s.col_idx_.resize(nnz);
    s.col_val_.resize(nnz);
    std::vector<std::size_t> fill(s.col_ptr_.begin(), s.col_ptr_.end() - 1);
    for (const auto& e : merged) {
      std::size_t dst = fill[e.item]++;
      s.col_idx_[dst] = e.user;
      s.col_val_[dst] = e.value;
    }
    return s;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return row_idx_.size(); }
  bool empty() const noexcept { return row_idx_.empty(); }

  SparseVectorView row(std::size_t u) const {
    const std::size_t b = row_ptr_[u], e = row_ptr_[u + 1];
    return {std::span(row_idx_).subspan(b, e - b), std::span(row_val_).subspan(b, e - b)};
  }

  SparseVectorView col(std::size_t i) const {
    const std::size_t b = col_ptr_[i], e = col_ptr_[i + 1];
    return {std::span(col_idx_).subspan(b, e - b), std::span(col_val_).subspan(b, e - b)};
  }

  /// All entries in row-major order.
  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    out.reserve(nnz());
    for (std::size_t u = 0; u < rows_; ++u) {
      auto r = row(u);
      for (std::size_t p = 0; p < r.size(); ++p)
        out.push_back({static_cast<index_t>(u), r.indices[p], r.values[p]});
    }
    return out;
  }

  /// Same entries read through the column view, in column-major order.
  std::vector<Entry> entries_by_column() const {
    std::vector<Entry> out;
    out.reserve(nnz());
    for (std::size_t i = 0; i < cols_; ++i) {
      auto c = col(i);
      for (std::size_t p = 0; p < c.size(); ++p)
        out.push_back({c.indices[p], static_cast<index_t>(i), c.values[p]});
    }
    return out;
  }

  bool operator==(const SparseInteractions&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<index_t> row_idx_;
  std::vector<double> row_val_;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<index_t> col_idx_;
  std::vector<double> col_val_;
};

struct Dataset {
  SparseInteractions data;
  IdMap ids;
};

/// Assigns indices in first-appearance order and merges duplicate pairs.
inline Dataset build_interactions(std::span<const RawTriplet> triplets) {
  if (triplets.empty()) throw EmptyDatasetError();
  Dataset ds;
  std::vector<Entry> entries;
  entries.reserve(triplets.size());
  for (const auto& t : triplets) {
    index_t u = ds.ids.users.intern(t.user_id);
    index_t i = ds.ids.items.intern(t.item_id);
    entries.push_back({u, i, t.count});
  }
  ds.data = SparseInteractions::from_entries(ds.ids.users.size(), ds.ids.items.size(),
                                             std::move(entries));
  return ds;
}

/// Maps triplets through a fixed IdMap. Triplets naming unknown tokens are
/// dropped and counted in `unknown`.
inline std::vector<Entry> resolve_triplets(std::span<const RawTriplet> triplets, const IdMap& ids,
                                           std::size_t* unknown = nullptr) {
  std::vector<Entry> out;
  out.reserve(triplets.size());
  std::size_t missing = 0;
  for (const auto& t : triplets) {
    auto u = ids.users.find(t.user_id);
    auto i = ids.items.find(t.item_id);
    if (!u || !i) {
      ++missing;
      continue;
    }
    out.push_back({*u, *i, t.count});
  }
  if (unknown) *unknown = missing;
  return out;
}

/// Writes entries as external-token triplets.
inline void write_triplets(std::ostream& out, std::span<const Entry> entries, const IdMap& ids,
                           char delimiter = ',') {
  for (const auto& e : entries)
    out << ids.users.token(e.user) << delimiter << ids.items.token(e.item) << delimiter
        << detail::format_real(e.value) << '\n';
}

struct SplitPair {
  SparseInteractions train;
  std::vector<Entry> test;  // sorted by (user, item)

  bool operator==(const SplitPair&) const = default;
};

inline constexpr double kDefaultTestFraction = 0.2;
inline constexpr std::size_t kDefaultMinTestEntries = 3;

/// Holds out each stored entry with probability `test_fraction`, then drops
/// the held-out entries of users that have no training entries or fewer than
/// `min_test_entries` held-out entries. Dropped entries do not return to train.
inline SplitPair split_train_test(const SparseInteractions& data,
                                  double test_fraction = kDefaultTestFraction,
                                  std::size_t min_test_entries = kDefaultMinTestEntries,
                                  std::uint64_t seed = 42) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must lie in (0, 1)");
  if (data.empty()) throw EmptyDatasetError();

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution hold_out(test_fraction);

  std::vector<Entry> train_entries;
  std::vector<Entry> test_entries;
  std::vector<std::size_t> train_count(data.rows(), 0);
  std::vector<std::size_t> test_count(data.rows(), 0);
  for (const Entry& e : data.entries()) {
    if (hold_out(rng)) {
      test_entries.push_back(e);
      ++test_count[e.user];
    } else {
      train_entries.push_back(e);
      ++train_count[e.user];
    }
  }

  SplitPair split;
  split.train = SparseInteractions::from_entries(data.rows(), data.cols(), std::move(train_entries));
  std::erase_if(test_entries, [&](const Entry& e) {
    return train_count[e.user] == 0 || test_count[e.user] < min_test_entries;
  });
  split.test = std::move(test_entries);
  return split;
}

}  // namespace poisfact
