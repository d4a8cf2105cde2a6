#pragma once

// Walsh-Hadamard code generation and node assignment.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tactile/error.hpp"

namespace tactile {

using Chip = std::int8_t;

/// One +-1 spreading code. Length is always a power of two.
class CodeVector {
 public:
  CodeVector() = default;

  explicit CodeVector(std::vector<Chip> chips) : chips_(std::move(chips)) {
    if (chips_.empty() || !std::has_single_bit(chips_.size()))
      throw Error(ErrorKind::invalid_order, "code length " + std::to_string(chips_.size()) + " is not a power of 2");
    for (auto c : chips_)
      if (c != 1 && c != -1) throw Error(ErrorKind::domain, "code chip must be +1 or -1");
  }

  std::size_t size() const noexcept { return chips_.size(); }
  Chip operator[](std::size_t i) const noexcept { return chips_[i]; }
  std::span<const Chip> chips() const noexcept { return chips_; }

  bool operator==(const CodeVector&) const = default;

 private:
  std::vector<Chip> chips_;
};

inline std::int64_t dot(std::span<const Chip> a, std::span<const Chip> b) {
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<std::int64_t>(a[i]) * b[i];
  return acc;
}

/// Sylvester construction H_1 = [+1], H_2N = [[H_N, H_N], [H_N, -H_N]].
/// Entry (r, c) equals (-1)^popcount(r & c), which is what we evaluate.
inline std::vector<CodeVector> sylvester_hadamard(std::size_t order) {
  if (order == 0 || !std::has_single_bit(order))
    throw Error(ErrorKind::invalid_order, "Hadamard order " + std::to_string(order) + " is not a power of 2");
  std::vector<CodeVector> rows;
  rows.reserve(order);
  std::vector<Chip> buf(order);
  for (std::size_t r = 0; r < order; ++r) {
    for (std::size_t c = 0; c < order; ++c) buf[c] = (std::popcount(r & c) & 1) ? Chip{-1} : Chip{1};
    rows.emplace_back(buf);
  }
  return rows;
}

inline std::size_t smallest_order(std::size_t n_nodes, bool skip_dc_row) {
  if (n_nodes == 0) throw Error(ErrorKind::invalid_count, "node count must be >= 1");
  return std::bit_ceil(skip_dc_row ? n_nodes + 1 : n_nodes);
}

struct OrthogonalityReport {
  std::int64_t max_cross_dot = 0;
  std::int64_t min_self_dot = 0;
  std::int64_t max_self_dot = 0;
};

/// Immutable code table: the order-N Sylvester rows plus the node -> row map.
class CodeBook {
 public:
  CodeBook(std::size_t order, bool skip_dc_row, std::vector<std::size_t> assignment)
      : order_(order), skip_dc_row_(skip_dc_row), rows_(sylvester_hadamard(order)), assignment_(std::move(assignment)) {
    validate();
  }

  /// Rows given explicitly (used to check tampered or hand-built tables).
  CodeBook(std::vector<CodeVector> rows, bool skip_dc_row, std::vector<std::size_t> assignment)
      : order_(rows.size()), skip_dc_row_(skip_dc_row), rows_(std::move(rows)), assignment_(std::move(assignment)) {
    for (const auto& r : rows_)
      if (r.size() != order_) throw Error(ErrorKind::invalid_order, "code table is not square");
    if (order_ == 0 || !std::has_single_bit(order_))
      throw Error(ErrorKind::invalid_order, "code table order is not a power of 2");
    validate();
  }

  std::size_t order() const noexcept { return order_; }
  bool skip_dc_row() const noexcept { return skip_dc_row_; }
  std::size_t node_count() const noexcept { return assignment_.size(); }
  std::span<const std::size_t> assignment() const noexcept { return assignment_; }
  std::span<const CodeVector> rows() const noexcept { return rows_; }

  const CodeVector& row(std::size_t index) const { return rows_.at(index); }
  const CodeVector& code_for(std::size_t node) const { return rows_.at(assignment_.at(node)); }

 private:
  void validate() const {
    std::vector<bool> used(order_, false);
    for (auto r : assignment_) {
      if (r >= order_) throw Error(ErrorKind::domain, "assigned row " + std::to_string(r) + " outside order");
      if (used[r]) throw Error(ErrorKind::domain, "row " + std::to_string(r) + " assigned twice");
      if (skip_dc_row_ && r == 0) throw Error(ErrorKind::domain, "all-ones row assigned while skip_dc_row is set");
      used[r] = true;
    }
  }

  std::size_t order_;
  bool skip_dc_row_;
  std::vector<CodeVector> rows_;
  std::vector<std::size_t> assignment_;
};

/// Ascending row assignment, starting at row 1 when the all-ones row is skipped.
inline CodeBook assign_codes(std::size_t n_nodes, bool skip_dc_row = true) {
  const auto order = smallest_order(n_nodes, skip_dc_row);
  std::vector<std::size_t> assignment(n_nodes);
  const std::size_t first = skip_dc_row ? 1 : 0;
  for (std::size_t i = 0; i < n_nodes; ++i) assignment[i] = first + i;
  return CodeBook(order, skip_dc_row, std::move(assignment));
}

namespace detail {

// +1 -> bit 0, -1 -> bit 1; dot = N - 2 * popcount(a ^ b)
inline std::vector<std::uint64_t> pack_chips(std::span<const Chip> chips) {
  std::vector<std::uint64_t> words((chips.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < chips.size(); ++i)
    if (chips[i] < 0) words[i / 64] |= std::uint64_t{1} << (i % 64);
  return words;
}

}  // namespace detail

/// Exhaustive pairwise check over assigned rows in exact integer arithmetic.
inline OrthogonalityReport verify_orthogonality(const CodeBook& book) {
  const auto n = book.order();
  std::vector<std::vector<std::uint64_t>> packed;
  packed.reserve(book.node_count());
  for (auto r : book.assignment()) packed.push_back(detail::pack_chips(book.row(r).chips()));

  OrthogonalityReport rep;
  if (packed.empty()) return rep;
  rep.min_self_dot = static_cast<std::int64_t>(n);
  rep.max_self_dot = 0;
  for (auto r : book.assignment()) {
    const auto self = dot(book.row(r).chips(), book.row(r).chips());
    rep.min_self_dot = std::min(rep.min_self_dot, self);
    rep.max_self_dot = std::max(rep.max_self_dot, self);
  }
  const auto words = packed.front().size();
  for (std::size_t i = 0; i < packed.size(); ++i) {
    for (std::size_t j = i + 1; j < packed.size(); ++j) {
      std::int64_t diff = 0;
      for (std::size_t w = 0; w < words; ++w) diff += std::popcount(packed[i][w] ^ packed[j][w]);
      const auto d = static_cast<std::int64_t>(n) - 2 * diff;
      rep.max_cross_dot = std::max(rep.max_cross_dot, d < 0 ? -d : d);
    }
  }
  return rep;
}

inline bool is_orthogonal(const OrthogonalityReport& rep, std::size_t order) {
  return rep.max_cross_dot == 0 && rep.min_self_dot == static_cast<std::int64_t>(order) &&
         rep.max_self_dot == static_cast<std::int64_t>(order);
}

// JSON: {order, skip_dc_row, assignment:[row indices]}. Rows are regenerated on load.

inline nlohmann::json to_json(const CodeBook& book) {
  return {{"order", book.order()},
          {"skip_dc_row", book.skip_dc_row()},
          {"assignment", std::vector<std::size_t>(book.assignment().begin(), book.assignment().end())}};
}

inline CodeBook codebook_from_json(const nlohmann::json& j) {
  try {
    auto book = CodeBook(j.at("order").get<std::size_t>(), j.at("skip_dc_row").get<bool>(),
                         j.at("assignment").get<std::vector<std::size_t>>());
    if (!is_orthogonal(verify_orthogonality(book), book.order()))
      throw Error(ErrorKind::domain, "codebook failed orthogonality check");
    return book;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("codebook JSON: ") + e.what());
  }
}

}  // namespace tactile
