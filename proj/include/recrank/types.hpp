#pragma once

#include <compare>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace recrank {

// Opaque user identifier (MovieLens numeric id as text, Amazon reviewerID).
using UserId = std::string;

// Opaque item identifier (MovieLens MovieID as decimal text, Amazon ASIN).
struct ItemId {
  std::string value;

  ItemId() = default;
  explicit ItemId(std::string v) : value(std::move(v)) {}
  explicit ItemId(std::string_view v) : value(v) {}
  explicit ItemId(const char* v) : value(v) {}

  bool empty() const { return value.empty(); }
  const std::string& str() const { return value; }

  auto operator<=>(const ItemId&) const = default;
  bool operator==(const ItemId&) const = default;
};

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace recrank

template <>
struct std::hash<recrank::ItemId> {
  std::size_t operator()(const recrank::ItemId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};
