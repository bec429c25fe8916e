#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace kipg {

// Exact decimal number stored as a scaled integer: value = units * 10^-scale.
// Reference answers carry at most 4 fractional digits; numbers lifted out of
// model responses may carry more, so up to 9 are kept. Values are normalized
// (no trailing fractional zeros), which makes equality structural.
class Decimal {
 public:
  static constexpr int kMaxScale = 9;

  Decimal() : units_(0), scale_(0) {}
  Decimal(std::int64_t units, int scale);

  // Strict grammar: -?digits(.digits)? — no signs inside, no exponent, no
  // thousands separators. Fractional digits beyond kMaxScale are truncated.
  // Returns nullopt on syntax error or int64 overflow.
  static std::optional<Decimal> parse(std::string_view text);

  static Decimal from_int(std::int64_t value) { return Decimal(value, 0); }

  std::int64_t units() const noexcept { return units_; }
  int scale() const noexcept { return scale_; }
  int fractional_digits() const noexcept { return scale_; }
  bool is_negative() const noexcept { return units_ < 0; }

  double to_double() const noexcept;

  // Canonical rendering: minus sign, integer digits, '.' + fraction digits
  // only when scale > 0. parse(to_string()) round-trips exactly.
  std::string to_string() const;

  friend bool operator==(const Decimal& a, const Decimal& b) noexcept;
  friend bool operator!=(const Decimal& a, const Decimal& b) noexcept {
    return !(a == b);
  }
  friend bool operator<(const Decimal& a, const Decimal& b) noexcept;

 private:
  void normalize();

  std::int64_t units_;
  int scale_;
};

}  // namespace kipg
