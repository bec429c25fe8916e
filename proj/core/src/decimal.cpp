#include "kipg/decimal.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace kipg {

namespace {

constexpr std::int64_t kInt64Max = INT64_MAX;

bool mul10_add(std::int64_t& acc, int digit) {
  if (acc > (kInt64Max - digit) / 10) return false;
  acc = acc * 10 + digit;
  return true;
}

__int128 widen(const Decimal& d, int target_scale) {
  __int128 v = d.units();
  for (int i = d.scale(); i < target_scale; ++i) v *= 10;
  return v;
}

}  // namespace

Decimal::Decimal(std::int64_t units, int scale) : units_(units), scale_(scale) {
  normalize();
}

void Decimal::normalize() {
  if (scale_ < 0) scale_ = 0;
  while (scale_ > 0 && units_ % 10 == 0) {
    units_ /= 10;
    --scale_;
  }
  if (units_ == 0) scale_ = 0;
}

std::optional<Decimal> Decimal::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::size_t pos = 0;
  bool negative = false;
  if (text[pos] == '-') {
    negative = true;
    ++pos;
  }
  if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos])))
    return std::nullopt;

  std::int64_t units = 0;
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
    if (!mul10_add(units, text[pos] - '0')) return std::nullopt;
    ++pos;
  }

  int scale = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos])))
      return std::nullopt;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (scale < kMaxScale) {
        if (!mul10_add(units, text[pos] - '0')) return std::nullopt;
        ++scale;
      }
      // Digits beyond kMaxScale are dropped.
      ++pos;
    }
  }
  if (pos != text.size()) return std::nullopt;

  return Decimal(negative ? -units : units, scale);
}

double Decimal::to_double() const noexcept {
  double v = static_cast<double>(units_);
  for (int i = 0; i < scale_; ++i) v /= 10.0;
  return v;
}

std::string Decimal::to_string() const {
  std::int64_t abs_units = units_ < 0 ? -units_ : units_;
  std::string digits = std::to_string(abs_units);
  if (scale_ > 0) {
    if (static_cast<int>(digits.size()) <= scale_) {
      digits.insert(0, scale_ + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - scale_, 1, '.');
  }
  if (units_ < 0) digits.insert(0, 1, '-');
  return digits;
}

bool operator==(const Decimal& a, const Decimal& b) noexcept {
  return a.units_ == b.units_ && a.scale_ == b.scale_;
}

bool operator<(const Decimal& a, const Decimal& b) noexcept {
  int target = a.scale_ > b.scale_ ? a.scale_ : b.scale_;
  return widen(a, target) < widen(b, target);
}

}  // namespace kipg
