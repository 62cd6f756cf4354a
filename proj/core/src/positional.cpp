#include "gmha/positional.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gmha/errors.hpp"

namespace gmha {

namespace {

void rotate_row(double* row, std::size_t d, double position, double base, double sign) {
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    const double angle = sign * position * freq;
    const double c = std::cos(angle), s = std::sin(angle);
    const double a = row[2 * i], b = row[2 * i + 1];
    row[2 * i] = a * c - b * s;
    row[2 * i + 1] = a * s + b * c;
  }
}

Tensor rope_impl(const Tensor& x, std::span<const std::size_t> positions, double base, double sign) {
  const std::size_t d = x.cols();
  if (d % 2 != 0) throw DimensionError("rope: rotated dimension must be even, got " + std::to_string(d));
  if (!(base > 1.0)) throw ConfigError("rope: base must exceed 1");
  if (positions.size() != x.rows()) {
    throw DimensionError("rope: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(x.rows()) + " rows");
  }
  Tensor out = x;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    rotate_row(out.row(t).data(), d, static_cast<double>(positions[t]), base, sign);
  }
  return out;
}

}  // namespace

Tensor rope_apply(const Tensor& x, std::span<const std::size_t> positions, double base) {
  return rope_impl(x, positions, base, 1.0);
}

Tensor rope_apply_inverse(const Tensor& x, std::span<const std::size_t> positions, double base) {
  return rope_impl(x, positions, base, -1.0);
}

void rope_rotate_row(std::span<double> row, std::size_t position, double base) {
  if (row.size() % 2 != 0) throw DimensionError("rope: rotated dimension must be even");
  rotate_row(row.data(), row.size(), static_cast<double>(position), base, 1.0);
}

std::vector<double> alibi_slopes(std::size_t n_heads) {
  if (n_heads == 0) throw ConfigError("alibi: n_heads must be positive");
  std::vector<double> slopes(n_heads);
  for (std::size_t h = 1; h <= n_heads; ++h) {
    slopes[h - 1] = std::exp2(-8.0 * static_cast<double>(h) / static_cast<double>(n_heads));
  }
  return slopes;
}

Tensor alibi_bias(std::size_t n_heads, std::size_t t) {
  if (t == 0) throw ConfigError("alibi: sequence length must be positive");
  const auto slopes = alibi_slopes(n_heads);
  Tensor bias({n_heads, t, t});
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  auto data = bias.data();
  for (std::size_t h = 0; h < n_heads; ++h)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j)
        data[(h * t + i) * t + j] = j < i ? -slopes[h] * static_cast<double>(i - j) : (j == i ? 0.0 : kNegInf);
  return bias;
}

std::vector<std::size_t> iota_positions(std::size_t t) {
  std::vector<std::size_t> p(t);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

}  // namespace gmha
