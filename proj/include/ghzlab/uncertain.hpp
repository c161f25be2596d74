#pragma once

#include <cmath>

namespace ghzlab {

/// Value with a one-standard-deviation uncertainty, in the unit of the
/// surrounding context.
struct Uncertain {
  double value = 0.0;
  double sigma = 0.0;

  friend Uncertain operator+(Uncertain a, Uncertain b) { return {a.value + b.value, std::hypot(a.sigma, b.sigma)}; }
  friend Uncertain operator-(Uncertain a, Uncertain b) { return {a.value - b.value, std::hypot(a.sigma, b.sigma)}; }
  friend Uncertain operator-(Uncertain a) { return {-a.value, a.sigma}; }
};

}  // namespace ghzlab
