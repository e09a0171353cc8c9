#pragma once

#include <type_traits>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

namespace moesd {

/// Plain value of a scalar, stripping derivative information from
/// Eigen::AutoDiffScalar so that branches and domain checks can be written
/// once for every scalar type the model is instantiated with.
template <typename T>
  requires std::is_arithmetic_v<T>
constexpr T value_of(T x) {
  return x;
}

template <typename Derivatives>
typename Eigen::AutoDiffScalar<Derivatives>::Real value_of(
    const Eigen::AutoDiffScalar<Derivatives>& x) {
  return x.value();
}

}  // namespace moesd
