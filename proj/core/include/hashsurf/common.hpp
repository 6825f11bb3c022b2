#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace hashsurf {

// Bad user-supplied configuration (CLI maps this to exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A module API was used outside its forward/backward contract.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Training aborted after too many consecutive non-finite steps (exit code 3).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Vec3 = Eigen::Matrix<S, 3, 1>;

using Vec3d = Eigen::Vector3d;

// The scene is normalized so all geometry lives inside the unit sphere,
// itself inside the encoding domain cube [-1,1]^3.
inline constexpr double kDomainBound = 1.0;

}  // namespace hashsurf
