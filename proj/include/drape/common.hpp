#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <sstream>
#include <stdexcept>
#include <string>

namespace drape {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat2 = Eigen::Matrix2d;

/// Base class for everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File or parse problems (missing paths, malformed records, bad config keys).
class IoError : public Error {
public:
    using Error::Error;
};

/// Geometry that violates a structural requirement (non-manifold edge,
/// degenerate face, non-watertight body, dimension mismatch).
class MeshError : public Error {
public:
    using Error::Error;
};

/// Runtime numerical failure (NaN gradient, rank-deficient one-ring).
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void msg_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    msg_append(os, rest...);
}

} // namespace detail

template <typename... Args>
std::string msg(const Args&... args) {
    std::ostringstream os;
    detail::msg_append(os, args...);
    return os.str();
}

} // namespace drape
