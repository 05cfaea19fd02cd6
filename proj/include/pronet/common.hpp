#ifndef PRONET_COMMON_HPP
#define PRONET_COMMON_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace pronet {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = MatX<float>;
using VecF = VecX<float>;
using MatD = MatX<double>;
using VecD = VecX<double>;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

}  // namespace pronet

#endif
