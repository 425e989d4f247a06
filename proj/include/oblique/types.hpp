#ifndef OBLIQUE_TYPES_HPP
#define OBLIQUE_TYPES_HPP

#include <Eigen/Dense>

#include "oblique/errors.hpp"

namespace oblique {

// Dense real matrices are the universal carrier; vectors are 1-column
// matrices (Eigen::VectorXd is exactly that).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NonFiniteError(std::string(what) + " contains non-finite entries");
  }
}

inline void require_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatchError(msg);
}

}  // namespace oblique

#endif  // OBLIQUE_TYPES_HPP
