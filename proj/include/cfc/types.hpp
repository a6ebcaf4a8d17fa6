#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cfc {

// Dense dynamic-size types; everything in this project is n <= 16.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Eigen::Index;

/// Covariance factorization failed even after the jitter retry.
struct SingularCovariance : std::runtime_error {
  explicit SingularCovariance(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative routine failed to reach its tolerance.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Plant state or observation became non-finite.
struct SimulationDiverged : std::runtime_error {
  explicit SimulationDiverged(const std::string& what) : std::runtime_error(what) {}
};

/// QP iteration limit exceeded without a convergence or infeasibility certificate.
struct NonConverged : std::runtime_error {
  explicit NonConverged(const std::string& what) : std::runtime_error(what) {}
};

/// Bad configuration file or option value.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) { throw std::invalid_argument(msg); }
}

inline void require_dim(const Vector& v, Index n, const char* name) {
  if (v.size() != n) {
    throw std::invalid_argument(std::string(name) + ": expected dimension " + std::to_string(n) +
                                ", got " + std::to_string(v.size()));
  }
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  }
}

}  // namespace cfc
