#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hierwalk {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Dense node index, valid within its owning graph.
using NodeId = std::int32_t;

constexpr NodeId kNoNode = -1;

// Error taxonomy. Construction/IO errors derive from runtime_error so the
// CLI can map them onto exit codes (usage/config = 1, runtime = 2).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TopologyError : std::runtime_error {
  explicit TopologyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hierwalk
