#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace semigrad {

// Largest ambient or noise dimension used by any model (SO(3) lives in R^9).
inline constexpr int kMaxDim = 9;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          kMaxDim, kMaxDim>;

enum class ErrorCode {
  DimensionMismatch,
  MissingDerivative,
  Degenerate,
  AllPathsBlewUp,
  BlownUpPath,
  MissingGeometry,
  UnboundedPotential,
  EmptyBin,
  NotLieGroup,
  MissingCodifferential,
  NotClosed,
  DegreeMismatch,
  NotGradientSystem,
  UnsupportedDegree,
  UnsupportedModel,
  ZeroDirection,
  InvalidArgument,
  UnknownScenario,
  UnknownEstimator,
  UnknownObservable,
  UnknownForm,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline Vec zeros(int n) { return Vec::Zero(n); }

}  // namespace semigrad
