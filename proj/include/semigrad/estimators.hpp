#pragma once

#include "semigrad/lie_group.hpp"
#include "semigrad/models.hpp"
#include "semigrad/paths.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace semigrad {

/// Monte Carlo budget shared by every estimator.
struct McConfig {
  double t = 1.0;
  int n_steps = 1000;
  std::uint64_t n_paths = 200000;
  std::uint64_t seed = 42;
};

struct EstimatorResult {
  std::string estimator;
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;  // per-path sample variance
  std::uint64_t n_paths = 0;
  std::uint64_t n_rejected = 0;
  std::uint64_t seed = 0;
  TimeGrid grid;
  /// False when more than 1% of the paths blew up.
  bool valid = true;
  std::map<std::string, double> metadata;

  [[nodiscard]] double rejected_fraction() const noexcept {
    return n_paths == 0 ? 0.0 : static_cast<double>(n_rejected) / static_cast<double>(n_paths);
  }
};

/// sqrt(se_a^2 + se_b^2).
double joint_std_error(const EstimatorResult& a, const EstimatorResult& b);

inline constexpr double kMaxRejectedFraction = 0.01;

/// E f(x_t).
EstimatorResult semigroup_value(const DiffusionModel& model, const Vec& x0,
                                const ScalarObservable& f, const McConfig& cfg);

/// E df(x_t)(v_t).
EstimatorResult pathwise_gradient(const DiffusionModel& model, const Vec& x0,
                                  const ScalarObservable& f, const Vec& v0, const McConfig& cfg);

/// (1/t) E f(x_t) sum_k <Y(x_k) v_k, dB_k>; needs only point values of f.
EstimatorResult bel_gradient(const DiffusionModel& model, const Vec& x0,
                             const ScalarObservable& f, const Vec& v0, const McConfig& cfg);

enum class HessianVariant { Weights, Nested };

struct HessianOptions {
  HessianVariant variant = HessianVariant::Weights;
  int n_inner = 8;          // inner paths per time sample (nested)
  int n_time_samples = 4;   // stratified time samples of the ds-integral (nested)
};

/// Second derivative D^2 P_t f(x0)(u0, v0); flat models only. n_steps must be even.
EstimatorResult bel_hessian(const DiffusionModel& model, const Vec& x0, const ScalarObservable& f,
                            const Vec& u0, const Vec& v0, const McConfig& cfg,
                            const HessianOptions& options = {});

/// Derivative of u_t = E exp(int V) u_0(x_t) along time-reversed coefficients.
EstimatorResult potential_gradient(const DiffusionModel& model, const Vec& x0,
                                   const ScalarObservable& u0, const PotentialField& V,
                                   const Vec& v0, const McConfig& cfg);

/// (1/t) E f(x_t) sum_k <Y(x_k) W_k, dB_k> with the Hessian flow W.
EstimatorResult hessian_flow_gradient(const DiffusionModel& model, const Vec& x0,
                                      const ScalarObservable& f, const Vec& v0,
                                      const McConfig& cfg);

enum class BinKernel { Box, Gaussian };

struct ConditionalBinSpec {
  Vec y;
  double bandwidth = 0.05;
  BinKernel kernel = BinKernel::Box;
};

/// <grad log p_t(., y)(x0), v0> as a kernel-weighted ratio of Bismut weights.
/// Metadata: effective_count, bandwidth, bandwidth_bias_scale (= bandwidth^2).
EstimatorResult score_gradient(const DiffusionModel& model, const Vec& x0,
                               const ConditionalBinSpec& bins, const Vec& v0,
                               const McConfig& cfg);

/// (1/t) E f(g_t) sum_k <Ad(h_k)^{-1} xi, dB_k> / s on SO(3), with g_k = g0 h_k and
/// v0 = g0 hat(xi) (v0 is an embedded tangent vector at g0).
EstimatorResult lie_group_gradient(const LieGroupModel& model, const Mat3& g0,
                                   const ScalarObservable& f, const Vec& v0,
                                   const McConfig& cfg);

/// Sum_k <Y(x_k) d_k, dB_k> over k in [begin, end).
double bismut_weight(const DiffusionModel& model, const Trajectory& traj, const NoisePath& noise,
                     const std::vector<Vec>& directions, int begin, int end);

}  // namespace semigrad
