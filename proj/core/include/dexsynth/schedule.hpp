#pragma once

#include <vector>

#include "dexsynth/common.hpp"

namespace dexsynth {

/// DDPM noise schedule. Vectors are indexed by t - 1 for t in [1, T].
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  int steps() const { return static_cast<int>(beta.size()); }
  /// alpha_bar at t, with alpha_bar(0) = 1.
  double alpha_bar_at(int t) const;

  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
  static NoiseSchedule from_betas(std::vector<double> betas);
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
MatX forward_noise(const MatX& x0, int t, const MatX& noise, const NoiseSchedule& schedule);

/// One step of Markov noising q(x_t | x_{t-1}).
MatX forward_step(const MatX& x_prev, int t, const MatX& noise, const NoiseSchedule& schedule);

struct PosteriorCoefficients {
  double c0 = 0;        // multiplies x0_hat
  double ct = 0;        // multiplies x_t
  double variance = 0;  // beta tilde
};

/// Posterior q(x_prev | x_t, x0) between two cumulative products.
PosteriorCoefficients posterior_coefficients(double alpha_bar_t, double alpha_bar_prev);

/// Posterior mean plus sqrt(variance) * noise; noise is ignored when t = 1.
MatX posterior_step(const MatX& x_t, const MatX& x0_hat, int t, const NoiseSchedule& schedule, const MatX& noise);

/// Descending timesteps visited by a strided reverse chain: T, T - s, ... (> 0).
std::vector<int> sampling_timesteps(int steps, int stride);

/// Posterior step from t to t_prev (t_prev = 0 ends the chain, no noise).
MatX posterior_step_between(const MatX& x_t, const MatX& x0_hat, int t, int t_prev, const NoiseSchedule& schedule,
                            const MatX& noise);

}  // namespace dexsynth
