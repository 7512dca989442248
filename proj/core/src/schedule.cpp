#include "dexsynth/schedule.hpp"

#include <cmath>

namespace dexsynth {

namespace {

void check_t(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps()) {
    throw Error("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.steps()) + "]");
  }
}

void check_shape(const MatX& a, const MatX& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(std::string(what) + ": shape mismatch");
}

}  // namespace

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t == 0) return 1.0;
  check_t(t, *this);
  return alpha_bar[t - 1];
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error("noise schedule needs at least one step");
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i) {
    betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  NoiseSchedule s;
  double prod = 1.0;
  double prev = 0.0;
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0)) throw Error("noise schedule: beta outside [0,1)");
    if (b < prev) throw Error("noise schedule: betas must be non-decreasing");
    prev = b;
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  return s;
}

MatX forward_noise(const MatX& x0, int t, const MatX& noise, const NoiseSchedule& schedule) {
  check_t(t, schedule);
  check_shape(x0, noise, "forward_noise");
  const double ab = schedule.alpha_bar[t - 1];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

MatX forward_step(const MatX& x_prev, int t, const MatX& noise, const NoiseSchedule& schedule) {
  check_t(t, schedule);
  check_shape(x_prev, noise, "forward_step");
  const double b = schedule.beta[t - 1];
  return std::sqrt(1.0 - b) * x_prev + std::sqrt(b) * noise;
}

PosteriorCoefficients posterior_coefficients(double alpha_bar_t, double alpha_bar_prev) {
  PosteriorCoefficients c;
  const double denom = 1.0 - alpha_bar_t;
  if (denom <= 0.0) {
    // Degenerate schedule (no noise at all): the posterior collapses onto x_t.
    c.ct = 1.0;
    return c;
  }
  const double beta_eff = 1.0 - alpha_bar_t / alpha_bar_prev;
  c.c0 = std::sqrt(alpha_bar_prev) * beta_eff / denom;
  c.ct = std::sqrt(1.0 - beta_eff) * (1.0 - alpha_bar_prev) / denom;
  c.variance = beta_eff * (1.0 - alpha_bar_prev) / denom;
  return c;
}

MatX posterior_step_between(const MatX& x_t, const MatX& x0_hat, int t, int t_prev, const NoiseSchedule& schedule,
                            const MatX& noise) {
  check_t(t, schedule);
  if (t_prev < 0 || t_prev >= t) throw Error("posterior step: t_prev must lie in [0, t)");
  check_shape(x_t, x0_hat, "posterior_step");
  const auto c = posterior_coefficients(schedule.alpha_bar_at(t), schedule.alpha_bar_at(t_prev));
  MatX out = c.c0 * x0_hat + c.ct * x_t;
  if (t_prev > 0 && c.variance > 0.0) {
    check_shape(x_t, noise, "posterior_step noise");
    out += std::sqrt(c.variance) * noise;
  }
  return out;
}

MatX posterior_step(const MatX& x_t, const MatX& x0_hat, int t, const NoiseSchedule& schedule, const MatX& noise) {
  return posterior_step_between(x_t, x0_hat, t, t - 1, schedule, noise);
}

std::vector<int> sampling_timesteps(int steps, int stride) {
  if (stride < 1) throw Error("sampling stride must be >= 1");
  std::vector<int> ts;
  for (int t = steps; t > 0; t -= stride) ts.push_back(t);
  return ts;
}

}  // namespace dexsynth
