#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace clusdiff {

/// Variance schedule for the forward process. Entries are indexed 1..T;
/// index 0 is a sentinel (alpha_bar[0] = 1, the no-noise state).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta[t], t in 1..T
  std::vector<double> alpha;      // 1 - beta[t]
  std::vector<double> alpha_bar;  // prod_{s<=t} alpha[s]
};

/// Linear interpolation from beta_start to beta_end inclusive.
NoiseSchedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

void save_schedule(const std::string& path, const NoiseSchedule& s);
NoiseSchedule load_schedule(const std::string& path);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// Mean squared error over all elements.
double denoise_loss(const Tensor& eps_pred, const Tensor& eps);

/// One ancestral step: mu + sigma_t * noise, where
/// mu = (x_t - beta_t/sqrt(1-alpha_bar_t) * eps_pred) / sqrt(alpha_t)
/// and sigma_t^2 = beta_t for t > 1, sigma_1 = 0.
Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_pred,
                    const NoiseSchedule& sched, const Tensor& noise);

using DenoiseFn = std::function<Tensor(const Tensor& x_t, int t)>;

/// Full reverse chain from x_T ~ N(0, I) down to x_0.
Tensor sample_loop(const DenoiseFn& denoiser, const NoiseSchedule& sched,
                   Rng& rng, const std::vector<int>& shape);

}  // namespace clusdiff
