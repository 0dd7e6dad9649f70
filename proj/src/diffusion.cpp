#include "diffusion.hpp"

#include <cmath>

#include "error.hpp"
#include "tensor_io.hpp"

namespace clusdiff {

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) fail(ErrorKind::Config, "schedule needs T >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    fail(ErrorKind::Config, "schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.assign(size_t(T) + 1, 0.0);
  s.alpha.assign(size_t(T) + 1, 1.0);
  s.alpha_bar.assign(size_t(T) + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    double frac = T > 1 ? double(t - 1) / double(T - 1) : 0.0;
    s.beta[size_t(t)] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[size_t(t)] = 1.0 - s.beta[size_t(t)];
    s.alpha_bar[size_t(t)] = s.alpha_bar[size_t(t) - 1] * s.alpha[size_t(t)];
  }
  return s;
}

void save_schedule(const std::string& path, const NoiseSchedule& s) {
  Tensor t({3, s.T});
  for (int i = 1; i <= s.T; ++i) {
    t.at(0, i - 1) = s.beta[size_t(i)];
    t.at(1, i - 1) = s.alpha[size_t(i)];
    t.at(2, i - 1) = s.alpha_bar[size_t(i)];
  }
  save_tensor(path, t, Dtype::F64);
}

NoiseSchedule load_schedule(const std::string& path) {
  Tensor t = load_tensor(path);
  if (t.rank() != 2 || t.extent(0) != 3)
    fail(ErrorKind::Io, "schedule file wants shape [3,T], got " + t.shape_str());
  NoiseSchedule s;
  s.T = t.extent(1);
  s.beta.assign(size_t(s.T) + 1, 0.0);
  s.alpha.assign(size_t(s.T) + 1, 1.0);
  s.alpha_bar.assign(size_t(s.T) + 1, 1.0);
  for (int i = 1; i <= s.T; ++i) {
    s.beta[size_t(i)] = t.at(0, i - 1);
    s.alpha[size_t(i)] = t.at(1, i - 1);
    s.alpha_bar[size_t(i)] = t.at(2, i - 1);
    if (!(s.beta[size_t(i)] > 0.0) || !(s.beta[size_t(i)] < 1.0) ||
        !(s.alpha_bar[size_t(i)] < s.alpha_bar[size_t(i) - 1]))
      fail(ErrorKind::Io, "schedule file violates invariants at t=" + std::to_string(i));
  }
  return s;
}

namespace {
void check_t(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T)
    fail(ErrorKind::Range, "step " + std::to_string(t) + " outside [1," + std::to_string(sched.T) + "]");
}
}  // namespace

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check_t(t, sched);
  if (!x0.same_shape(eps))
    fail(ErrorKind::Shape, "forward_sample: x0 " + x0.shape_str() + " vs eps " + eps.shape_str());
  double ab = sched.alpha_bar[size_t(t)];
  double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
  Tensor out = x0;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = c0 * x0[i] + c1 * eps[i];
  return out;
}

double denoise_loss(const Tensor& eps_pred, const Tensor& eps) {
  if (!eps_pred.same_shape(eps))
    fail(ErrorKind::Shape, "denoise_loss: " + eps_pred.shape_str() + " vs " + eps.shape_str());
  double s = 0.0;
  for (int64_t i = 0; i < eps.numel(); ++i) {
    double d = eps_pred[i] - eps[i];
    s += d * d;
  }
  return s / double(eps.numel());
}

Tensor reverse_step(const Tensor& x_t, int t, const Tensor& eps_pred,
                    const NoiseSchedule& sched, const Tensor& noise) {
  check_t(t, sched);
  if (!x_t.same_shape(eps_pred))
    fail(ErrorKind::Shape, "reverse_step: x_t " + x_t.shape_str() + " vs eps_pred " + eps_pred.shape_str());
  double beta = sched.beta[size_t(t)];
  double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[size_t(t)]);
  double coef = beta / std::sqrt(1.0 - sched.alpha_bar[size_t(t)]);
  double sigma = t > 1 ? std::sqrt(beta) : 0.0;
  if (sigma > 0.0 && !x_t.same_shape(noise))
    fail(ErrorKind::Shape, "reverse_step: noise shape " + noise.shape_str());
  Tensor out = x_t;
  for (int64_t i = 0; i < out.numel(); ++i) {
    double mu = inv_sqrt_alpha * (x_t[i] - coef * eps_pred[i]);
    out[i] = sigma > 0.0 ? mu + sigma * noise[i] : mu;
  }
  return out;
}

Tensor sample_loop(const DenoiseFn& denoiser, const NoiseSchedule& sched,
                   Rng& rng, const std::vector<int>& shape) {
  Tensor x = Tensor::randn(shape, rng);
  Tensor noise = Tensor::zeros(shape);
  for (int t = sched.T; t >= 1; --t) {
    Tensor eps_pred = denoiser(x, t);
    if (t > 1)
      for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = rng.normal();
    x = reverse_step(x, t, eps_pred, sched, noise);
  }
  return x;
}

}  // namespace clusdiff
