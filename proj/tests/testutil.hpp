#pragma once

#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pulseclust/iq.hpp"
#include "pulseclust/tensor.hpp"

namespace pulseclust::testutil {

/// Max relative error between autodiff gradients and central finite
/// differences for a scalar-valued graph over the given inputs.
inline double gradcheck(const std::function<TensorD(std::vector<TensorD>&)>& f,
                        std::vector<TensorD> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.set_requires_grad(true);
  TensorD out = f(inputs);
  if (out.numel() != 1) throw std::logic_error("gradcheck: function must return a scalar");
  for (auto& t : inputs) t.zero_grad();
  out.backward();

  double worst = 0.0;
  for (auto& t : inputs) {
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      const double keep = t.value()[i];
      t.value()[i] = keep + h;
      const double up = f(inputs).item();
      t.value()[i] = keep - h;
      const double dn = f(inputs).item();
      t.value()[i] = keep;
      const double numeric = (up - dn) / (2.0 * h);
      const double analytic = t.grad()[i];
      const double err = std::abs(analytic - numeric) /
                         std::max({1e-6, std::abs(analytic) + std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// FFT magnitude spectrum (zero-padded/truncated to nfft bins).
inline Eigen::ArrayXd spectrum(const IqSignal& signal, int nfft) {
  std::vector<std::complex<double>> in(nfft, {0.0, 0.0});
  const auto n = std::min<Eigen::Index>(signal.samples.size(), nfft);
  for (Eigen::Index k = 0; k < n; ++k) in[k] = signal.samples[k];
  std::vector<std::complex<double>> out(nfft);
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  Eigen::ArrayXd mag(nfft);
  for (int k = 0; k < nfft; ++k) mag[k] = std::abs(out[k]);
  return mag;
}

/// Frequency (Hz, in (-fs/2, fs/2]) of the strongest spectral bin.
inline double peak_freq(const IqSignal& signal, int nfft) {
  Eigen::ArrayXd mag = spectrum(signal, nfft);
  Eigen::Index arg = 0;
  mag.maxCoeff(&arg);
  double f = static_cast<double>(arg) / nfft * signal.sample_rate_hz;
  if (f > signal.sample_rate_hz / 2.0) f -= signal.sample_rate_hz;
  return f;
}

/// Two-sided Kolmogorov-Smirnov statistic of samples against a CDF.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

/// Critical KS value at significance alpha (asymptotic).
inline double ks_critical(std::size_t n, double alpha = 0.01) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

/// Unwrapped-phase instantaneous frequency estimate at sample k (Hz).
inline double instantaneous_freq(const IqSignal& signal, Eigen::Index k) {
  const auto d = signal.samples[k + 1] * std::conj(signal.samples[k]);
  return std::arg(d) * signal.sample_rate_hz / (2.0 * std::numbers::pi);
}

}  // namespace pulseclust::testutil
