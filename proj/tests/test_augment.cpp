#include <doctest.h>

#include <numbers>

#include "pulseclust/augment.hpp"
#include "pulseclust/waveform.hpp"
#include "testutil.hpp"

using namespace pulseclust;

namespace {

IqSignal tone(double freq_hz, double fs, Eigen::Index n) {
  ComplexArray s(n);
  for (Eigen::Index k = 0; k < n; ++k)
    s[k] = std::polar(1.0, 2.0 * std::numbers::pi * freq_hz / fs * k);
  return {std::move(s), fs};
}

AugmentationPolicy single_transform(int which, double prob = 1.0) {
  AugmentationPolicy p = AugmentationPolicy::from_tier(AugmentationTier::kStrong);
  for (int i = 0; i < 6; ++i) p.probs[i] = 0.0;
  p.probs[which] = prob;
  return p;
}

}  // namespace

TEST_CASE("freq_offset identity and magnitude preservation") {
  IqSignal s = tone(10e6, 100e6, 1024);
  IqSignal same = freq_offset(s, 0.0, 0.0);
  CHECK((same.samples - s.samples).abs().maxCoeff() == doctest::Approx(0.0));

  IqSignal shifted = freq_offset(s, 5e6, 1.3);
  CHECK((shifted.samples.abs() - s.samples.abs()).abs().maxCoeff() < 1e-12);
  CHECK(shifted.samples.size() == s.samples.size());

  const double bin = 100e6 / 4096;
  CHECK(std::abs(testutil::peak_freq(shifted, 4096) - 15e6) <= bin + 1e-9);
}

TEST_CASE("add_noise_aug gamma=0 identity and determinism") {
  IqSignal s = tone(10e6, 100e6, 512);
  RandomSource rng(3);
  IqSignal same = add_noise_aug(s, 0.0, rng);
  CHECK((same.samples - s.samples).abs().maxCoeff() == doctest::Approx(0.0));

  RandomSource a(5), b(5);
  IqSignal oa = add_noise_aug(s, 0.7, a), ob = add_noise_aug(s, 0.7, b);
  CHECK((oa.samples == ob.samples).all());
  CHECK_THROWS_AS(add_noise_aug(s, -0.1, rng), std::invalid_argument);
}

TEST_CASE("policy noise power lands in the configured ratio band") {
  IqSignal s = tone(10e6, 100e6, 2048);
  AugmentationPolicy noise_only = single_transform(1);
  double lo = 1e9, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    RandomSource rng(derive_seed(1234, {static_cast<std::uint64_t>(i)}));
    IqSignal out = apply_policy(s, noise_only, rng, 2048);
    const double ratio = (out.samples - s.samples).abs2().mean();  // signal power is 1
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  // drawn ratios are uniform in [0.3679, 1.6487]; measurements add ~2%
  // estimation noise on 2048 samples
  CHECK(lo > 0.3679 * 0.88);
  CHECK(hi < 1.6487 * 1.12);
  CHECK(lo < 0.3679 * 1.15);  // draws reach down to the lower bound
  CHECK(hi > 1.6487 * 0.85);  // and up to the upper one
}

TEST_CASE("complex_conjugate involution and spectrum mirror") {
  IqSignal s = tone(10e6, 100e6, 1024);
  IqSignal twice = complex_conjugate(complex_conjugate(s));
  CHECK((twice.samples - s.samples).abs().maxCoeff() == doctest::Approx(0.0));

  ComplexArray real_vals = ComplexArray::Constant(64, std::complex<double>(0.7, 0.0));
  IqSignal real_sig{real_vals, 1e6};
  IqSignal conj_real = complex_conjugate(real_sig);
  CHECK((conj_real.samples - real_sig.samples).abs().maxCoeff() == doctest::Approx(0.0));

  const double bin = 100e6 / 4096;
  CHECK(std::abs(testutil::peak_freq(complex_conjugate(s), 4096) - (-10e6)) <= bin + 1e-9);

  // up-sweep LFM conjugates to a down-sweep at the negated carrier
  WaveformSpec spec;
  spec.wclass = WaveformClass::kLfm;
  spec.carrier_hz = 12e6;
  spec.pulse_width_s = 8e-6;
  spec.params.bandwidth_hz = 10e6;
  spec.params.sweep_direction = SweepDirection::kUp;
  IqSignal lfm = synthesize(spec);
  IqSignal flipped = complex_conjugate(lfm);
  CHECK(testutil::instantaneous_freq(flipped, 10) ==
        doctest::Approx(-testutil::instantaneous_freq(lfm, 10)).epsilon(1e-9));
  CHECK(testutil::instantaneous_freq(flipped, lfm.size() - 2) < -spec.carrier_hz);
}

TEST_CASE("time_mask boundary cases and policy draw range") {
  IqSignal s = tone(10e6, 100e6, 1024);
  IqSignal same = time_mask(s, 300, 300);
  CHECK((same.samples - s.samples).abs().maxCoeff() == doctest::Approx(0.0));

  IqSignal zeroed = time_mask(s, 0, 1024);
  CHECK(zeroed.samples.abs().maxCoeff() == doctest::Approx(0.0));

  CHECK_THROWS_AS(time_mask(s, 10, 5), std::invalid_argument);
  CHECK_THROWS_AS(time_mask(s, 0, 2000), std::invalid_argument);

  AugmentationPolicy mask_only = single_transform(3);
  for (int i = 0; i < 300; ++i) {
    RandomSource rng(derive_seed(77, {static_cast<std::uint64_t>(i)}));
    IqSignal out = apply_policy(s, mask_only, rng, 1024);
    Eigen::Index zeros = 0;
    for (Eigen::Index k = 0; k < 1024; ++k)
      if (std::abs(out.samples[k]) == 0.0) ++zeros;
    CHECK(zeros >= 100);
    CHECK(zeros <= 300);
  }
}

TEST_CASE("random_resample identity rate and frame padding rules") {
  // interior pulse with zero margins so edge transients see zeros
  ComplexArray buf = ComplexArray::Zero(1024);
  for (Eigen::Index k = 0; k < 700; ++k)
    buf[150 + k] = std::polar(1.0, 2.0 * std::numbers::pi * 0.08 * k);
  IqSignal s{buf, 100e6};

  IqSignal same = random_resample(s, 100e6, 1024);
  REQUIRE(same.samples.size() == 1024);
  const double rel =
      std::sqrt((same.samples - s.samples).abs2().sum() / s.samples.abs2().sum());
  CHECK(rel <= 1e-3);

  // halving the rate halves the pulse support before padding
  IqSignal half = random_resample(s, 50e6, 1024);
  REQUIRE(half.samples.size() == 1024);
  Eigen::Index support = 0;
  for (Eigen::Index k = 0; k < 1024; ++k)
    if (std::abs(half.samples[k]) > 1e-3) ++support;
  CHECK(support > 300);
  CHECK(support < 400);  // ~350 of the original ~700

  // tone frequency survives a 100 -> 150 -> 100 MHz round trip
  IqSignal up = random_resample(s, 150e6, 1536);
  IqSignal back{up.samples, 150e6};
  IqSignal round = random_resample(back, 100e6, 1024);
  const double bin = 100e6 / 4096;
  CHECK(std::abs(testutil::peak_freq(round, 4096) - testutil::peak_freq(s, 4096)) <= bin + 1e-9);
}

TEST_CASE("clarke fading gain statistics") {
  // E|h|^2 == 1 over one million samples spread across realizations
  double acc = 0.0;
  Eigen::Index count = 0;
  for (int r = 0; r < 100; ++r) {
    RandomSource rng(derive_seed(100, {static_cast<std::uint64_t>(r)}));
    ComplexArray h = clarke_fading(10000, 1e5, 500.0, 32, rng);
    acc += h.abs2().sum();
    count += h.size();
  }
  CHECK(acc / count == doctest::Approx(1.0).epsilon(0.05));

  // |h| is Rayleigh(sigma = 1/sqrt(2)): KS test at alpha = 0.01
  std::vector<double> mags(100000);
  for (std::size_t i = 0; i < mags.size(); ++i) {
    RandomSource rng(derive_seed(200, {static_cast<std::uint64_t>(i)}));
    ComplexArray h = clarke_fading(1, 1e5, 500.0, 32, rng);
    mags[i] = std::abs(h[0]);
  }
  const double d = testutil::ks_statistic(mags, [](double r) { return 1.0 - std::exp(-r * r); });
  CHECK(d < testutil::ks_critical(mags.size(), 0.01));
}

TEST_CASE("zero Doppler freezes the fading gain") {
  IqSignal s = tone(1e6, 100e6, 256);
  RandomSource rng(9);
  IqSignal out = rayleigh_fade(s, 0.0, 32, rng);
  const std::complex<double> gain = out.samples[0] / s.samples[0];
  for (Eigen::Index k = 0; k < s.samples.size(); ++k)
    CHECK(std::abs(out.samples[k] - gain * s.samples[k]) < 1e-12);
}

TEST_CASE("policy tiers carry the configured selection probabilities") {
  auto weak = AugmentationPolicy::from_name("weak");
  const double weak_expect[6] = {0.5, 0.5, 0.5, 0.5, 0.0, 0.0};
  auto moderate = AugmentationPolicy::from_name("moderate");
  const double moderate_expect[6] = {0.5, 1.0, 0.5, 0.5, 0.3, 0.3};
  auto strong = AugmentationPolicy::from_name("strong");
  const double strong_expect[6] = {0.5, 1.0, 0.5, 0.5, 0.5, 0.5};
  for (int i = 0; i < 6; ++i) {
    CHECK(weak.probs[i] == weak_expect[i]);
    CHECK(moderate.probs[i] == moderate_expect[i]);
    CHECK(strong.probs[i] == strong_expect[i]);
  }
  CHECK_THROWS_AS(AugmentationPolicy::from_name("extreme"), std::invalid_argument);
}

TEST_CASE("apply_policy degenerate and deterministic behavior") {
  IqSignal s = tone(10e6, 100e6, 1024);

  AugmentationPolicy none = AugmentationPolicy::from_tier(AugmentationTier::kStrong);
  for (double& p : none.probs) p = 0.0;
  RandomSource rng(1);
  IqSignal out = apply_policy(s, none, rng, 1024);
  CHECK((out.samples - s.samples).abs().maxCoeff() == doctest::Approx(0.0));

  auto strong = AugmentationPolicy::from_name("strong");
  RandomSource a(33), b(33);
  IqSignal oa = apply_policy(s, strong, a, 1024);
  IqSignal ob = apply_policy(s, strong, b, 1024);
  CHECK((oa.samples == ob.samples).all());
  CHECK(oa.samples.size() == 1024);

  // frame length is preserved for every tier over many seeds
  for (int i = 0; i < 50; ++i) {
    RandomSource r2(derive_seed(55, {static_cast<std::uint64_t>(i)}));
    CHECK(apply_policy(s, strong, r2, 1024).samples.size() == 1024);
  }
}

namespace {

/// Matched-filter classifier over a small template bank: max |xcorr| over
/// lags, candidate frequency offsets and conjugation.
int matched_filter_argmax(const IqSignal& x, const std::vector<IqSignal>& templates) {
  Eigen::FFT<double> fft;
  const int nfft = 2048;
  auto to_freq = [&](const ComplexArray& v) {
    std::vector<std::complex<double>> in(nfft, {0.0, 0.0});
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(v.size(), nfft); ++k) in[k] = v[k];
    std::vector<std::complex<double>> out(nfft);
    fft.fwd(out, in);
    return out;
  };
  const auto xf = to_freq(x.samples);

  int best_class = -1;
  double best_score = -1.0;
  for (std::size_t c = 0; c < templates.size(); ++c) {
    for (int conj_flag = 0; conj_flag < 2; ++conj_flag) {
      for (double f0 = -10e6; f0 <= 10e6; f0 += 1e6) {
        IqSignal t = freq_offset(templates[c], f0, 0.0);
        if (conj_flag) t = complex_conjugate(t);
        const auto tf = to_freq(t.samples);
        std::vector<std::complex<double>> prod(nfft), corr(nfft);
        for (int k = 0; k < nfft; ++k) prod[k] = xf[k] * std::conj(tf[k]);
        fft.inv(corr, prod);
        double peak = 0.0;
        for (int k = 0; k < nfft; ++k) peak = std::max(peak, std::abs(corr[k]));
        if (peak > best_score) {
          best_score = peak;
          best_class = static_cast<int>(c);
        }
      }
    }
  }
  return best_class;
}

}  // namespace

TEST_CASE("label-preserving transforms keep the matched-filter argmax") {
  RandomSource rng(8);
  std::vector<IqSignal> bank;
  std::vector<WaveformClass> classes = {WaveformClass::kLfm, WaveformClass::kBpskBarker,
                                        WaveformClass::kFsk2, WaveformClass::kCostasFm};
  for (auto c : classes) {
    auto spec = draw_spec(c, rng);
    bank.push_back(synthesize(spec));
  }
  for (std::size_t c = 0; c < bank.size(); ++c) {
    REQUIRE(matched_filter_argmax(bank[c], bank) == static_cast<int>(c));

    IqSignal offset = freq_offset(bank[c], 3e6, 0.8);
    CHECK(matched_filter_argmax(offset, bank) == static_cast<int>(c));

    IqSignal conj = complex_conjugate(bank[c]);
    CHECK(matched_filter_argmax(conj, bank) == static_cast<int>(c));

    IqSignal masked = time_mask(bank[c], 100, 300);
    CHECK(matched_filter_argmax(masked, bank) == static_cast<int>(c));
  }
}
