#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "neosleep/baseline/envelope.hpp"

namespace bl = neosleep::baseline;
namespace sst = neosleep::sst;
using neosleep::Errc;
using neosleep::Error;
using neosleep::SleepLabel;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> tone(double amp, double hz, double fs, double seconds, double phase = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(fs * seconds));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2 * kPi * hz * i / fs + phase);
  return x;
}

sst::SstTrace trace_of(const std::vector<double>& p) {
  sst::SstTrace tr;
  for (std::size_t e = 0; e < p.size(); ++e) {
    sst::SstPoint pt;
    pt.epoch_index = static_cast<int>(e);
    pt.p_mean = pt.p_min = pt.p_max = pt.p_smoothed = p[e];
    pt.decision = p[e] >= 0.5 ? sst::Decision::QS : sst::Decision::AS;
    tr.points.push_back(pt);
  }
  return tr;
}

}  // namespace

TEST(Envelope, PureToneIsFlat) {
  const double fs = 64;
  for (double phase : {0.0, 0.7, 1.9, 4.0}) {
    const auto env = bl::analytic_envelope(tone(5, 10, fs, 60, phase), fs);
    for (std::size_t i = 65; i + 65 < env.size(); ++i) ASSERT_NEAR(env[i], 5.0, 0.02 * 5.0) << i << " " << phase;
  }
}

TEST(Envelope, ZeroSignal) {
  for (double v : bl::analytic_envelope(std::vector<double>(640, 0.0), 64)) EXPECT_EQ(v, 0.0);
}

TEST(Envelope, TooShort) {
  try {
    bl::analytic_envelope(std::vector<double>(63, 1.0), 64);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_short);
  }
}

TEST(Envelope, BeatEnvelope) {
  const double fs = 64;
  auto x = tone(3, 8, fs, 60);
  const auto y = tone(4, 12, fs, 60);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  const auto env = bl::analytic_envelope(x, fs);
  const auto [lo, hi] = std::minmax_element(env.begin() + 64, env.end() - 64);
  EXPECT_NEAR(*hi, 7.0, 0.07);
  EXPECT_NEAR(*lo, 1.0, 0.05);
}

TEST(Envelope, BoundsSignalAndScales) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 20);
  std::vector<double> x(1000);
  for (auto& v : x) v = n(rng);
  const auto mag = bl::analytic_magnitude(x);
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_GE(mag[i], std::abs(x[i]) - 1e-9 * peak);

  // odd length exercises the no-Nyquist branch
  std::vector<double> odd(x.begin(), x.begin() + 999);
  const auto m_odd = bl::analytic_magnitude(odd);
  for (std::size_t i = 0; i < odd.size(); ++i) EXPECT_GE(m_odd[i], std::abs(odd[i]) - 1e-9 * peak);

  const auto e1 = bl::analytic_envelope(x, 64);
  std::vector<double> x3(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x3[i] = 3 * x[i];
  const auto e3 = bl::analytic_envelope(x3, 64);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(e3[i], 3 * e1[i], 1e-9 * (1 + e3[i]));
}

TEST(Features, ConstantToneAndPartialMinute) {
  const double fs = 64;
  const auto f = bl::envelope_features(tone(5, 10, fs, 150), fs);
  ASSERT_EQ(f.size(), 2u);
  // interior minute has no filter edge
  EXPECT_NEAR(f[1].env_mean_uv, 5.0, 0.05);
  EXPECT_LT(f[1].env_std_uv, 0.05);
}

TEST(Features, SquareAmplitudeModulation) {
  const double fs = 64;
  auto x = tone(1, 10, fs, 180);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= std::fmod(i / fs, 10.0) < 5.0 ? 10.0 : 2.0;
  const auto f = bl::envelope_features(x, fs);
  ASSERT_EQ(f.size(), 3u);
  for (const auto& e : f) {
    EXPECT_NEAR(e.env_mean_uv, 6.0, 0.01 * 6.0);
    EXPECT_NEAR(e.env_std_uv, 4.0, 0.04);  // half at 10, half at 2
  }
}

TEST(Features, DoublingAmplitudeDoublesMean) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 10);
  std::vector<double> x(64 * 120), x2(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x2[i] = 2 * (x[i] = n(rng));
  const auto a = bl::envelope_features(x, 64), b = bl::envelope_features(x2, 64);
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_NEAR(b[e].env_mean_uv, 2 * a[e].env_mean_uv, 1e-12 * b[e].env_mean_uv);
}

TEST(Compare, AffineFeaturesCorrelatePerfectly) {
  std::vector<double> p{0.1, 0.7, 0.3, 0.9, 0.5, 0.2};
  std::vector<bl::EnvelopeFeatures> f;
  for (double v : p) f.push_back({4 + 10 * v, 3 - 2 * v});
  const auto c = bl::compare_to_sst(f, trace_of(p));
  EXPECT_NEAR(c.pearson_mean, 1.0, 1e-12);
  EXPECT_NEAR(c.pearson_std, -1.0, 1e-12);
  EXPECT_FALSE(c.roc_mean);
}

TEST(Compare, ShuffledFeaturesAreNearChance) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(1000);
  std::vector<SleepLabel> truth(1000);
  std::vector<bl::EnvelopeFeatures> f(1000);
  for (int i = 0; i < 1000; ++i) {
    truth[i] = i % 3 == 0 ? SleepLabel::QS : SleepLabel::AS;
    p[i] = u(rng);
    f[i] = {10 + 20 * (truth[i] == SleepLabel::QS) + u(rng), u(rng)};
  }
  // informative before shuffling, chance after
  EXPECT_EQ(*bl::compare_to_sst(f, trace_of(p), truth).roc_mean, 1.0);
  std::shuffle(f.begin(), f.end(), rng);
  const auto c = bl::compare_to_sst(f, trace_of(p), truth);
  EXPECT_NEAR(*c.roc_mean, 0.5, 0.05);
  EXPECT_NEAR(*c.roc_std, 0.5, 0.05);
}

TEST(Compare, LengthMismatch) {
  std::vector<bl::EnvelopeFeatures> f(3);
  try {
    bl::compare_to_sst(f, trace_of({0.1, 0.2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::length_mismatch);
  }
}

TEST(Features, Csv) {
  std::ostringstream out;
  const std::vector<bl::EnvelopeFeatures> f{{1.5, 0.25}};
  bl::write_features_csv(out, f);
  EXPECT_EQ(out.str(), "epoch_index,env_mean_uv,env_std_uv\n0,1.5,0.25\n");
}
