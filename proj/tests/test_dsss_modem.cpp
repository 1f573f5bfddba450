#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "test_util.hpp"
#include "wlanfp/channel_sim.hpp"
#include "wlanfp/dsss_modem.hpp"

using namespace wlanfp;

namespace {

const ModemConfig kCfg{};

Waveform tone(double f, double fs, std::size_t n) {
  Waveform wf;
  wf.sample_rate = fs;
  for (std::size_t i = 0; i < n; ++i)
    wf.samples.push_back(std::polar(1.0, 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs));
  return wf;
}

Waveform noisy(const Waveform& wf, double snr_db, std::uint64_t seed, double cfo_hz = 0.0, std::size_t delay = 0) {
  MultipathChannel ch;
  ch.snr_db = snr_db;
  ch.seed = seed;
  ch.cfo_hz = cfo_hz;
  ch.delay_samples = delay;
  return channel::apply_channel(wf, ch, kCfg);
}

Waveform random_frame(std::mt19937_64& rng, std::size_t psdu_bits = 200) {
  return dsss::modulate_ppdu(phy::assemble_ppdu(testutil::random_bits(rng, psdu_bits)), kCfg);
}

Waveform pad_front(const Waveform& wf, std::size_t n) {
  Waveform out = wf;
  out.samples.insert(out.samples.begin(), n, Complex{});
  return out;
}

}  // namespace

TEST(Dbpsk, SpecExamples) {
  const Bits zeros{0, 0, 0}, ones{1, 1};
  EXPECT_EQ(dsss::dbpsk_encode(zeros), (Symbols{1, 1, 1}));
  EXPECT_EQ(dsss::dbpsk_encode(ones), (Symbols{-1, 1}));
  EXPECT_EQ(dsss::dbpsk_encode(ones, -1), (Symbols{1, -1}));
}

TEST(Dbpsk, DecodeInvertsEncode) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 1000; ++t) {
    const auto x = testutil::random_bits(rng, rng() % 300);
    const std::int8_t init = rng() & 1 ? 1 : -1;
    ASSERT_EQ(dsss::dbpsk_decode(dsss::dbpsk_encode(x, init), init), x);
  }
}

TEST(Barker, SpreadLengthAndNegation) {
  const Symbols plus{1}, minus{-1};
  const auto a = dsss::barker_spread(plus), b = dsss::barker_spread(minus);
  ASSERT_EQ(a.size(), 11u);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_EQ(a[i], -b[i]);
  EXPECT_TRUE(std::equal(a.begin(), a.end(), kBarker11.begin()));
  EXPECT_EQ(dsss::barker_spread(Symbols(7, 1)).size(), 77u);
}

TEST(Barker, AutocorrelationPeakElevenSidelobesAtMostOne) {
  const auto r = oracle::aperiodic_autocorrelation(kBarker11);
  EXPECT_EQ(r[0], 11);
  for (std::size_t lag = 1; lag < r.size(); ++lag) EXPECT_LE(std::abs(r[lag]), 1) << lag;
}

TEST(Synthesis, LengthRateAndPower) {
  const Chips eleven(11, 1);
  const auto wf = dsss::synthesize_waveform(eleven, kCfg);
  EXPECT_EQ(wf.size(), 22u);
  EXPECT_DOUBLE_EQ(wf.sample_rate, 22e6);
  for (auto s : wf.samples) EXPECT_EQ(s, Complex(1.0, 0.0));

  std::mt19937_64 rng(4);
  Chips chips(1000);
  for (auto& c : chips) c = rng() & 1 ? 1 : -1;
  const auto w2 = dsss::synthesize_waveform(chips, kCfg);
  double p = 0;
  for (auto s : w2.samples) p += std::norm(s);
  EXPECT_DOUBLE_EQ(p / static_cast<double>(w2.size()), 1.0);
}

TEST(MatchedFilter, CleanChipsComeOutAtUnitAmplitude) {
  std::mt19937_64 rng(8);
  Chips chips(200);
  for (auto& c : chips) c = rng() & 1 ? 1 : -1;
  const auto mf = dsss::matched_filter(dsss::synthesize_waveform(chips, kCfg), kCfg);
  ASSERT_EQ(mf.size(), 400u);
  for (std::size_t i = 0; i < chips.size(); ++i) EXPECT_NEAR(std::abs(mf.samples[2 * i] - Complex(chips[i], 0)), 0.0, 1e-12);
}

TEST(MatchedFilter, WhiteNoiseVarianceDropsBySamplesPerChip) {
  Waveform wf;
  wf.sample_rate = kCfg.working_rate();
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  for (int i = 0; i < 100000; ++i) wf.samples.emplace_back(g(rng), g(rng));
  const auto mf = dsss::matched_filter(wf, kCfg);
  double in = 0, out = 0;
  for (std::size_t i = 0; i < wf.size(); ++i) in += std::norm(wf.samples[i]), out += std::norm(mf.samples[i]);
  EXPECT_NEAR(in / out, 2.0, 0.05);
}

TEST(MatchedFilter, LinearAndRateChecked) {
  std::mt19937_64 rng(10);
  const auto wf = random_frame(rng, 16);
  const Complex a(0.3, -1.7);
  Waveform scaled = wf;
  for (auto& s : scaled.samples) s *= a;
  const auto m1 = dsss::matched_filter(wf, kCfg), m2 = dsss::matched_filter(scaled, kCfg);
  for (std::size_t i = 0; i < wf.size(); ++i) EXPECT_NEAR(std::abs(m2.samples[i] - a * m1.samples[i]), 0.0, 1e-12);
  Waveform wrong = wf;
  wrong.sample_rate = 25e6;
  EXPECT_THROW(dsss::matched_filter(wrong, kCfg), InvalidArgument);
}

TEST(Resampler, LengthFollowsRatio) {
  for (std::size_t n : {1000u, 2000000u / 100u, 12345u}) {
    const auto out = dsss::resample_rational(tone(1e6, 25e6, n), 22e6);
    EXPECT_EQ(out.size(), static_cast<std::size_t>(std::llround(static_cast<double>(n) * 22.0 / 25.0))) << n;
    EXPECT_DOUBLE_EQ(out.sample_rate, 22e6);
  }
}

TEST(Resampler, SameRateIsIdentity) {
  const auto in = tone(3e6, 22e6, 500);
  const auto out = dsss::resample_rational(in, 22e6);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_LT(std::abs(out.samples[i] - in.samples[i]), 1e-9);
}

TEST(Resampler, ToneFrequencyPreservedByDtftOracle) {
  const auto out = dsss::resample_rational(tone(1e6, 25e6, 25000), 22e6);
  // Skip filter edges.
  const std::vector<Complex> mid(out.samples.begin() + 200, out.samples.end() - 200);
  EXPECT_NEAR(oracle::dtft_peak_hz(mid, 22e6, 0.9e6, 1.1e6), 1e6, 1.0);
}

TEST(Resampler, RoundTripKeepsToneFrequency) {
  const auto there = dsss::resample_rational(tone(-2.5e6, 25e6, 25000), 22e6);
  const auto back = dsss::resample_rational(there, 25e6);
  const std::vector<Complex> mid(back.samples.begin() + 300, back.samples.end() - 300);
  EXPECT_NEAR(oracle::dtft_peak_hz(mid, 25e6, -2.6e6, -2.4e6), -2.5e6, 1.0);
}

TEST(Resampler, RejectsAwkwardRatios) {
  EXPECT_THROW(dsss::resample_rational(tone(1e6, 25e6, 100), 22e6 * std::numbers::pi), InvalidArgument);
  EXPECT_THROW(dsss::resample_rational(tone(1e6, 25e6, 100), 22000001.0), InvalidArgument);
  EXPECT_THROW(dsss::resample_rational(tone(1e6, 25e6, 100), 0.0), InvalidArgument);
}

TEST(Cfo, CorrectionInvertsAndZeroIsIdentity) {
  std::mt19937_64 rng(12);
  const auto wf = random_frame(rng, 40);
  const auto back = dsss::apply_cfo_correction(dsss::apply_cfo_correction(wf, 7e3), -7e3);
  for (std::size_t i = 0; i < wf.size(); ++i) EXPECT_LT(std::abs(back.samples[i] - wf.samples[i]), 1e-12);
  EXPECT_EQ(dsss::apply_cfo_correction(wf, 0.0).samples, wf.samples);
}

TEST(Cfo, ZeroOffsetAtThirtyDb) {
  std::mt19937_64 rng(13);
  const auto rx = noisy(random_frame(rng), 30.0, 1);
  EXPECT_LT(std::abs(dsss::estimate_coarse_cfo(rx, kCfg, {0, 128 * 22})), 50.0);
}

TEST(Cfo, InjectedOffsetsRecoveredWithinHundredHz) {
  std::mt19937_64 rng(14);
  const auto clean = random_frame(rng);
  for (double f : {10e3, -25e3}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto rx = noisy(clean, 20.0, seed, f);
      ASSERT_NEAR(dsss::estimate_coarse_cfo(rx, kCfg, {0, 128 * 22}), f, 100.0) << "seed " << seed;
    }
  }
}

TEST(Cfo, EstimateIsOddInInjectedOffset) {
  std::mt19937_64 rng(15);
  const auto clean = random_frame(rng);
  for (double f : {3e3, 40e3, 150e3}) {
    const double up = dsss::estimate_coarse_cfo(noisy(clean, 20.0, 1, f), kCfg, {0, 128 * 22});
    const double down = dsss::estimate_coarse_cfo(noisy(clean, 20.0, 2, -f), kCfg, {0, 128 * 22});
    EXPECT_LT(std::abs(up + down), 200.0) << f;
  }
}

TEST(Cfo, CorrectedFrameHasLittlePhaseDrift) {
  std::mt19937_64 rng(16);
  const auto rx = noisy(random_frame(rng, 800), 30.0, 3, 10e3);
  const double est = dsss::estimate_coarse_cfo(rx, kCfg, {0, 128 * 22});
  const auto fixed = dsss::apply_cfo_correction(rx, est);
  const auto r = dsss::despread_dbpsk_decode(fixed, 0, kCfg, 992);
  // Strip modulation with the decided sign, then compare the first and last 64 symbols.
  auto mean_phase = [&](std::size_t from) {
    Complex acc{};
    for (std::size_t m = from; m < from + 64; ++m) acc += r.soft[m].real() < 0 ? -r.soft[m] : r.soft[m];
    return std::arg(acc);
  };
  EXPECT_LT(std::abs(mean_phase(992 - 64) - mean_phase(0)), 0.1);
}

TEST(Cfo, ShortSpanRejected) {
  std::mt19937_64 rng(17);
  EXPECT_THROW(dsss::estimate_coarse_cfo(random_frame(rng), kCfg, {0, 7 * 22}), InvalidArgument);
}

TEST(Acquisition, CleanFrameAtKnownOffset) {
  std::mt19937_64 rng(18);
  const auto det = dsss::code_phase_search(pad_front(random_frame(rng), 137), kCfg);
  EXPECT_TRUE(det.found);
  EXPECT_EQ(det.offset, 137u);
  EXPECT_GT(det.peak, 0.99);
}

TEST(Acquisition, NoiseRarelyTriggers) {
  for (double threshold : {0.6, kCfg.detection_threshold}) {
    ModemConfig cfg;
    cfg.detection_threshold = threshold;
    int false_alarms = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Waveform silence;
      silence.sample_rate = cfg.working_rate();
      silence.samples.assign(20000, Complex{});
      if (dsss::code_phase_search(noisy(silence, 0.0, seed), cfg).found) ++false_alarms;
    }
    EXPECT_LE(false_alarms, 1) << threshold;
  }
}

TEST(Acquisition, TwoFramesReportTheEarliest) {
  std::mt19937_64 rng(19);
  auto a = pad_front(random_frame(rng), 301);
  const auto b = random_frame(rng);
  a.samples.insert(a.samples.end(), 500, Complex{});
  a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
  const auto det = dsss::code_phase_search(a, kCfg);
  EXPECT_TRUE(det.found);
  EXPECT_EQ(det.offset, 301u);
}

TEST(Despread, NoiselessLoopbackIsExact) {
  std::mt19937_64 rng(20);
  for (int t = 0; t < 50; ++t) {
    const auto ppdu = phy::assemble_ppdu(testutil::random_bits(rng, 8 * (1 + rng() % 100)));
    const auto wf = dsss::modulate_ppdu(ppdu, kCfg);
    ASSERT_EQ(dsss::despread_dbpsk_decode(wf, 0, kCfg, ppdu.total_bits()).bits, ppdu.air_bits());
  }
}

TEST(Despread, SymbolFlipFlipsTwoAdjacentBits) {
  std::mt19937_64 rng(22);
  const auto bits = testutil::random_bits(rng, 100);
  auto symbols = dsss::dbpsk_encode(bits);
  symbols[40] = static_cast<std::int8_t>(-symbols[40]);
  const auto wf = dsss::synthesize_waveform(dsss::barker_spread(symbols), kCfg);
  const auto out = dsss::despread_dbpsk_decode(wf, 0, kCfg, 100).bits;
  for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(out[k] != bits[k], k == 40 || k == 41) << k;
}

TEST(Despread, TooShortIsAnError) {
  std::mt19937_64 rng(23);
  const auto wf = random_frame(rng, 8);
  EXPECT_THROW(dsss::despread_dbpsk_decode(wf, 0, kCfg, 201), InvalidArgument);
  EXPECT_THROW(dsss::despread_dbpsk_decode(wf, wf.size() + 1, kCfg, 0), InvalidArgument);
}

TEST(Despread, LowSnrBerFollowsTheoreticalCurve) {
  // Eb/N0 = 22 * SNR for 22 unit-power samples per bit; -12 dB keeps errors countable.
  const double snr_db = -12.0;
  const double ebn0 = 22.0 * std::pow(10.0, snr_db / 10.0);
  std::mt19937_64 rng(24);
  std::size_t errors = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto bits = testutil::random_bits(rng, 5000);
    const auto wf = dsss::synthesize_waveform(dsss::barker_spread(dsss::dbpsk_encode(bits)), kCfg);
    const auto out = dsss::despread_dbpsk_decode(noisy(wf, snr_db, seed), 0, kCfg, bits.size()).bits;
    for (std::size_t k = 1; k < bits.size(); ++k) errors += out[k] != bits[k], ++total;
  }
  const double ber = static_cast<double>(errors) / static_cast<double>(total);
  EXPECT_NEAR(ber, oracle::dbpsk_ber(ebn0), 0.2 * oracle::dbpsk_ber(ebn0));
}

TEST(Modem, DeterministicOutputs) {
  std::mt19937_64 r1(25), r2(25);
  EXPECT_EQ(random_frame(r1).samples, random_frame(r2).samples);
  std::mt19937_64 r3(26);
  const auto wf = random_frame(r3);
  EXPECT_EQ(noisy(wf, 5.0, 9).samples, noisy(wf, 5.0, 9).samples);
}

TEST(Cfo, FineStageRemovesMultipathBias) {
  std::mt19937_64 rng(27);
  const auto tx = random_frame(rng);
  MultipathChannel ch;
  ch.taps = {0.6, 1.0, Complex(0, 0.4)};
  ch.cfo_hz = 12e3;
  const auto rx = channel::apply_channel(tx, ch, kCfg);
  const SampleSpan sync{2, 128 * 22};  // strongest path
  const double coarse = dsss::estimate_coarse_cfo(rx, kCfg, sync);
  const double fine = coarse + dsss::estimate_fine_cfo(dsss::apply_cfo_correction(rx, coarse), kCfg, sync);
  EXPECT_LT(std::abs(fine - 12e3), std::abs(coarse - 12e3));
  EXPECT_NEAR(fine, 12e3, 50.0);
  EXPECT_THROW(dsss::estimate_fine_cfo(rx, kCfg, sync, 0), InvalidArgument);
  EXPECT_THROW(dsss::estimate_fine_cfo(rx, kCfg, {2, 40 * 22}, 33), InvalidArgument);
}
