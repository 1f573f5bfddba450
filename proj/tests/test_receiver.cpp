#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wlanfp/channel_sim.hpp"
#include "wlanfp/receiver.hpp"

using namespace wlanfp;

namespace {

const ModemConfig kCfg{};

BeaconPayload payload(const std::string& ssid = "TEST24", const std::string& mac = "C0-3F-0E-90-EE-13") {
  BeaconPayload p{ssid, MacAddress::parse(mac), 100, 0};
  p.body_padding = phy::padding_for_mpdu_bits(ssid.size(), 800);
  return p;
}

Waveform beacon(const BeaconPayload& p = payload()) {
  return dsss::modulate_ppdu(phy::assemble_ppdu(phy::encode_beacon_psdu(p)), kCfg);
}

/// Silence of `total` samples at the working rate with beacons placed at the given sample offsets.
Waveform timeline(std::size_t total, const std::vector<std::pair<std::size_t, Waveform>>& frames) {
  Waveform wf;
  wf.sample_rate = kCfg.working_rate();
  wf.samples.assign(total, Complex{});
  for (const auto& [at, f] : frames)
    for (std::size_t n = 0; n < f.size() && at + n < total; ++n) wf.samples[at + n] += f.samples[n];
  return wf;
}

Waveform add_noise(const Waveform& wf, double snr_db, std::uint64_t seed) {
  MultipathChannel ch;
  ch.snr_db = snr_db;
  ch.seed = seed;
  return channel::apply_channel(wf, ch, kCfg);
}

}  // namespace

TEST(FrameWindow, LengthArithmetic) {
  PlcpHeader h;
  h.length_bits = 800;
  EXPECT_EQ(rx::frame_window(h, kCfg), 992u * 11u * 2u);
  EXPECT_EQ(rx::frame_window(h, kCfg), 21824u);
  EXPECT_DOUBLE_EQ(static_cast<double>(rx::frame_window(h, kCfg)) / kCfg.working_rate(), 992e-6);
  h.length_bits = 0;
  EXPECT_EQ(rx::frame_window(h, kCfg), 4224u);
}

TEST(Rss, UnitSignalIsZeroDbAndHalfAmplitudeIsMinus6) {
  Waveform wf;
  wf.sample_rate = 22e6;
  for (int i = 0; i < 1000; ++i) wf.samples.push_back(std::polar(1.0, 0.01 * i));
  EXPECT_NEAR(rx::compute_rss(wf, 0, 1000), 0.0, 1e-12);
  for (auto& s : wf.samples) s *= 0.5;
  EXPECT_NEAR(rx::compute_rss(wf, 100, 800), -6.0206, 5e-5);
  EXPECT_NEAR(rx::compute_rss(wf, 100, 800), 20 * std::log10(0.5), 1e-12);
}

TEST(Rss, WindowChecks) {
  Waveform wf;
  wf.sample_rate = 22e6;
  wf.samples.assign(10, 1.0);
  EXPECT_THROW(rx::compute_rss(wf, 0, 0), InvalidArgument);
  EXPECT_THROW(rx::compute_rss(wf, 5, 6), InvalidArgument);
  EXPECT_THROW(rx::compute_rss(wf, 11, 1), InvalidArgument);
}

TEST(TapMagnitudes, ExamplesAndRotationInvariance) {
  ChannelEstimate e;
  e.taps[0] = 1.0;
  EXPECT_EQ(rx::tap_magnitudes(e), (std::array<double, 5>{1, 0, 0, 0, 0}));
  e.taps[0] = Complex(-1.90709, 2.842852);
  EXPECT_NEAR(rx::tap_magnitudes(e)[0], 3.4232733, 1e-6);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    ChannelEstimate a;
    for (auto& w : a.taps) w = Complex(g(rng), g(rng));
    auto b = a;
    const Complex rot = std::polar(1.0, g(rng));
    for (auto& w : b.taps) w *= rot;
    const auto ma = rx::tap_magnitudes(a), mb = rx::tap_magnitudes(b);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_GE(ma[k], 0.0);
      EXPECT_NEAR(ma[k], mb[k], 1e-12);
    }
  }
}

TEST(Decode, CleanBeaconAtWorkingRate) {
  const auto wf = timeline(40000, {{1234, beacon()}});
  const auto frames = rx::decode_frames(IqCapture::from_waveform(wf), kCfg);
  ASSERT_EQ(frames.size(), 1u);
  const auto& f = frames[0];
  EXPECT_EQ(f.payload, payload());
  EXPECT_EQ(f.sample.ssid, "TEST24");
  EXPECT_EQ(f.sample.mac.to_string(), "C0-3F-0E-90-EE-13");
  EXPECT_EQ(f.frame_start, 1234u);
  EXPECT_EQ(f.header.length_bits, 800);
  EXPECT_NEAR(f.sample.rss_db, rx::compute_rss(wf, 1234, 21824), 1e-9);
  EXPECT_NEAR(f.sample.rss_db, 0.0, 1e-9);
  EXPECT_NEAR(std::abs(f.estimate.taps[0] - Complex(1, 0)), 0.0, 1e-6);
}

TEST(Decode, EightyMsCaptureAt25MHzYieldsOneBeacon) {
  const std::size_t total = static_cast<std::size_t>(kCaptureSeconds * kCfg.working_rate());
  const auto wf = add_noise(timeline(total, {{22000 * 30, beacon()}}), 20.0, 5);
  const auto at25 = dsss::resample_rational(wf, kCaptureRate);
  const auto cap = IqCapture::from_waveform(at25);
  EXPECT_NEAR(cap.capture_seconds, 0.080, 1e-6);
  const auto samples = rx::decode_capture(cap, kCfg);
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].ssid, "TEST24");
  EXPECT_EQ(samples[0].mac, MacAddress::parse("C0-3F-0E-90-EE-13"));
}

TEST(Decode, NoiseOnlyCaptureIsEmpty) {
  const auto wf = add_noise(timeline(200000, {}), 0.0, 6);
  EXPECT_TRUE(rx::decode_capture(IqCapture::from_waveform(wf), kCfg).empty());
}

TEST(Decode, SecondBeaconBeyondEightyMsIsCutOff) {
  // 100 ms beacon interval: one frame at 0.3 ms, the next at 100.3 ms, capture cut at 80 ms.
  const std::size_t at = 6600, interval = 2200000;
  const std::size_t total = 1760000;
  auto wf = timeline(interval + at + 30000, {{at, beacon()}, {at + interval, beacon()}});
  wf.samples.resize(total);
  EXPECT_EQ(rx::decode_capture(IqCapture::from_waveform(wf), kCfg).size(), 1u);
}

TEST(Decode, TruncatedFrameIsSkipped) {
  auto wf = timeline(60000, {{1000, beacon()}, {40000, beacon(payload("TEST25", "44-94-FC-65-F7-BA"))}});
  const auto frames = rx::decode_frames(IqCapture::from_waveform(wf), kCfg);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].sample.ssid, "TEST24");
}

TEST(Decode, FramesComeOutInTimeOrder) {
  const auto wf = timeline(90000, {{500, beacon(payload("B"))}, {30000, beacon(payload("A"))}, {60000, beacon(payload("C"))}});
  const auto frames = rx::decode_frames(IqCapture::from_waveform(wf), kCfg);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].sample.ssid, "B");
  EXPECT_EQ(frames[1].sample.ssid, "A");
  EXPECT_EQ(frames[2].sample.ssid, "C");
  EXPECT_LT(frames[0].frame_start, frames[1].frame_start);
}

TEST(Decode, CorruptedPayloadIsDropped) {
  auto bits = phy::encode_beacon_psdu(payload());
  const auto ppdu = phy::assemble_ppdu(bits);
  auto symbols = dsss::dbpsk_encode(ppdu.air_bits());
  symbols[400] = static_cast<std::int8_t>(-symbols[400]);
  const auto bad = dsss::synthesize_waveform(dsss::barker_spread(symbols), kCfg);
  EXPECT_TRUE(rx::decode_capture(IqCapture::from_waveform(timeline(30000, {{100, bad}})), kCfg).empty());
}

TEST(Decode, TwoTapChannelAtThirtyDbDecodes) {
  const auto tx = beacon();
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    MultipathChannel ch;
    ch.taps = {1.0, Complex(0, 0.5)};
    ch.snr_db = 30;
    ch.seed = seed;
    ch.delay_samples = 300 + seed;
    ch.cfo_hz = 1000.0 * static_cast<double>(seed % 21) - 10000.0;
    const auto frames = rx::decode_frames(IqCapture::from_waveform(channel::apply_channel(tx, ch, kCfg)), kCfg);
    ok += frames.size() == 1 && frames[0].payload == payload();
  }
  EXPECT_GE(ok, 99);
}

TEST(Decode, RssShiftsExactlyWithAmplitude) {
  MultipathChannel ch;
  ch.taps = {0.7, Complex(0.2, 0.3)};
  ch.snr_db = 25;
  ch.seed = 3;
  ch.delay_samples = 500;
  const auto wf = channel::apply_channel(beacon(), ch, kCfg);
  const auto base = rx::decode_capture(IqCapture::from_waveform(wf), kCfg);
  ASSERT_EQ(base.size(), 1u);
  for (double g : {0.5, 0.01, 3.7}) {
    auto scaled = wf;
    for (auto& s : scaled.samples) s *= g;
    const auto out = rx::decode_capture(IqCapture::from_waveform(scaled), kCfg);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR(out[0].rss_db - base[0].rss_db, 20 * std::log10(g), 1e-9) << g;
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(out[0].taps_re[k], g * base[0].taps_re[k], 1e-9 * std::max(1.0, g));
  }
}

TEST(Decode, EstimateTracksFirstPath) {
  MultipathChannel ch;
  ch.taps = {0.6, 1.0, Complex(0, 0.4)};  // leading path above half the strongest
  ch.delay_samples = 777;
  const auto frames = rx::decode_frames(IqCapture::from_waveform(channel::apply_channel(beacon(), ch, kCfg)), kCfg);
  ASSERT_EQ(frames.size(), 1u);
  const auto& e = frames[0].estimate;
  // Inter-chip interference leaves a small CFO bias, which rotates the taps slightly.
  EXPECT_LT(std::abs(frames[0].cfo_hz), 50.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(e.taps[k] - ch.taps[k]), 0.0, 0.03) << k;
  for (std::size_t k = 3; k < 5; ++k) EXPECT_LT(std::abs(e.taps[k]), 1e-3) << k;
  EXPECT_EQ(frames[0].first_path, 777u);
}

TEST(Decode, DeterministicAcrossRuns) {
  const auto wf = add_noise(timeline(40000, {{900, beacon()}}), 15.0, 9);
  const auto a = rx::decode_capture(IqCapture::from_waveform(wf), kCfg);
  const auto b = rx::decode_capture(IqCapture::from_waveform(wf), kCfg);
  EXPECT_EQ(a, b);
}

TEST(Decode, MissingSampleRateRejected) {
  IqCapture cap;
  EXPECT_THROW(rx::decode_capture(cap, kCfg), InvalidArgument);
}

TEST(IqFiles, RoundTripIsFloatExact) {
  testutil::TempDir dir;
  Waveform wf;
  wf.sample_rate = kCaptureRate;
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  for (int i = 0; i < 2500; ++i) wf.samples.emplace_back(g(rng), g(rng));
  auto cap = IqCapture::from_waveform(wf, 2.437e9, 12.5);
  rx::write_iq_capture(cap, dir / "c.cf32", dir / "c.json");
  EXPECT_EQ(std::filesystem::file_size(dir / "c.cf32"), 2500u * 8u);
  const auto back = rx::read_iq_capture(dir / "c.cf32", dir / "c.json");
  EXPECT_EQ(back.waveform.samples, cap.waveform.samples);
  EXPECT_EQ(back.waveform.sample_rate, cap.waveform.sample_rate);
  EXPECT_EQ(back.center_freq, 2.437e9);
  EXPECT_EQ(back.gain_db, 12.5);
  EXPECT_EQ(back.capture_seconds, cap.capture_seconds);
}

TEST(IqFiles, LittleEndianFloatLayout) {
  testutil::TempDir dir;
  Waveform wf;
  wf.sample_rate = 22e6;
  wf.samples = {Complex(1.0, -2.0)};
  rx::write_iq_capture(IqCapture::from_waveform(wf), dir / "c.cf32", dir / "c.json");
  std::ifstream is(dir / "c.cf32", std::ios::binary);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)), {});
  EXPECT_EQ(raw, (std::vector<unsigned char>{0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0}));
}

TEST(IqFiles, TruncatedOrInconsistentFilesAreRejected) {
  testutil::TempDir dir;
  Waveform wf;
  wf.sample_rate = 25e6;
  wf.samples.assign(100, Complex(0.5, 0.5));
  rx::write_iq_capture(IqCapture::from_waveform(wf), dir / "c.cf32", dir / "c.json");
  std::filesystem::resize_file(dir / "c.cf32", 799);
  EXPECT_THROW(rx::read_iq_capture(dir / "c.cf32", dir / "c.json"), IoError);
  EXPECT_THROW(rx::read_iq_capture(dir / "missing.cf32", dir / "c.json"), IoError);
  EXPECT_THROW(rx::read_iq_capture(dir / "c.cf32", dir / "missing.json"), IoError);
  {
    std::ofstream m(dir / "bad.json");
    m << R"({"sample_rate": 25e6, "center_freq": 2.412e9, "capture_seconds": 1.0, "gain_db": 0, "sample_count": 100})";
  }
  EXPECT_THROW(rx::read_iq_capture(dir / "c.cf32", dir / "bad.json"), ParseError);
  {
    std::ofstream m(dir / "junk.json");
    m << "{";
  }
  EXPECT_THROW(rx::read_iq_capture(dir / "c.cf32", dir / "junk.json"), ParseError);
  {
    std::ofstream m(dir / "type.json");
    m << R"({"datatype": "ci16", "sample_rate": 25e6, "center_freq": 2.412e9, "capture_seconds": 4e-6, "gain_db": 0})";
  }
  EXPECT_THROW(rx::read_iq_capture(dir / "c.cf32", dir / "type.json"), ParseError);
}
