#include "qkdlink/detector_model.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qkdlink;

namespace {

LinkSpec quiet_link() {
  LinkSpec l;
  l.fiber = optics::FiberSpec{0.0, 0.0, 0.0};
  l.detector_z.jitter_sigma_ps = 0.0;
  l.detector_x.jitter_sigma_ps = 0.0;
  l.pulse = optics::fourier_limited_pulse(40.0, 1550.12);
  return l;
}

}  // namespace

TEST(Transmittance, Values) {
  EXPECT_DOUBLE_EQ(channel_transmittance({0, 0, 17}, 0.0), 1.0);
  EXPECT_NEAR(channel_transmittance({4.6, 9.4, 17}, 0.0), 0.1148, 1e-4);
  EXPECT_NEAR(channel_transmittance({0, 0, 17}, 40.0), 1.0e-4, 1e-15);
  EXPECT_EQ(channel_transmittance({0, INFINITY, 17}, 0.0), 0.0);
  EXPECT_THROW(channel_transmittance({0, -1, 17}, 0.0), std::invalid_argument);
}

TEST(Presets, DarkRates) {
  EXPECT_EQ(detector_preset("-50C").dark_rate_cps, 2000.0);
  EXPECT_EQ(detector_preset("-85C").dark_rate_cps, 77.0);
  EXPECT_THROW(detector_preset("-20C"), std::invalid_argument);
}

TEST(Events, BinFollowsOffset) {
  const optics::TimeBinGrid g;
  auto e = make_event(5, 399.0, Detector::z, Port::constructive, g);
  EXPECT_EQ(e.bin, Bin::early);
  auto l = make_event(5, 401.0, Detector::z, Port::constructive, g);
  EXPECT_EQ(l.bin, Bin::late);
  EXPECT_NEAR(l.time_offset_ps, 1.0, 1e-12);
  EXPECT_NEAR(time_between_ps(e, l, g), 2.0, 1e-12);
}

TEST(Propagate, VacuumGivesNothing) {
  Rng rng(1);
  auto link = quiet_link();
  EXPECT_TRUE(propagate(AmplitudePattern{}, 0, link, rng).empty());
}

TEST(Propagate, SingleZ0ClickProbability) {
  auto link = quiet_link();
  link.receiver.p_x_bob = 0.0;
  link.detector_z.efficiency = 1.0;
  Rng rng(11);
  const int shots = 1'000'000;
  int hits = 0;
  const AmplitudePattern z0{0.5, 0.0, 0.0};
  for (int i = 0; i < shots; ++i) {
    auto ev = propagate(z0, 0, link, rng);
    bool early = false;
    for (const auto& e : ev) early |= e.bin == Bin::early && e.detector == Detector::z;
    hits += early;
  }
  const double p = 1.0 - std::exp(-0.5 * std::pow(10.0, -2.17 / 10.0));
  EXPECT_NEAR(hits / double(shots), p, 4 * std::sqrt(p * (1 - p) / shots));
}

TEST(DarkCounts, PoissonCount) {
  const optics::TimeBinGrid g;
  Rng rng(3);
  std::vector<DetectionEvent> out;
  const std::uint64_t slots = 1'250'000'000ULL;  // 1 s
  inject_dark_counts(0, slots, Detector::z, detector_preset("-50C"), g, rng, out);
  EXPECT_NEAR(static_cast<double>(out.size()), 2000.0, 4 * std::sqrt(2000.0));
  for (const auto& e : out) EXPECT_LT(e.qubit_index, slots);
}

TEST(DeadTime, ZeroIsIdentity) {
  const optics::TimeBinGrid g;
  std::vector<DetectionEvent> ev;
  for (int i = 0; i < 50; ++i) ev.push_back(make_event(i, 10.0, Detector::z, Port::constructive, g));
  EXPECT_EQ(apply_dead_time(ev, 0.0), ev);
}

TEST(DeadTime, DropsWithinWindow) {
  const optics::TimeBinGrid g;
  // 5 us = 6250 slots.
  std::vector<DetectionEvent> ev{make_event(0, 0.0, Detector::z, Port::constructive, g),
                                 make_event(6250, 0.0, Detector::z, Port::constructive, g)};
  EXPECT_EQ(apply_dead_time(ev, 24.0).size(), 1u);
  EXPECT_EQ(apply_dead_time(ev, 4.0).size(), 2u);
}

TEST(DeadTime, PerDetector) {
  const optics::TimeBinGrid g;
  std::vector<DetectionEvent> ev{make_event(0, 0.0, Detector::z, Port::constructive, g),
                                 make_event(10, 0.0, Detector::x, Port::constructive, g),
                                 make_event(20, 0.0, Detector::z, Port::constructive, g)};
  auto out = apply_dead_time(ev, 1.0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].detector, Detector::x);
}

TEST(DeadTime, RejectsUnordered) {
  const optics::TimeBinGrid g;
  std::vector<DetectionEvent> ev{make_event(9, 0.0, Detector::z, Port::constructive, g),
                                 make_event(3, 0.0, Detector::z, Port::constructive, g)};
  EXPECT_THROW(apply_dead_time(ev, 1.0), std::invalid_argument);
}

TEST(DeadTime, NonParalyzableRate) {
  const optics::TimeBinGrid g;
  Rng rng(5);
  DetectorSpec d;
  d.dark_rate_cps = 200000.0;
  std::vector<DetectionEvent> ev;
  const std::uint64_t slots = 1'250'000'000ULL;
  inject_dark_counts(0, slots, Detector::z, d, g, rng, ev);
  std::sort(ev.begin(), ev.end(), event_precedes);
  const double tau = 10.0;
  auto kept = apply_dead_time(ev, tau, g);
  const double r = 200000.0;
  const double expected = r / (1.0 + r * tau * 1e-6);
  // Variance of a dead-time-filtered Poisson count: N / (1 + R tau)^2.
  const double sd = std::sqrt(expected / std::pow(1.0 + r * tau * 1e-6, 2));
  EXPECT_NEAR(static_cast<double>(kept.size()), expected, 3 * sd);
  for (std::size_t i = 1; i < kept.size(); ++i) EXPECT_GE(time_between_ps(kept[i - 1], kept[i], g), tau * 1e6);
}

TEST(Link, Validation) {
  LinkSpec l;
  EXPECT_NO_THROW(l.validate());
  l.device_qz_floor = 0.6;
  EXPECT_THROW(l.validate(), std::invalid_argument);
  l = {};
  l.receiver.p_x_bob = 1.5;
  EXPECT_THROW(l.validate(), std::invalid_argument);
  l = {};
  l.detector_z.efficiency = 2.0;
  EXPECT_THROW(l.validate(), std::invalid_argument);
}
