#include "qkdlink/distillation/bits.hpp"
#include "qkdlink/distillation/cascade.hpp"
#include "qkdlink/distillation/decoy.hpp"
#include "qkdlink/distillation/toeplitz.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qkdlink;
using namespace qkdlink::distill;

namespace {

Bits random_bits(Rng& rng, std::size_t n) {
  Bits b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 1u);
  return b;
}

Bits with_errors(const Bits& a, double q, Rng& rng) {
  Bits b = a;
  std::bernoulli_distribution err(q);
  for (auto& x : b)
    if (err(rng)) x ^= 1u;
  return b;
}

}  // namespace

TEST(Entropy, Values) {
  EXPECT_EQ(binary_entropy(0.0), 0.0);
  EXPECT_EQ(binary_entropy(1.0), 0.0);
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
  EXPECT_NEAR(binary_entropy(0.02), 0.14144054254182, 1e-13);
  for (double p : {0.01, 0.13, 0.27, 0.4}) EXPECT_NEAR(binary_entropy(p), binary_entropy(1 - p), 1e-15);
  EXPECT_THROW(binary_entropy(-0.1), std::invalid_argument);
  EXPECT_THROW(binary_entropy(1.5), std::invalid_argument);
}

TEST(Fenwick, MatchesDirectParity) {
  Rng rng(3);
  auto bits = random_bits(rng, 1000);
  XorFenwick f(bits);
  for (int round = 0; round < 200; ++round) {
    const auto i = bounded_draw(rng, bits.size());
    bits[i] ^= 1u;
    f.flip(i);
    const auto b = bounded_draw(rng, bits.size());
    const auto e = b + bounded_draw(rng, bits.size() - b + 1);
    std::uint8_t p = 0;
    for (auto k = b; k < e; ++k) p ^= bits[k];
    ASSERT_EQ(f.range(b, e), p);
  }
}

TEST(Toeplitz, BruteForce8x16) {
  Rng rng(5);
  const std::uint64_t seed = 0xC0FFEE;
  const auto r = toeplitz_diagonals(seed, 16, 8);
  auto diag = [&](std::size_t k) { return static_cast<std::uint8_t>((r[k / 64] >> (k % 64)) & 1u); };
  for (int trial = 0; trial < 50; ++trial) {
    const auto key = random_bits(rng, 16);
    Bits expected(8, 0);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 16; ++j) expected[i] ^= diag(i + 15 - j) & key[j];
    EXPECT_EQ(toeplitz_hash(key, 8, seed), expected);
  }
  // Diagonal bits beyond n + l - 1 are zero.
  for (std::size_t k = 23; k < 64; ++k) EXPECT_EQ(diag(k), 0);
}

TEST(Toeplitz, Linearity) {
  Rng rng(6);
  for (std::size_t n : {1u, 63u, 64u, 65u, 200u, 517u}) {
    for (std::size_t l : {std::size_t{1}, n / 2 + 1, n}) {
      const auto a = random_bits(rng, n), b = random_bits(rng, n);
      Bits ab(n);
      for (std::size_t i = 0; i < n; ++i) ab[i] = a[i] ^ b[i];
      const auto ha = toeplitz_hash(a, l, 99), hb = toeplitz_hash(b, l, 99), hab = toeplitz_hash(ab, l, 99);
      for (std::size_t i = 0; i < l; ++i) ASSERT_EQ(hab[i], ha[i] ^ hb[i]) << n << " " << l;
    }
  }
}

TEST(Toeplitz, MonobitAndEdges) {
  Rng rng(8);
  const auto key = random_bits(rng, 20000);
  std::size_t ones = 0;
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto out = toeplitz_hash(key, 10000, seed);
    for (auto b : out) ones += b;
    total += out.size();
  }
  const double z = (2.0 * static_cast<double>(ones) - static_cast<double>(total)) / std::sqrt(static_cast<double>(total));
  EXPECT_LT(std::abs(z), 4.0);

  EXPECT_TRUE(privacy_amplify(key, 0, 1).key.empty());
  EXPECT_THROW(privacy_amplify(key, key.size() + 1, 1), std::invalid_argument);
  const auto r = privacy_amplify(key, 100, 1, 2.0);
  EXPECT_EQ(r.key.size(), 100u);
  EXPECT_EQ(r.length_l, 100u);
  EXPECT_DOUBLE_EQ(r.skr_bps, 50.0);
  EXPECT_EQ(privacy_amplify(key, 100, 1).key, r.key);
}

TEST(Verify, HashBehaviour) {
  Rng rng(9);
  EXPECT_TRUE(verify_keys({}, {}, 1));
  const auto a = random_bits(rng, 5000);
  EXPECT_TRUE(verify_keys(a, a, 77));
  int caught = 0;
  for (int i = 0; i < 200; ++i) {
    auto b = a;
    b[bounded_draw(rng, b.size())] ^= 1u;
    caught += verify_keys(a, b, rng()) ? 0 : 1;
  }
  EXPECT_EQ(caught, 200);
  // A short key differing in one bit.
  EXPECT_FALSE(verify_keys({1, 0, 1}, {1, 1, 1}, 5));
}

TEST(Verify, CollisionRateAtSmallWidth) {
  // Truncated to 8 bits, a one-bit difference collides about 1/256 of the time.
  Rng rng(12);
  const auto a = random_bits(rng, 300);
  int collisions = 0;
  constexpr int kTrials = 20000;
  for (int i = 0; i < kTrials; ++i) {
    auto b = a;
    b[bounded_draw(rng, b.size())] ^= 1u;
    const auto seed = rng();
    if ((verification_hash(a, seed) & 0xFF) == (verification_hash(b, seed) & 0xFF)) ++collisions;
  }
  EXPECT_NEAR(collisions, kTrials / 256.0, 5 * std::sqrt(kTrials / 256.0));
}

TEST(Cascade, Schedule) {
  EXPECT_EQ(first_block_size(0.02, 8192), 37u);
  EXPECT_EQ(first_block_size(0.0, 8192), 8192u);
  EXPECT_EQ(first_block_size(1e-6, 8192), 8192u);
  const CascadeSchedule s{37, 4, 8192};
  EXPECT_EQ(s.block_size(0), 37u);
  EXPECT_EQ(s.block_size(3), 296u);
  EXPECT_EQ((CascadeSchedule{5000, 4, 8192}.block_size(1)), 8192u);
  const auto p0 = cascade_permutation(4, 0, 10);
  for (std::uint32_t i = 0; i < 10; ++i) EXPECT_EQ(p0[i], i);
  auto p1 = cascade_permutation(4, 1, 1000);
  EXPECT_EQ(p1, cascade_permutation(4, 1, 1000));
  EXPECT_NE(p1, cascade_permutation(4, 2, 1000));
  std::sort(p1.begin(), p1.end());
  for (std::uint32_t i = 0; i < 1000; ++i) ASSERT_EQ(p1[i], i);
}

TEST(Cascade, IdenticalKeysLeakTopLevelOnly) {
  Rng rng(13);
  const auto a = random_bits(rng, 8192 * 5);
  const auto out = cascade_reconcile(a, a, 0.0, 8192, 4, 21);
  EXPECT_EQ(out.corrected, a);
  EXPECT_EQ(out.leaked_bits, 5u * 4u);
  EXPECT_TRUE(out.flips.empty());
}

TEST(Cascade, SingleFlipBinarySearch) {
  Rng rng(14);
  const auto a = random_bits(rng, 8192 * 3);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = a;
    const auto pos = bounded_draw(rng, b.size());
    b[pos] ^= 1u;
    const auto out = cascade_reconcile(a, b, 0.0, 8192, 4, rng());
    EXPECT_EQ(out.corrected, a);
    ASSERT_EQ(out.flips.size(), 1u);
    EXPECT_EQ(out.flips[0], pos);
    const std::uint64_t top = 3u * 4u;
    EXPECT_LE(out.leaked_bits - top, static_cast<std::uint64_t>(std::log2(8192.0)) + 1);
  }
}

TEST(Cascade, RandomErrorsCorrected) {
  Rng rng(15);
  for (double q : {0.01, 0.02, 0.05}) {
    for (int trial = 0; trial < 4; ++trial) {
      const auto a = random_bits(rng, 100000);
      const auto b = with_errors(a, q, rng);
      const auto errors = hamming_distance(a, b);
      const auto out = cascade_reconcile(a, b, q, 8192, 4, rng());
      EXPECT_EQ(out.corrected, a) << "q=" << q;
      EXPECT_EQ(out.flips.size() % 2, errors % 2);
      const double f = static_cast<double>(out.leaked_bits) / (100000.0 * binary_entropy(q));
      EXPECT_LT(f, 1.3) << "q=" << q;
    }
  }
}

TEST(Cascade, ResponderCountsDisclosure) {
  Rng rng(16);
  const auto a = random_bits(rng, 20000);
  const auto b = with_errors(a, 0.03, rng);
  const CascadeSchedule s{first_block_size(0.03, 8192), 4, 8192};
  CascadeResponder alice(a, 5, s);
  const auto out = cascade_reconcile(b, 5, s, [&](const ParityRequest& r) {
    // Through the wire codec, as a session does it.
    return ParityResponse::decode(alice.answer(ParityRequest::decode(r.encode())).encode());
  });
  EXPECT_EQ(out.corrected, a);
  EXPECT_EQ(out.leaked_bits, alice.disclosed());
}

TEST(Cascade, ProtocolMisuse) {
  CascadeCorrector c(Bits(100, 0), 1, {10, 2, 8192});
  EXPECT_THROW(c.on_response({}), std::logic_error);
  auto req = c.next_request();
  ASSERT_TRUE(req);
  EXPECT_THROW(c.next_request(), std::logic_error);
  EXPECT_THROW(c.on_response({{0}}), std::runtime_error);
  CascadeResponder r(Bits(100, 0), 1, {10, 2, 8192});
  EXPECT_THROW(r.answer({{{0, 50, 101}}}), std::invalid_argument);
  EXPECT_THROW(r.answer({{{7, 0, 1}}}), std::invalid_argument);
}

namespace {

/// Expected counts of an ideal Poisson channel with transmittance eta, no
/// darks and no errors, over `pulses` Z pulses and as many X pulses.
MonitorStats ideal_channel(const EmissionConfig& e, double eta, double pulses) {
  MonitorStats s;
  for (auto k : {Intensity::signal, Intensity::decoy}) {
    const double n = pulses * e.p_intensity(k) * (1.0 - std::exp(-e.mu(k) * eta));
    s[k].n_z = static_cast<std::uint64_t>(std::llround(n));
    s[k].n_x = s[k].n_z;
  }
  return s;
}

double true_single_photon(const EmissionConfig& e, double eta, double pulses) {
  double t = 0.0;
  for (auto k : {Intensity::signal, Intensity::decoy})
    t += e.p_intensity(k) * std::exp(-e.mu(k)) * e.mu(k) * eta;
  return pulses * t;
}

}  // namespace

TEST(Decoy, ZeroDetectionsGiveNoKey) {
  const auto b = decoy_bounds(MonitorStats{}, EmissionConfig{}, DistillationParams{});
  EXPECT_EQ(b.s_z0_lower, 0.0);
  EXPECT_EQ(b.s_z1_lower, 0.0);
  EXPECT_EQ(key_length(b, DistillationParams{}), 0u);
}

TEST(Decoy, DegenerateDecoyRejected) {
  EmissionConfig e;
  e.mu_decoy = e.mu_signal;
  EXPECT_THROW(decoy_bounds(MonitorStats{}, e, DistillationParams{}), std::invalid_argument);
}

TEST(Decoy, SmallIntensityPenaltyFreeBoundIsTight) {
  EmissionConfig e;
  e.mu_signal = 0.1;
  e.mu_decoy = 0.05;
  DistillationParams p;
  p.finite_size = false;
  const double pulses = 1e12, eta = 1e-3;
  const auto b = decoy_bounds(ideal_channel(e, eta, pulses), e, p);
  const double truth = true_single_photon(e, eta, pulses);
  EXPECT_LE(b.s_z1_lower, truth * 1.0001);
  EXPECT_GT(b.s_z1_lower, 0.98 * truth);
}

TEST(Decoy, LinearRegimeRatioMatchesClosedForm) {
  // With Y_n = n * eta the one-decoy bound recovers
  // (mu1 e^{mu2} - mu2 e^{mu1}) / (mu1 - mu2) of the single-photon count.
  const EmissionConfig e;
  DistillationParams p;
  p.finite_size = false;
  const double pulses = 1e14, eta = 1e-6;
  const auto b = decoy_bounds(ideal_channel(e, eta, pulses), e, p);
  const double mu1 = e.mu_signal, mu2 = e.mu_decoy;
  const double ratio = (mu1 * std::exp(mu2) - mu2 * std::exp(mu1)) / (mu1 - mu2);
  EXPECT_NEAR(b.s_z1_lower / true_single_photon(e, eta, pulses), ratio, 1e-4);
  EXPECT_NEAR(ratio, 0.9158, 1e-4);
}

TEST(Decoy, PhaseBoundMonotoneInErrors) {
  const EmissionConfig e;
  const DistillationParams p;
  auto s = ideal_channel(e, 0.05, 2e7);
  double last = -1.0;
  for (std::uint64_t m = 0; m <= 4000; m += 250) {
    s[Intensity::signal].m_x = m;
    s[Intensity::decoy].m_x = m / 2;
    const auto b = decoy_bounds(s, e, p);
    EXPECT_GE(b.phi_z_upper, last);
    EXPECT_LE(b.phi_z_upper, 0.5);
    last = b.phi_z_upper;
  }
}

TEST(Decoy, BoundsClampedAndFinitePenaltyShrinks) {
  const EmissionConfig e;
  DistillationParams p;
  auto s = ideal_channel(e, 0.05, 1e7);
  s[Intensity::signal].m_z = 300;
  s[Intensity::decoy].m_z = 150;
  s[Intensity::signal].m_x = 40;
  s[Intensity::decoy].m_x = 20;
  const auto finite = decoy_bounds(s, e, p);
  p.finite_size = false;
  const auto asym = decoy_bounds(s, e, p);
  EXPECT_GE(finite.s_z0_lower, 0.0);
  EXPECT_LE(finite.s_z0_lower + finite.s_z1_lower, static_cast<double>(s.total().n_z));
  EXPECT_LT(finite.s_z1_lower, asym.s_z1_lower);
  EXPECT_GT(finite.phi_z_upper, asym.phi_z_upper);
  EXPECT_GT(finite.gamma, 0.0);
  EXPECT_EQ(asym.gamma, 0.0);
}

TEST(Decoy, TooFewMonitorCountsIsInsecure) {
  const EmissionConfig e;
  auto s = ideal_channel(e, 0.05, 1e7);
  s[Intensity::signal].n_x = 3;
  s[Intensity::decoy].n_x = 1;
  const auto b = decoy_bounds(s, e, DistillationParams{});
  EXPECT_FALSE(b.secure);
  EXPECT_EQ(key_length(b, DistillationParams{}), 0u);
}

TEST(KeyLength, ReferenceValue) {
  DecoyBounds b;
  b.s_z0_lower = 1e5;
  b.s_z1_lower = 1e6;
  b.phi_z_upper = 0.02;
  b.lambda_ec = 0.0;
  b.secure = true;
  EXPECT_EQ(key_length(b, DistillationParams{}), 958323u);
}

TEST(KeyLength, AsymptoticReduction) {
  DecoyBounds b;
  b.s_z0_lower = 10;
  b.s_z1_lower = 1000;
  b.phi_z_upper = 0.1;
  b.lambda_ec = 200;
  b.secure = true;
  DistillationParams p;
  p.finite_size = false;
  EXPECT_EQ(key_length(b, p), static_cast<std::uint64_t>(std::floor(10 + 1000 * (1 - binary_entropy(0.1)) - 200)));
}

TEST(KeyLength, MonotoneAndZeroAtHalf) {
  DecoyBounds b;
  b.s_z1_lower = 1e6;
  b.secure = true;
  const DistillationParams p;
  b.phi_z_upper = 0.5;
  EXPECT_EQ(key_length(b, p), 0u);
  std::uint64_t last = UINT64_MAX;
  for (double phi = 0.0; phi <= 0.5; phi += 0.01) {
    for (double lam = 0; lam <= 4e5; lam += 1e5) {
      b.phi_z_upper = phi;
      b.lambda_ec = lam;
      const auto l = key_length(b, p);
      if (lam > 0) {
        b.lambda_ec = lam - 1e5;
        EXPECT_LE(l, key_length(b, p));
      }
    }
    b.lambda_ec = 0;
    const auto l0 = key_length(b, p);
    EXPECT_LE(l0, last);
    last = l0;
  }
}
