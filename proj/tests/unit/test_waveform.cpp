#include <cmath>
#include <vector>

#include "doctest.h"
#include "wavesynth/channel.hpp"
#include "wavesynth/waveform.hpp"

using namespace wavesynth;
using namespace wavesynth::waveform;

namespace {
const ModScheme kAll[] = {ModScheme::BPSK, ModScheme::QPSK, ModScheme::QAM16, ModScheme::QAM64};

unsigned hamming(unsigned a, unsigned b) { return static_cast<unsigned>(__builtin_popcount(a ^ b)); }
}  // namespace

TEST_CASE("constellations have unit power and the expected size") {
  for (auto s : kAll) {
    const auto& c = constellation(s);
    CHECK(c.size() == (std::size_t{1} << bits_per_symbol(s)));
    double p = 0.0;
    for (const auto& v : c) p += std::norm(v);
    CHECK(std::abs(p / static_cast<double>(c.size()) - 1.0) < 1e-12);
  }
}

TEST_CASE("nearest neighbours differ in exactly one bit (Gray)") {
  for (auto s : {ModScheme::QPSK, ModScheme::QAM16, ModScheme::QAM64}) {
    const auto& c = constellation(s);
    double dmin = 1e9;
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) dmin = std::min(dmin, std::abs(c[i] - c[j]));
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < c.size(); ++j) {
        if (i != j && std::abs(std::abs(c[i] - c[j]) - dmin) < 1e-12) {
          CHECK(hamming(static_cast<unsigned>(i), static_cast<unsigned>(j)) == 1);
        }
      }
    }
  }
}

TEST_CASE("modulate examples") {
  const Bits zero{0};
  const auto y = modulate(zero, ModScheme::BPSK, 1);
  REQUIRE(y.size() == 1);
  CHECK(y[0] == Complex(1.0, 0.0));

  const Bits ones{1, 1};
  const auto q = modulate(ones, ModScheme::QPSK, 1);
  REQUIRE(q.size() == 1);
  CHECK(std::abs(std::abs(q[0]) - 1.0) < 1e-12);

  Rng rng = make_rng(1, {});
  const auto bits = random_bits(240, rng);
  const auto w = modulate(bits, ModScheme::QAM16, 2);
  CHECK(w.size() == 120);
  CHECK(std::abs(w.mean_power() - 1.0) < 0.05);

  const Bits odd{0, 1, 1};
  CHECK_THROWS_AS(modulate(odd, ModScheme::QPSK, 1), std::invalid_argument);
  CHECK_THROWS_AS(modulate(zero, ModScheme::BPSK, 0), std::invalid_argument);
}

TEST_CASE("average power is near one for at least 100 symbols") {
  Rng rng = make_rng(2, {});
  for (auto s : kAll) {
    const auto w = random_waveform(s, 400, 2, rng);
    CHECK(std::abs(w.mean_power() - 1.0) < 0.05);
  }
}

TEST_CASE("noiseless round trip for every scheme and sps") {
  Rng rng = make_rng(3, {});
  for (auto s : kAll) {
    for (unsigned sps : {1u, 2u, 4u}) {
      const auto bits = random_bits(bits_per_symbol(s) * 200, rng);
      CHECK(demodulate_hard(modulate(bits, s, sps), s, sps) == bits);
    }
  }
}

TEST_CASE("all-zero input resolves to the lowest index") {
  const IqBuffer zeros(std::vector<Complex>(8, Complex()));
  const auto bits = demodulate_hard(zeros, ModScheme::BPSK, 1);
  CHECK(bits == Bits(8, 0));
  CHECK_THROWS_AS(demodulate_hard(zeros, ModScheme::BPSK, 3), std::invalid_argument);
}

TEST_CASE("BPSK BER follows the AWGN analytic curve") {
  // Independent oracle: Q(sqrt(2 Es/N0)) = erfc(sqrt(Es/N0)) / 2.
  auto analytic = [](double snr_db) { return 0.5 * std::erfc(std::sqrt(std::pow(10.0, snr_db / 10.0))); };
  auto measure = [](double snr_db, std::size_t nbits, std::uint64_t seed) {
    Rng rng = make_rng(seed, {});
    const auto bits = random_bits(nbits, rng);
    const auto x = modulate(bits, ModScheme::BPSK, 1);
    const auto ch = channel::make_channel({Complex(1, 0)}, snr_db, seed);
    return measure_ber(bits, demodulate_hard(channel::channel_apply(x, ch), ModScheme::BPSK, 1));
  };
  SUBCASE("10 dB, 1e4 bits") {
    const double p = analytic(10.0);
    CHECK(measure(10.0, 10000, 4) <= 3.0 * p + 1e-4);  // expected errors < 1; allow at most one
  }
  SUBCASE("4 dB, 1e5 bits") {
    const double p = analytic(4.0);
    const double ber = measure(4.0, 100000, 5);
    CHECK(ber >= p / 3.0);
    CHECK(ber <= 3.0 * p);
  }
}

TEST_CASE("measure_ber") {
  const Bits a{0, 1, 0, 1};
  const Bits b{1, 0, 1, 0};
  CHECK(measure_ber(a, a) == 0.0);
  CHECK(measure_ber(a, b) == 1.0);
  Bits x(100, 0), y(100, 0);
  y[3] = y[50] = y[99] = 1;
  CHECK(measure_ber(x, y) == doctest::Approx(0.03));
  CHECK_THROWS_AS(measure_ber(a, x), std::invalid_argument);
}

TEST_CASE("impairments") {
  Rng rng = make_rng(6, {});
  const auto x = random_waveform(ModScheme::QPSK, 64, 2, rng);
  SUBCASE("identity") { CHECK(apply_impairment(x, DeviceImpairment{}, 1) == x); }
  SUBCASE("dc only") {
    DeviceImpairment imp;
    imp.dc_offset = {0.05, 0.0};
    const auto y = apply_impairment(x, imp, 1);
    for (std::size_t n = 0; n < x.size(); ++n) CHECK(std::abs(y[n] - x[n] - Complex(0.05, 0)) < 1e-15);
  }
  SUBCASE("gain and skew") {
    DeviceImpairment imp;
    imp.iq_gain_imbalance = 1.1;
    imp.iq_phase_skew = 0.2;
    const auto y = apply_impairment(x, imp, 1);
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double i = x[n].real(), q = x[n].imag();
      CHECK(std::abs(y[n] - Complex(1.1 * i, i * std::sin(0.2) + q * std::cos(0.2))) < 1e-15);
    }
  }
  SUBCASE("seeded phase noise is deterministic") {
    DeviceImpairment imp;
    imp.phase_noise_std = 0.01;
    const auto a = apply_impairment(x, imp, 42);
    const auto b = apply_impairment(x, imp, 42);
    const auto c = apply_impairment(x, imp, 43);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    // Pure rotation keeps magnitudes.
    for (std::size_t n = 0; n < x.size(); ++n) CHECK(std::abs(std::abs(a[n]) - std::abs(x[n])) < 1e-12);
  }
  SUBCASE("out-of-range parameters") {
    DeviceImpairment imp;
    imp.iq_gain_imbalance = 1.3;
    CHECK_THROWS_AS(apply_impairment(x, imp, 1), std::invalid_argument);
    imp = {};
    imp.dc_offset = {0.2, 0.0};
    CHECK_THROWS_AS(apply_impairment(x, imp, 1), std::invalid_argument);
  }
}

TEST_CASE("scheme names round trip") {
  for (auto s : kAll) CHECK(scheme_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(scheme_from_string("QAM256"), std::invalid_argument);
}
