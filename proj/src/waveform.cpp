#include "wavesynth/waveform.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wavesynth::waveform {

namespace {

unsigned gray_to_binary(unsigned g) {
  unsigned b = 0;
  for (; g != 0; g >>= 1) b ^= g;
  return b;
}

// Amplitude level of one axis carrying `label` on a k-level PAM grid.
double pam_level(unsigned label, unsigned k) {
  return static_cast<double>(k - 1) - 2.0 * static_cast<double>(gray_to_binary(label));
}

std::vector<Complex> build(ModScheme scheme) {
  std::vector<Complex> points;
  if (scheme == ModScheme::BPSK) return {Complex(1.0, 0.0), Complex(-1.0, 0.0)};

  const unsigned bits = bits_per_symbol(scheme);
  const unsigned half = bits / 2;
  const unsigned k = 1u << half;
  const std::size_t count = std::size_t{1} << bits;
  points.reserve(count);
  for (unsigned idx = 0; idx < count; ++idx) {
    const unsigned i_label = idx >> half;
    const unsigned q_label = idx & (k - 1);
    points.emplace_back(pam_level(i_label, k), pam_level(q_label, k));
  }
  double power = 0.0;
  for (const auto& p : points) power += std::norm(p);
  const double scale = 1.0 / std::sqrt(power / static_cast<double>(points.size()));
  for (auto& p : points) p *= scale;
  return points;
}

}  // namespace

std::string_view to_string(ModScheme scheme) noexcept {
  switch (scheme) {
    case ModScheme::BPSK: return "BPSK";
    case ModScheme::QPSK: return "QPSK";
    case ModScheme::QAM16: return "QAM16";
    case ModScheme::QAM64: return "QAM64";
  }
  return "?";
}

ModScheme scheme_from_string(std::string_view name) {
  for (auto s : {ModScheme::BPSK, ModScheme::QPSK, ModScheme::QAM16, ModScheme::QAM64}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown modulation scheme: " + std::string(name));
}

unsigned bits_per_symbol(ModScheme scheme) noexcept {
  switch (scheme) {
    case ModScheme::BPSK: return 1;
    case ModScheme::QPSK: return 2;
    case ModScheme::QAM16: return 4;
    case ModScheme::QAM64: return 6;
  }
  return 1;
}

const std::vector<Complex>& constellation(ModScheme scheme) {
  static const std::array<std::vector<Complex>, 4> table = {
      build(ModScheme::BPSK), build(ModScheme::QPSK), build(ModScheme::QAM16), build(ModScheme::QAM64)};
  return table[static_cast<std::size_t>(scheme)];
}

IqBuffer modulate(std::span<const std::uint8_t> bits, ModScheme scheme, unsigned sps) {
  const unsigned bps = bits_per_symbol(scheme);
  if (sps == 0) throw std::invalid_argument("modulate: sps must be positive");
  if (bits.empty() || bits.size() % bps != 0) {
    throw std::invalid_argument("modulate: bit count not a positive multiple of " + std::to_string(bps));
  }
  const auto& points = constellation(scheme);
  std::vector<Complex> out;
  out.reserve(bits.size() / bps * sps);
  for (std::size_t s = 0; s < bits.size(); s += bps) {
    unsigned idx = 0;
    for (unsigned b = 0; b < bps; ++b) {
      if (bits[s + b] > 1) throw std::invalid_argument("modulate: bits must be 0 or 1");
      idx = (idx << 1) | bits[s + b];
    }
    out.insert(out.end(), sps, points[idx]);
  }
  return IqBuffer(std::move(out));
}

Bits demodulate_hard(const IqBuffer& y, ModScheme scheme, unsigned sps) {
  if (sps == 0 || y.empty() || y.size() % sps != 0) {
    throw std::invalid_argument("demodulate_hard: length not a multiple of sps");
  }
  const auto& points = constellation(scheme);
  const unsigned bps = bits_per_symbol(scheme);
  Bits bits;
  bits.reserve(y.size() / sps * bps);
  for (std::size_t s = 0; s < y.size(); s += sps) {
    Complex avg{};
    for (unsigned k = 0; k < sps; ++k) avg += y[s + k];
    avg /= static_cast<double>(sps);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < points.size(); ++p) {
      const double d = std::norm(avg - points[p]);
      if (d < best_d) {
        best_d = d;
        best = p;
      }
    }
    for (int b = static_cast<int>(bps) - 1; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((best >> b) & 1u));
  }
  return bits;
}

double measure_ber(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx) {
  if (tx.size() != rx.size()) throw std::invalid_argument("measure_ber: length mismatch");
  if (tx.empty()) throw std::invalid_argument("measure_ber: empty sequences");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < tx.size(); ++i) errors += (tx[i] != rx[i]) ? 1 : 0;
  return static_cast<double>(errors) / static_cast<double>(tx.size());
}

Bits random_bits(std::size_t count, Rng& rng) {
  Bits bits(count);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return bits;
}

IqBuffer random_waveform(ModScheme scheme, std::size_t num_symbols, unsigned sps, Rng& rng) {
  const auto bits = random_bits(num_symbols * bits_per_symbol(scheme), rng);
  return modulate(bits, scheme, sps);
}

void DeviceImpairment::validate() const {
  if (!(iq_gain_imbalance >= 0.8 && iq_gain_imbalance <= 1.2)) {
    throw std::invalid_argument("DeviceImpairment: gain imbalance outside [0.8, 1.2]");
  }
  if (!std::isfinite(iq_phase_skew)) throw std::invalid_argument("DeviceImpairment: non-finite skew");
  if (!(std::abs(dc_offset) <= 0.1)) throw std::invalid_argument("DeviceImpairment: |dc| > 0.1");
  if (!(phase_noise_std >= 0.0) || !std::isfinite(phase_noise_std)) {
    throw std::invalid_argument("DeviceImpairment: phase noise std must be >= 0");
  }
}

bool DeviceImpairment::is_identity() const noexcept {
  return iq_gain_imbalance == 1.0 && iq_phase_skew == 0.0 && dc_offset == Complex{} && phase_noise_std == 0.0;
}

IqBuffer apply_impairment(const IqBuffer& x, const DeviceImpairment& imp, std::uint64_t rng_seed) {
  imp.validate();
  if (x.empty()) throw std::invalid_argument("apply_impairment: empty input");
  if (imp.is_identity()) return x;

  const double sin_s = std::sin(imp.iq_phase_skew);
  const double cos_s = std::cos(imp.iq_phase_skew);
  Rng rng = make_rng(rng_seed, {tag_of("phase-noise")});
  std::normal_distribution<double> step(0.0, 1.0);
  double phi = 0.0;
  std::vector<Complex> out(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double i = x[n].real();
    const double q = x[n].imag();
    Complex v(imp.iq_gain_imbalance * i, i * sin_s + q * cos_s);
    if (imp.phase_noise_std > 0.0) {
      phi += imp.phase_noise_std * step(rng);
      v *= std::polar(1.0, phi);
    }
    out[n] = v + imp.dc_offset;
  }
  return IqBuffer(std::move(out));
}

}  // namespace wavesynth::waveform
