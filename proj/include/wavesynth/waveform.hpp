#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavesynth/iq.hpp"
#include "wavesynth/random.hpp"

namespace wavesynth::waveform {

enum class ModScheme { BPSK, QPSK, QAM16, QAM64 };

std::string_view to_string(ModScheme scheme) noexcept;
/// Throws std::invalid_argument on an unknown name.
ModScheme scheme_from_string(std::string_view name);

/// Gray-mapped, unit-average-power constellation. Point index equals the
/// bit pattern it carries, most significant bit first.
const std::vector<Complex>& constellation(ModScheme scheme);
unsigned bits_per_symbol(ModScheme scheme) noexcept;

using Bits = std::vector<std::uint8_t>;

/// Rectangular pulse: each symbol repeated `sps` times.
IqBuffer modulate(std::span<const std::uint8_t> bits, ModScheme scheme, unsigned sps);

/// Nearest constellation point on per-symbol averages; ties go to the lowest
/// point index.
Bits demodulate_hard(const IqBuffer& y, ModScheme scheme, unsigned sps);

/// Fraction of positions where the two sequences differ.
double measure_ber(std::span<const std::uint8_t> tx, std::span<const std::uint8_t> rx);

Bits random_bits(std::size_t count, Rng& rng);

/// Random-symbol waveform of `num_symbols` symbols.
IqBuffer random_waveform(ModScheme scheme, std::size_t num_symbols, unsigned sps, Rng& rng);

struct DeviceImpairment {
  double iq_gain_imbalance = 1.0;  // linear I/Q amplitude ratio
  double iq_phase_skew = 0.0;      // radians
  Complex dc_offset{};
  double phase_noise_std = 0.0;  // radians per sample

  /// Throws std::invalid_argument when outside the modelled ranges.
  void validate() const;
  bool is_identity() const noexcept;
};

/// y[n] = (g I[n] + i (I[n] sin s + Q[n] cos s)) e^{i phi[n]} + dc, with phi a
/// Gaussian random walk seeded from `rng_seed`.
IqBuffer apply_impairment(const IqBuffer& x, const DeviceImpairment& imp, std::uint64_t rng_seed);

}  // namespace wavesynth::waveform
