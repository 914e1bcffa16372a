#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wavesynth/iq.hpp"
#include "wavesynth/random.hpp"

namespace wavesynth::channel {

struct ChannelModel {
  std::optional<double> snr_db;  // empty: noiseless
  std::vector<Complex> fading_taps{Complex(1.0, 0.0)};
  std::size_t path_spacing = 1;  // samples between consecutive paths
  double fading_drift_std = 0.0;
  std::optional<double> jammer_power_db;  // relative to post-fading signal power
  std::uint64_t rng_seed = 0;
  std::uint64_t step_index = 0;

  double tap_energy() const noexcept;
};

/// Builds a model with path gains normalised to unit energy. Throws
/// std::invalid_argument on empty/zero/non-finite taps or zero spacing.
ChannelModel make_channel(std::vector<Complex> taps, std::optional<double> snr_db, std::uint64_t seed,
                          double drift_std = 0.0, std::optional<double> jammer_power_db = std::nullopt,
                          std::size_t path_spacing = 1);

ChannelModel transparent_channel();

/// y = (x * g) + jammer + awgn. AWGN variance is set from the measured
/// post-fading power; the jammer occupies a random contiguous half of the
/// waveform. `stream` separates the draws of several waveforms sent during the
/// same channel step.
IqBuffer channel_apply(const IqBuffer& x, const ChannelModel& ch, std::uint64_t stream = 0);

/// One coherence step: Gaussian drift on each path gain, renormalise,
/// advance step_index.
ChannelModel channel_step(const ChannelModel& ch);

/// A named family of channels. Each realisation draws an SNR uniformly from
/// [snr_lo_db, snr_hi_db] and scatters the base profile.
struct ChannelPreset {
  std::string name;
  double snr_lo_db = 0.0;
  double snr_hi_db = 0.0;
  std::vector<Complex> profile{Complex(1.0, 0.0)};
  std::size_t path_spacing = 1;
  double scatter_std = 0.0;
  double drift_std = 0.0;
  std::optional<double> jammer_power_db;
};

/// Throws std::invalid_argument for an unknown name.
ChannelPreset preset(std::string_view name);
std::vector<std::string> preset_names();

ChannelModel realize(const ChannelPreset& preset, std::uint64_t seed);

}  // namespace wavesynth::channel
