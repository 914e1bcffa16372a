#include "wavesynth/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wavesynth::channel {

namespace {

void normalise(std::vector<Complex>& taps) {
  double energy = 0.0;
  for (const auto& g : taps) energy += std::norm(g);
  if (!(energy > 0.0) || !std::isfinite(energy)) {
    throw std::invalid_argument("channel: path gains must be finite with nonzero energy");
  }
  const double scale = 1.0 / std::sqrt(energy);
  for (auto& g : taps) g *= scale;
}

Complex complex_gaussian(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

Complex polar_deg(double mag, double deg) { return std::polar(mag, deg * std::numbers::pi / 180.0); }

}  // namespace

double ChannelModel::tap_energy() const noexcept {
  double e = 0.0;
  for (const auto& g : fading_taps) e += std::norm(g);
  return e;
}

ChannelModel make_channel(std::vector<Complex> taps, std::optional<double> snr_db, std::uint64_t seed,
                          double drift_std, std::optional<double> jammer_power_db, std::size_t path_spacing) {
  if (taps.empty()) throw std::invalid_argument("make_channel: need at least one path");
  if (path_spacing == 0) throw std::invalid_argument("make_channel: path spacing must be positive");
  if (!(drift_std >= 0.0)) throw std::invalid_argument("make_channel: drift std must be >= 0");
  if (snr_db && !std::isfinite(*snr_db)) snr_db.reset();
  normalise(taps);
  ChannelModel ch;
  ch.snr_db = snr_db;
  ch.fading_taps = std::move(taps);
  ch.path_spacing = path_spacing;
  ch.fading_drift_std = drift_std;
  ch.jammer_power_db = jammer_power_db;
  ch.rng_seed = seed;
  return ch;
}

ChannelModel transparent_channel() { return make_channel({Complex(1.0, 0.0)}, std::nullopt, 0); }

IqBuffer channel_apply(const IqBuffer& x, const ChannelModel& ch, std::uint64_t stream) {
  if (x.empty()) throw std::invalid_argument("channel_apply: empty input");
  const std::size_t n = x.size();
  std::vector<Complex> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    Complex acc{};
    for (std::size_t k = 0; k < ch.fading_taps.size(); ++k) {
      const std::size_t lag = k * ch.path_spacing;
      if (lag > i) break;
      acc += ch.fading_taps[k] * x[i - lag];
    }
    y[i] = acc;
  }
  if (!ch.snr_db && !ch.jammer_power_db) return IqBuffer(std::move(y));

  double power = 0.0;
  for (const auto& v : y) power += std::norm(v);
  power /= static_cast<double>(n);

  Rng rng = make_rng(ch.rng_seed, {tag_of("channel"), ch.step_index, stream});
  if (ch.jammer_power_db) {
    // Burst over half the waveform at twice the mean power, so the average
    // jammer power is jammer_power_db relative to the signal.
    const std::size_t burst = std::max<std::size_t>(1, n / 2);
    std::uniform_int_distribution<std::size_t> start_dist(0, n - burst);
    const std::size_t start = start_dist(rng);
    const double variance = power * std::pow(10.0, *ch.jammer_power_db / 10.0) *
                            static_cast<double>(n) / static_cast<double>(burst);
    for (std::size_t i = start; i < start + burst; ++i) y[i] += complex_gaussian(rng, variance);
  }
  if (ch.snr_db) {
    const double variance = power * std::pow(10.0, -*ch.snr_db / 10.0);
    for (auto& v : y) v += complex_gaussian(rng, variance);
  }
  return IqBuffer(std::move(y));
}

ChannelModel channel_step(const ChannelModel& ch) {
  ChannelModel next = ch;
  if (ch.fading_drift_std > 0.0) {
    Rng rng = make_rng(ch.rng_seed, {tag_of("drift"), ch.step_index});
    const double variance = ch.fading_drift_std * ch.fading_drift_std;
    for (auto& g : next.fading_taps) g += complex_gaussian(rng, variance);
    normalise(next.fading_taps);
  }
  ++next.step_index;
  return next;
}

ChannelPreset preset(std::string_view name) {
  // Presets seen at deployment share an echo one symbol (4 samples) behind
  // the direct path; the training preset is a flat channel.
  const std::vector<Complex> echo_a{Complex(1.0, 0.0), polar_deg(0.35, 70.0), Complex()};
  const std::vector<Complex> echo_b{Complex(1.0, 0.0), Complex(), polar_deg(0.35, -50.0)};
  const std::vector<Complex> echo_c{Complex(1.0, 0.0), polar_deg(0.3, 130.0), Complex()};
  constexpr std::size_t kSpacing = 4;
  constexpr double kScatter = 0.05;
  constexpr double kDrift = 0.005;

  ChannelPreset p;
  p.name = std::string(name);
  if (name == "high_snr_train" || name == "sla_day1") {
    p.snr_lo_db = 16.0;
    p.snr_hi_db = 30.0;
    return p;
  }
  p.path_spacing = kSpacing;
  p.scatter_std = kScatter;
  p.drift_std = kDrift;
  p.profile = echo_a;
  if (name == "mid_snr") {
    p.snr_lo_db = 6.0;
    p.snr_hi_db = 14.0;
  } else if (name == "low_mid_snr") {
    p.snr_lo_db = -10.0;
    p.snr_hi_db = 14.0;
  } else if (name == "low_snr") {
    p.snr_lo_db = -10.0;
    p.snr_hi_db = 4.0;
  } else if (name == "adv") {
    p.snr_lo_db = 6.0;
    p.snr_hi_db = 14.0;
    p.jammer_power_db = 0.0;
  } else if (name == "mid_snr_b") {
    p.snr_lo_db = 6.0;
    p.snr_hi_db = 14.0;
    p.profile = echo_b;
  } else if (name == "sla_day2") {
    p.snr_lo_db = 6.0;
    p.snr_hi_db = 14.0;
    p.profile = echo_c;
  } else {
    throw std::invalid_argument("unknown channel preset: " + std::string(name));
  }
  return p;
}

std::vector<std::string> preset_names() {
  return {"high_snr_train", "mid_snr", "low_mid_snr", "low_snr", "adv", "mid_snr_b", "sla_day1", "sla_day2"};
}

ChannelModel realize(const ChannelPreset& p, std::uint64_t seed) {
  Rng rng = make_rng(seed, {tag_of("realize")});
  std::uniform_real_distribution<double> snr_dist(p.snr_lo_db, p.snr_hi_db);
  const double snr = p.snr_hi_db > p.snr_lo_db ? snr_dist(rng) : p.snr_lo_db;
  std::vector<Complex> taps = p.profile;
  if (p.scatter_std > 0.0) {
    for (auto& g : taps) g += complex_gaussian(rng, p.scatter_std * p.scatter_std);
  }
  return make_channel(std::move(taps), snr, derive_seed(seed, {tag_of("channel-stream")}), p.drift_std,
                      p.jammer_power_db, p.path_spacing);
}

}  // namespace wavesynth::channel
