#include "wavesynth/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

namespace wavesynth::dsp {

namespace {

// FFTW's planner is not re-entrant; execution of a finished plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<Complex> transform(std::span<const Complex> in, int sign) {
  const int n = static_cast<int>(in.size());
  std::vector<Complex> out(in.size());
  if (in.empty()) return out;
  std::vector<Complex> scratch(in.begin(), in.end());
  auto* src = reinterpret_cast<fftw_complex*>(scratch.data());
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_1d(n, src, dst, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

double tolerance_for(double alpha) { return 1e-12 * (1.0 + alpha); }

}  // namespace

std::vector<Complex> fft(std::span<const Complex> in) { return transform(in, FFTW_FORWARD); }

std::vector<Complex> ifft(std::span<const Complex> in) {
  auto out = transform(in, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
  return out;
}

bool taps_feasible(std::span<const Complex> taps, double alpha) noexcept {
  const double tol = tolerance_for(alpha);
  for (std::size_t m = 0; m < taps.size(); ++m) {
    const Complex d = taps[m] - FirFilter::ideal_tap(m);
    if (!std::isfinite(d.real()) || !std::isfinite(d.imag())) return false;
    if (std::abs(d.real()) > alpha + tol || std::abs(d.imag()) > alpha + tol) return false;
  }
  return true;
}

FirFilter::FirFilter(std::vector<Complex> taps, double alpha) : taps_(std::move(taps)), alpha_(alpha) {
  if (taps_.empty()) throw std::invalid_argument("FirFilter: need at least one tap");
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) {
    throw std::invalid_argument("FirFilter: alpha must be positive");
  }
  if (!taps_feasible(taps_, alpha_)) {
    throw std::invalid_argument("FirFilter: taps violate the box constraint");
  }
}

FirFilter FirFilter::identity(std::size_t num_taps, double alpha) {
  std::vector<Complex> taps(num_taps);
  if (!taps.empty()) taps[0] = 1.0;
  return FirFilter(std::move(taps), alpha);
}

IqBuffer fir_apply(const IqBuffer& x, const FirFilter& h) {
  if (x.empty()) throw std::invalid_argument("fir_apply: empty input");
  const std::size_t n = x.size();
  const auto taps = h.taps();
  std::vector<Complex> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Complex acc{};
    const std::size_t last = std::min(taps.size() - 1, i);
    for (std::size_t m = 0; m <= last; ++m) acc += taps[m] * x[i - m];
    out[i] = acc;
  }
  return IqBuffer(std::move(out));
}

IqBuffer fir_apply_fft(const IqBuffer& x, const FirFilter& h) {
  if (x.empty()) throw std::invalid_argument("fir_apply_fft: empty input");
  const std::size_t n = x.size();
  const std::size_t padded = n + h.size() - 1;
  std::vector<Complex> xs(padded), hs(padded);
  std::copy(x.begin(), x.end(), xs.begin());
  std::copy(h.taps().begin(), h.taps().end(), hs.begin());
  auto xf = fft(xs);
  const auto hf = fft(hs);
  for (std::size_t k = 0; k < padded; ++k) xf[k] *= hf[k];
  auto y = ifft(xf);
  y.resize(n);
  return IqBuffer(std::move(y));
}

IqBuffer fir_compensate(const IqBuffer& y, const FirFilter& h) {
  if (y.empty()) throw std::invalid_argument("fir_compensate: empty input");
  const std::size_t n = y.size();

  // Precondition on the length-n grid, as seen by a receiver working on
  // blocks of the received length.
  {
    std::vector<Complex> hs(std::max(n, h.size()));
    std::copy(h.taps().begin(), h.taps().end(), hs.begin());
    const auto hf = fft(hs);
    for (std::size_t k = 0; k < hf.size(); ++k) {
      if (std::abs(hf[k]) < kSingularThreshold) {
        throw SingularFilterError("fir_compensate: |H| below threshold at bin " + std::to_string(k));
      }
    }
  }

  // Spectral division on a grid long enough that the causal inverse has
  // decayed before wrapping around.
  const std::size_t padded = 4 * (n + h.size());
  std::vector<Complex> hs(padded);
  std::copy(h.taps().begin(), h.taps().end(), hs.begin());
  const auto hf = fft(hs);
  for (const auto& v : hf) {
    if (std::abs(v) < kSingularThreshold) {
      throw SingularFilterError("fir_compensate: |H| below threshold on refinement grid");
    }
  }

  auto divide = [&](std::span<const Complex> target) {
    std::vector<Complex> ts(padded);
    std::copy(target.begin(), target.end(), ts.begin());
    auto tf = fft(ts);
    for (std::size_t k = 0; k < padded; ++k) tf[k] /= hf[k];
    auto est = ifft(tf);
    est.resize(n);
    return est;
  };

  auto estimate = divide(y.samples());
  // Residual refinement: the truncated convolution is a triangular Toeplitz
  // map, so a few correction passes drive the residual to rounding level.
  for (int pass = 0; pass < 4; ++pass) {
    const auto reproduced = fir_apply(IqBuffer(estimate), h);
    std::vector<Complex> residual(n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = y[i] - reproduced[i];
      worst = std::max(worst, std::abs(residual[i]));
    }
    if (worst < 1e-14) break;
    const auto correction = divide(residual);
    for (std::size_t i = 0; i < n; ++i) estimate[i] += correction[i];
  }
  if (!all_finite(estimate)) throw SingularFilterError("fir_compensate: unstable inverse");
  return IqBuffer(std::move(estimate));
}

FirFilter clamp_taps(std::span<const double> raw, double alpha) {
  if (raw.empty() || raw.size() % 2 != 0) {
    throw std::invalid_argument("clamp_taps: expected 2M raw values, got " + std::to_string(raw.size()));
  }
  const std::size_t taps = raw.size() / 2;
  std::vector<Complex> h(taps);
  for (std::size_t m = 0; m < taps; ++m) {
    const double re = std::clamp(raw[2 * m], -1.0, 1.0);
    const double im = std::clamp(raw[2 * m + 1], -1.0, 1.0);
    h[m] = FirFilter::ideal_tap(m) + alpha * Complex(re, im);
  }
  return FirFilter(std::move(h), alpha);
}

}  // namespace wavesynth::dsp
