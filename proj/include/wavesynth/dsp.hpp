#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "wavesynth/iq.hpp"

namespace wavesynth::dsp {

/// Raised when a synthesis filter has (numerically) a spectral null and
/// cannot be inverted at the receiver.
class SingularFilterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Complex FIR taps constrained to a box of half-width `alpha` around the
/// ideal filter [1, 0, ..., 0].
class FirFilter {
 public:
  /// Throws std::invalid_argument if taps are empty, alpha is not positive,
  /// or any tap leaves the box.
  FirFilter(std::vector<Complex> taps, double alpha);

  static FirFilter identity(std::size_t num_taps, double alpha);

  std::span<const Complex> taps() const noexcept { return taps_; }
  std::size_t size() const noexcept { return taps_.size(); }
  double alpha() const noexcept { return alpha_; }
  const Complex& operator[](std::size_t m) const { return taps_[m]; }

  /// Ideal tap value h0[m].
  static Complex ideal_tap(std::size_t m) noexcept { return m == 0 ? Complex(1.0, 0.0) : Complex(); }

 private:
  std::vector<Complex> taps_;
  double alpha_;
};

/// True if every tap satisfies the componentwise box constraint.
bool taps_feasible(std::span<const Complex> taps, double alpha) noexcept;

/// out[n] = sum_m h[m] x[n-m] with x[k] = 0 for k < 0; output truncated to len(x).
IqBuffer fir_apply(const IqBuffer& x, const FirFilter& h);

/// Same contract as fir_apply, computed with a zero-padded FFT.
IqBuffer fir_apply_fft(const IqBuffer& x, const FirFilter& h);

inline constexpr double kSingularThreshold = 1e-6;

/// Undo fir_apply at the receiver by spectral division X(f) = Y(f) / H(f),
/// followed by residual refinement against the truncated convolution.
/// Throws SingularFilterError if any bin of H on the zero-padded grid of
/// length len(y) has magnitude below kSingularThreshold.
IqBuffer fir_compensate(const IqBuffer& y, const FirFilter& h);

/// h[m] = h0[m] + alpha * (raw[2m] + i raw[2m+1]). `raw` must hold 2M values in
/// [-1, 1]; the result is feasible by construction.
FirFilter clamp_taps(std::span<const double> raw, double alpha);

/// Forward / inverse DFT of arbitrary length (FFTW backed). The inverse is
/// normalised by 1/n.
std::vector<Complex> fft(std::span<const Complex> in);
std::vector<Complex> ifft(std::span<const Complex> in);

}  // namespace wavesynth::dsp
