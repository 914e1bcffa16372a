#pragma once

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace wavesynth {

using Complex = std::complex<double>;

/// Finite, non-empty run of complex baseband samples.
class IqBuffer {
 public:
  IqBuffer() = default;
  /// Throws std::invalid_argument if empty or any sample is NaN/Inf.
  explicit IqBuffer(std::vector<Complex> samples);
  IqBuffer(std::initializer_list<Complex> samples);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const Complex& operator[](std::size_t i) const { return samples_[i]; }
  std::span<const Complex> samples() const noexcept { return samples_; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  double mean_power() const noexcept;

  friend bool operator==(const IqBuffer&, const IqBuffer&) = default;

 private:
  std::vector<Complex> samples_;
};

bool all_finite(std::span<const Complex> samples) noexcept;

// CHIQ file: "CHIQ", u32 version = 1, u64 count, then interleaved f64 I,Q.
// Everything little-endian.
void write_iq(std::ostream& out, const IqBuffer& buffer);
IqBuffer read_iq(std::istream& in);
void save_iq(const std::string& path, const IqBuffer& buffer);
IqBuffer load_iq(const std::string& path);

}  // namespace wavesynth
