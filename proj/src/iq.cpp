#include "wavesynth/iq.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "wavesynth/binary_io.hpp"

namespace wavesynth {

namespace {
constexpr std::uint32_t kIqVersion = 1;
}

bool all_finite(std::span<const Complex> samples) noexcept {
  for (const auto& s : samples) {
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) return false;
  }
  return true;
}

IqBuffer::IqBuffer(std::vector<Complex> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("IqBuffer: empty sample sequence");
  if (!all_finite(samples_)) throw std::invalid_argument("IqBuffer: non-finite sample");
}

IqBuffer::IqBuffer(std::initializer_list<Complex> samples)
    : IqBuffer(std::vector<Complex>(samples)) {}

double IqBuffer::mean_power() const noexcept {
  if (samples_.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples_) acc += std::norm(s);
  return acc / static_cast<double>(samples_.size());
}

void write_iq(std::ostream& out, const IqBuffer& buffer) {
  binary::put_magic(out, "CHIQ");
  binary::put<std::uint32_t>(out, kIqVersion);
  binary::put<std::uint64_t>(out, buffer.size());
  for (const auto& s : buffer) {
    binary::put<double>(out, s.real());
    binary::put<double>(out, s.imag());
  }
  if (!out) throw std::runtime_error("write_iq: stream failure");
}

IqBuffer read_iq(std::istream& in) {
  binary::expect_magic(in, "CHIQ");
  const auto version = binary::get<std::uint32_t>(in);
  if (version != kIqVersion) {
    throw std::runtime_error("read_iq: unsupported version " + std::to_string(version));
  }
  const auto count = binary::get<std::uint64_t>(in);
  std::vector<Complex> samples;
  samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const double re = binary::get<double>(in);
    const double im = binary::get<double>(in);
    samples.emplace_back(re, im);
  }
  return IqBuffer(std::move(samples));
}

void save_iq(const std::string& path, const IqBuffer& buffer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_iq: cannot open " + path);
  write_iq(out, buffer);
}

IqBuffer load_iq(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_iq: cannot open " + path);
  return read_iq(in);
}

}  // namespace wavesynth
