#pragma once

#include <array>
#include <cstdint>

namespace mdlab {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3", SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// What a stream is used for. Different roles of the same trial never share
// counter space.
enum class StreamRole : std::uint32_t {
  samples = 1,
  dataset = 2,
  calibration = 3,
  noise = 4,
  start_state = 5,
  test = 99,
};

// Counter-based generator. The key is the master seed; the counter carries
// (block index lo, block index hi, trial index, role). Two streams with
// different (seed, trial, role) never overlap, and the output depends only on
// integer arithmetic up to the float conversions below:
//   uniform() = (top 53 bits) * 2^-53, in [0, 1)
//   normal()  = Box-Muller on two uniforms (uses std::log / std::cos / std::sin)
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint32_t trial, StreamRole role);

  std::uint64_t next_u64();
  double uniform();
  // Uniform on (0, 1], safe for logarithms.
  double uniform_pos();
  double normal();
  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t blocks_consumed() const noexcept { return block_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint32_t trial_;
  std::uint32_t role_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;  // 32-bit words consumed from buf_
};

}  // namespace mdlab
