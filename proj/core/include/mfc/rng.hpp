#pragma once

#include <cstdint>
#include <utility>

namespace mfc {

// Roles a noise stream can play inside a simulation. Streams with distinct
// roles never collide even for equal (scenario, particle) indices.
enum class StreamRole : std::uint64_t {
  Common = 1,
  IdioW = 2,
  IdioB = 3,
  Init = 4,
  Audit = 5,
  Quadrature = 6,
  Probe = 7,
};

// Counter-based generator (Philox-4x32-10). A stream is identified by a
// 64-bit key; the key is derived from (root seed, role, scenario, particle)
// so that enlarging the scenario count never perturbs existing streams.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t derive_key(std::uint64_t root_seed, StreamRole role,
                                  std::uint64_t scenario = 0,
                                  std::uint64_t particle = 0);

  // Uniform on [0, 1).
  double uniform();
  // Standard normal via Box-Muller on the counter stream.
  double normal();
  std::uint64_t next_u64();

 private:
  void refill();

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::uint32_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace mfc
