#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace ivrt {

// Counter-based generator built on the SplitMix64 finalizer.
//
//   key      = mix64(seed ^ mix64(stream + 0xD1B54A32D192ED03))
//   output_k = mix64(key + (k + 1) * 0x9E3779B97F4A7C15)
//   mix64(z) : z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              z ^ (z >> 31)
//
// Uniforms take the top 53 bits.  Normals use the Box-Muller transform,
// consuming two uniforms per pair.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();       // [0, 1)
  double uniform_open();  // (0, 1)
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  int categorical(const Eigen::VectorXd& probs);

  static std::uint64_t mix64(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ivrt
