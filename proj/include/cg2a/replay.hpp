#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cg2a/augbox.hpp"
#include "cg2a/rng.hpp"

namespace cg2a {

using augbox::ImageObservation;

struct Transition {
  ImageObservation obs;
  std::size_t action = 0;
  double reward = 0.0;
  ImageObservation next_obs;
  bool done = false;
};

struct TransitionBatch {
  Tensor<float> obs;       // [B, C, H, W]
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  Tensor<float> next_obs;  // [B, C, H, W]
  std::vector<std::uint8_t> done;

  std::size_t size() const noexcept { return actions.size(); }
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement) over
/// filled slots. Pixels are stored as 8-bit values v·255 rounded, which is
/// lossless for environment frames (multiples of 1/255).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, Shape obs_shape);

  /// Throws StructuralError on a shape mismatch and NumericInputError on a
  /// non-finite reward.
  void push(const Transition& t);

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  const Shape& obs_shape() const noexcept { return obs_shape_; }

  /// Uniform slot indices in [0, size()). Throws ProtocolError when empty.
  std::vector<std::size_t> sample_indices(Rng& rng, std::size_t batch) const;
  TransitionBatch gather(std::span<const std::size_t> slots) const;
  TransitionBatch sample(Rng& rng, std::size_t batch) const { return gather(sample_indices(rng, batch)); }

 private:
  std::size_t capacity_;
  Shape obs_shape_;
  std::size_t obs_size_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::uint8_t> obs_;
  std::vector<std::uint8_t> next_obs_;
  std::vector<std::size_t> actions_;
  std::vector<double> rewards_;
  std::vector<std::uint8_t> done_;
};

}  // namespace cg2a
