#include "cg2a/replay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cg2a/errors.hpp"

namespace cg2a {

namespace {

void encode(const ImageObservation& src, std::uint8_t* dst) {
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
  }
}

void decode(const std::uint8_t* src, std::size_t n, float* dst) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, Shape obs_shape)
    : capacity_(capacity), obs_shape_(std::move(obs_shape)), obs_size_(shape_size(obs_shape_)) {
  if (capacity_ == 0) throw StructuralError("replay capacity must be positive");
  obs_.resize(capacity_ * obs_size_);
  next_obs_.resize(capacity_ * obs_size_);
  actions_.resize(capacity_);
  rewards_.resize(capacity_);
  done_.resize(capacity_);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.obs.shape() != obs_shape_ || t.next_obs.shape() != obs_shape_) {
    throw StructuralError("replay: observation shape " + shape_string(t.obs.shape()) +
                          " does not match buffer shape " + shape_string(obs_shape_));
  }
  if (!std::isfinite(t.reward)) throw NumericInputError("replay: non-finite reward");
  encode(t.obs, obs_.data() + cursor_ * obs_size_);
  encode(t.next_obs, next_obs_.data() + cursor_ * obs_size_);
  actions_[cursor_] = t.action;
  rewards_[cursor_] = t.reward;
  done_[cursor_] = t.done ? 1 : 0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(Rng& rng, std::size_t batch) const {
  if (size_ == 0) throw ProtocolError("replay: sampling from an empty buffer");
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = rng.below(size_);
  return idx;
}

TransitionBatch ReplayBuffer::gather(std::span<const std::size_t> slots) const {
  Shape batch_shape{slots.size()};
  batch_shape.insert(batch_shape.end(), obs_shape_.begin(), obs_shape_.end());
  TransitionBatch b;
  b.obs = Tensor<float>(batch_shape);
  b.next_obs = Tensor<float>(batch_shape);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const std::size_t s = slots[k];
    if (s >= size_) throw StructuralError("replay: slot " + std::to_string(s) + " is not filled");
    decode(obs_.data() + s * obs_size_, obs_size_, b.obs.raw() + k * obs_size_);
    decode(next_obs_.data() + s * obs_size_, obs_size_, b.next_obs.raw() + k * obs_size_);
    b.actions.push_back(actions_[s]);
    b.rewards.push_back(rewards_[s]);
    b.done.push_back(done_[s]);
  }
  return b;
}

}  // namespace cg2a
