#pragma once

// Observation augmentations. An observation is a [K·C, H, W] float tensor of
// K stacked RGB frames with every value in [0, 1]. Each augmentation makes one
// random draw per observation and applies it identically to all K frames.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cg2a/rng.hpp"
#include "cg2a/tensor.hpp"

namespace cg2a::augbox {

using ImageObservation = Tensor<float>;

inline constexpr std::size_t kColorChannels = 3;
inline constexpr std::size_t kFrameStack = 3;
inline constexpr double kOverlaySLimit = 0.20;

enum class AugKind { Identity, RandomShift, RandomConv, Cutout, Mixup, Overlay, OverlayS };

struct AugmentationSpec {
  AugKind kind = AugKind::Identity;
  // pad (RandomShift), kernel size (RandomConv), box side fraction (Cutout),
  // blend coefficient λ (Mixup) or μ (Overlay / OverlayS).
  double param = 0.0;

  static AugmentationSpec identity() { return {AugKind::Identity, 0.0}; }
  static AugmentationSpec random_shift(std::size_t pad) { return {AugKind::RandomShift, double(pad)}; }
  static AugmentationSpec random_conv(std::size_t kernel = 3) { return {AugKind::RandomConv, double(kernel)}; }
  static AugmentationSpec cutout(double box_fraction) { return {AugKind::Cutout, box_fraction}; }
  static AugmentationSpec mixup(double lambda) { return {AugKind::Mixup, lambda}; }
  static AugmentationSpec overlay(double mu = 0.5) { return {AugKind::Overlay, mu}; }
  static AugmentationSpec overlay_s(double mu = 0.15) { return {AugKind::OverlayS, mu}; }

  /// Throws StructuralError when the parameter is out of range for the kind.
  void validate() const;

  /// "identity", "shift:4", "conv:3", "cutout:0.25", "mixup:0.5",
  /// "overlay:0.5", "overlay_s:0.15".
  std::string name() const;
  static AugmentationSpec parse(const std::string& text);

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

/// Procedural stand-in for a natural-image distractor set: colour gradients,
/// smooth value noise and checkerboards, each a [C, H, W] image in [0, 1].
/// The content is a pure function of (seed, count, shape).
class DistractorBank {
 public:
  DistractorBank(std::uint64_t seed, std::size_t count, std::size_t height, std::size_t width,
                 std::size_t channels = kColorChannels);

  std::size_t size() const noexcept { return images_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const Tensor<float>& image(std::size_t i) const { return images_.at(i); }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }

 private:
  std::uint64_t seed_;
  std::size_t channels_, height_, width_;
  std::vector<Tensor<float>> images_;
};

enum class OverlayForm {
  // (1 - μ)·o + μ·ε
  Convex,
  // (1 - μ)·o + ε, clamped; kept for fidelity comparisons.
  Literal,
};

struct CutoutBox {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

/// Box of max(1, ⌊f·H⌋) × max(1, ⌊f·W⌋) at a uniform position.
CutoutBox sample_cutout_box(std::size_t height, std::size_t width, double fraction, Rng& rng);

/// Blends one distractor image [C, H, W] into every frame of obs.
ImageObservation overlay(const ImageObservation& obs, const Tensor<float>& distractor, double mu,
                         OverlayForm form = OverlayForm::Convex);

/// Applies one augmentation to one observation. Throws StructuralError when
/// obs does not fit the bank's image shape.
ImageObservation apply(const ImageObservation& obs, const AugmentationSpec& spec,
                       const DistractorBank& bank, Rng& rng,
                       OverlayForm form = OverlayForm::Convex);

/// Augments each observation of a [B, K·C, H, W] batch with its own stream
/// seeded by derive_seed(seed, b). Samples are processed in parallel.
Tensor<float> apply_batch(const Tensor<float>& batch, const AugmentationSpec& spec,
                          const DistractorBank& bank, std::uint64_t seed,
                          OverlayForm form = OverlayForm::Convex);

/// Ordered augmentation combination with Identity at index 0.
class Combination {
 public:
  std::size_t size() const noexcept { return specs_.size(); }
  const AugmentationSpec& operator[](std::size_t i) const { return specs_[i]; }
  std::span<const AugmentationSpec> specs() const noexcept { return specs_; }
  std::vector<std::string> names() const;

 private:
  friend Combination make_combination(std::span<const AugmentationSpec> specs);
  std::vector<AugmentationSpec> specs_;
};

/// Puts Identity first (adding it when absent) and keeps the remaining order.
/// Throws StructuralError for an empty list, more than one Identity or an
/// invalid member.
Combination make_combination(std::span<const AugmentationSpec> specs);

/// Non-identity members of the default combination: random conv(3),
/// overlay(0.5), overlay-S(0.15).
std::vector<AugmentationSpec> default_augmentations();
/// Non-identity members of the gradient-analysis set: shift(4), conv(3),
/// cutout(0.3), mixup(0.5).
std::vector<AugmentationSpec> analysis_augmentations();

}  // namespace cg2a::augbox
