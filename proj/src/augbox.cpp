#include "cg2a/augbox.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "cg2a/errors.hpp"

namespace cg2a::augbox {

namespace {

struct KindName {
  AugKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {AugKind::Identity, "identity"}, {AugKind::RandomShift, "shift"},
    {AugKind::RandomConv, "conv"},   {AugKind::Cutout, "cutout"},
    {AugKind::Mixup, "mixup"},       {AugKind::Overlay, "overlay"},
    {AugKind::OverlayS, "overlay_s"},
};

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void check_fits_bank(const ImageObservation& obs, const DistractorBank& bank) {
  const auto& s = obs.shape();
  if (s.size() != 3 || s[0] == 0 || s[0] % bank.channels() != 0 || s[1] != bank.height() ||
      s[2] != bank.width()) {
    throw StructuralError("observation " + shape_string(s) + " does not fit distractor images [" +
                          std::to_string(bank.channels()) + "x" + std::to_string(bank.height()) +
                          "x" + std::to_string(bank.width()) + "]");
  }
}

// (1 - t)·a + t·b per pixel, or (1 - t)·a + b for the literal overlay, with the
// distractor broadcast across frames.
ImageObservation blend(const ImageObservation& obs, const Tensor<float>& distractor, double t,
                       bool literal) {
  ImageObservation out = obs;
  const std::size_t plane = distractor.size();
  const float* eps = distractor.raw();
  float* dst = out.raw();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = dst[i];
    const double b = eps[i % plane];
    dst[i] = clamp01(literal ? (1.0 - t) * a + b : (1.0 - t) * a + t * b);
  }
  return out;
}

ImageObservation random_shift(const ImageObservation& obs, std::size_t pad, Rng& rng) {
  if (pad == 0) return obs;
  const std::size_t channels = obs.dim(0), height = obs.dim(1), width = obs.dim(2);
  const auto dy = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - static_cast<std::ptrdiff_t>(pad);
  const auto dx = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - static_cast<std::ptrdiff_t>(pad);
  ImageObservation out(obs.shape());
  const auto hmax = static_cast<std::ptrdiff_t>(height) - 1;
  const auto wmax = static_cast<std::ptrdiff_t>(width) - 1;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < height; ++y) {
      const auto sy = static_cast<std::size_t>(std::clamp(static_cast<std::ptrdiff_t>(y) + dy, std::ptrdiff_t{0}, hmax));
      for (std::size_t x = 0; x < width; ++x) {
        const auto sx = static_cast<std::size_t>(std::clamp(static_cast<std::ptrdiff_t>(x) + dx, std::ptrdiff_t{0}, wmax));
        out[(c * height + y) * width + x] = obs[(c * height + sy) * width + sx];
      }
    }
  return out;
}

// One random colour-mixing kernel [C, C, k, k] with zero-mean uniform entries,
// replicate-padded "same" convolution per frame, then min-max rescaling of the
// whole observation.
ImageObservation random_conv(const ImageObservation& obs, std::size_t kernel, std::size_t colors,
                             Rng& rng) {
  const std::size_t channels = obs.dim(0), height = obs.dim(1), width = obs.dim(2);
  const std::size_t frames = channels / colors;
  std::vector<double> k(colors * colors * kernel * kernel);
  for (double& v : k) v = rng.uniform(-1.0, 1.0);

  // Replicate-padded copies of each input plane, then shifted multiply-adds.
  const std::size_t r = kernel / 2;
  const std::size_t ph = height + 2 * r, pw = width + 2 * r;
  std::vector<double> padded(colors * ph * pw);
  std::vector<double> raw(obs.size(), 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < colors; ++c)
      for (std::size_t py = 0; py < ph; ++py) {
        const std::size_t sy = std::clamp(py, r, r + height - 1) - r;
        const float* src = obs.raw() + ((f * colors + c) * height + sy) * width;
        double* dst = padded.data() + (c * ph + py) * pw;
        for (std::size_t px = 0; px < pw; ++px) dst[px] = src[std::clamp(px, r, r + width - 1) - r];
      }
    for (std::size_t o = 0; o < colors; ++o) {
      double* plane = raw.data() + (f * colors + o) * height * width;
      for (std::size_t c = 0; c < colors; ++c)
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const double kv = k[((o * colors + c) * kernel + ky) * kernel + kx];
            for (std::size_t y = 0; y < height; ++y) {
              const double* src = padded.data() + (c * ph + y + ky) * pw + kx;
              double* dst = plane + y * width;
              for (std::size_t x = 0; x < width; ++x) dst[x] += kv * src[x];
            }
          }
    }
  }

  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double lo_v = *lo, span = *hi - *lo;
  ImageObservation out(obs.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = span > 1e-12 ? clamp01((raw[i] - lo_v) / span) : clamp01(raw[i]);
  }
  return out;
}

ImageObservation cutout(const ImageObservation& obs, double fraction, Rng& rng) {
  const std::size_t channels = obs.dim(0), height = obs.dim(1), width = obs.dim(2);
  const auto box = sample_cutout_box(height, width, fraction, rng);
  ImageObservation out = obs;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = box.top; y < box.top + box.height; ++y)
      std::fill_n(out.raw() + (c * height + y) * width + box.left, box.width, 0.0f);
  return out;
}

// Smooth value noise: random lattice values bilinearly blended with a
// smoothstep, two octaves.
void fill_value_noise(Tensor<float>& img, Rng& rng) {
  const std::size_t channels = img.dim(0), height = img.dim(1), width = img.dim(2);
  std::vector<double> acc(img.size(), 0.0);
  double amp = 1.0, total = 0.0;
  std::size_t cells = 3 + rng.below(4);
  for (int octave = 0; octave < 2; ++octave) {
    const std::size_t g = cells + 1;
    std::vector<double> lattice(channels * g * g);
    for (double& v : lattice) v = rng.uniform();
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double fy = double(y) / double(height) * double(cells);
          const double fx = double(x) / double(width) * double(cells);
          const auto iy = static_cast<std::size_t>(fy), ix = static_cast<std::size_t>(fx);
          double ty = fy - double(iy), tx = fx - double(ix);
          ty = ty * ty * (3 - 2 * ty);
          tx = tx * tx * (3 - 2 * tx);
          const double* L = lattice.data() + c * g * g;
          const double top = L[iy * g + ix] * (1 - tx) + L[iy * g + ix + 1] * tx;
          const double bot = L[(iy + 1) * g + ix] * (1 - tx) + L[(iy + 1) * g + ix + 1] * tx;
          acc[(c * height + y) * width + x] += amp * (top * (1 - ty) + bot * ty);
        }
    total += amp;
    amp *= 0.5;
    cells *= 2;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) img[i] = clamp01(acc[i] / total);
}

void fill_gradient(Tensor<float>& img, Rng& rng) {
  const std::size_t channels = img.dim(0), height = img.dim(1), width = img.dim(2);
  std::vector<double> c0(channels), c1(channels);
  for (auto& v : c0) v = rng.uniform();
  for (auto& v : c1) v = rng.uniform();
  const double angle = rng.uniform(0.0, 2.0 * 3.141592653589793);
  const double ux = std::cos(angle), uy = std::sin(angle);
  const double extent = std::abs(ux) * double(width - 1) + std::abs(uy) * double(height - 1);
  const double origin = std::min(0.0, ux * double(width - 1)) + std::min(0.0, uy * double(height - 1));
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double t = extent > 0 ? (ux * double(x) + uy * double(y) - origin) / extent : 0.0;
      for (std::size_t c = 0; c < channels; ++c)
        img[(c * height + y) * width + x] = clamp01(c0[c] + (c1[c] - c0[c]) * t);
    }
}

void fill_checkerboard(Tensor<float>& img, Rng& rng) {
  const std::size_t channels = img.dim(0), height = img.dim(1), width = img.dim(2);
  std::vector<double> c0(channels), c1(channels);
  for (auto& v : c0) v = rng.uniform();
  for (auto& v : c1) v = rng.uniform();
  const std::size_t cell = 3 + rng.below(10);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const bool odd = ((y / cell) + (x / cell)) % 2 != 0;
      for (std::size_t c = 0; c < channels; ++c)
        img[(c * height + y) * width + x] = clamp01(odd ? c1[c] : c0[c]);
    }
}

}  // namespace

void AugmentationSpec::validate() const {
  const auto bad = [this](const std::string& why) {
    throw StructuralError("augmentation " + name() + ": " + why);
  };
  if (!std::isfinite(param)) bad("parameter must be finite");
  switch (kind) {
    case AugKind::Identity:
      break;
    case AugKind::RandomShift:
      if (param < 0 || param != std::floor(param)) bad("pad must be a non-negative integer");
      break;
    case AugKind::RandomConv:
      if (param < 1 || param != std::floor(param) || std::fmod(param, 2.0) != 1.0) {
        bad("kernel size must be a positive odd integer");
      }
      break;
    case AugKind::Cutout:
      if (!(param > 0 && param < 1)) bad("box fraction must lie in (0, 1)");
      break;
    case AugKind::Mixup:
      if (!(param >= 0 && param <= 1)) bad("coefficient must lie in [0, 1]");
      break;
    case AugKind::Overlay:
      if (!(param >= 0 && param < 1)) bad("mu must lie in [0, 1)");
      break;
    case AugKind::OverlayS:
      if (!(param >= 0 && param < kOverlaySLimit)) bad("mu must lie in [0, 0.20)");
      break;
  }
}

std::string AugmentationSpec::name() const {
  for (const auto& kn : kKindNames) {
    if (kn.kind != kind) continue;
    if (kind == AugKind::Identity) return kn.name;
    return std::string(kn.name) + ":" + format_real(param);
  }
  return "unknown";
}

AugmentationSpec AugmentationSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  for (const auto& kn : kKindNames) {
    if (head != kn.name) continue;
    AugmentationSpec spec{kn.kind, 0.0};
    if (kn.kind == AugKind::Identity) {
      if (colon != std::string::npos) throw StructuralError("identity takes no parameter");
      return spec;
    }
    if (colon == std::string::npos) throw StructuralError("augmentation '" + text + "' needs a parameter");
    const std::string arg = text.substr(colon + 1);
    const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), spec.param);
    if (res.ec != std::errc() || res.ptr != arg.data() + arg.size()) {
      throw StructuralError("augmentation '" + text + "' has a malformed parameter");
    }
    spec.validate();
    return spec;
  }
  throw StructuralError("unknown augmentation '" + text + "'");
}

DistractorBank::DistractorBank(std::uint64_t seed, std::size_t count, std::size_t height,
                               std::size_t width, std::size_t channels)
    : seed_(seed), channels_(channels), height_(height), width_(width) {
  if (count == 0 || height == 0 || width == 0 || channels == 0) {
    throw StructuralError("distractor bank dimensions must be positive");
  }
  images_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    Tensor<float> img({channels, height, width});
    switch (i % 3) {
      case 0: fill_gradient(img, rng); break;
      case 1: fill_value_noise(img, rng); break;
      default: fill_checkerboard(img, rng); break;
    }
    images_.push_back(std::move(img));
  }
}

CutoutBox sample_cutout_box(std::size_t height, std::size_t width, double fraction, Rng& rng) {
  CutoutBox box;
  box.height = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(fraction * double(height))), 1, height);
  box.width = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(fraction * double(width))), 1, width);
  box.top = rng.below(height - box.height + 1);
  box.left = rng.below(width - box.width + 1);
  return box;
}

ImageObservation overlay(const ImageObservation& obs, const Tensor<float>& distractor, double mu,
                         OverlayForm form) {
  if (!(mu >= 0 && mu < 1)) throw StructuralError("overlay: mu must lie in [0, 1)");
  const auto& s = obs.shape();
  const auto& d = distractor.shape();
  if (s.size() != 3 || d.size() != 3 || d[0] == 0 || s[0] % d[0] != 0 || s[1] != d[1] || s[2] != d[2]) {
    throw StructuralError("overlay: observation " + shape_string(s) + " vs distractor " + shape_string(d));
  }
  return blend(obs, distractor, mu, form == OverlayForm::Literal);
}

ImageObservation apply(const ImageObservation& obs, const AugmentationSpec& spec,
                       const DistractorBank& bank, Rng& rng, OverlayForm form) {
  check_fits_bank(obs, bank);
  switch (spec.kind) {
    case AugKind::Identity:
      return obs;
    case AugKind::RandomShift:
      return random_shift(obs, static_cast<std::size_t>(spec.param), rng);
    case AugKind::RandomConv:
      return random_conv(obs, static_cast<std::size_t>(spec.param), bank.channels(), rng);
    case AugKind::Cutout:
      return cutout(obs, spec.param, rng);
    case AugKind::Mixup:
      return blend(obs, bank.image(rng.below(bank.size())), 1.0 - spec.param, false);
    case AugKind::Overlay:
    case AugKind::OverlayS:
      return overlay(obs, bank.image(rng.below(bank.size())), spec.param, form);
  }
  return obs;
}

Tensor<float> apply_batch(const Tensor<float>& batch, const AugmentationSpec& spec,
                          const DistractorBank& bank, std::uint64_t seed, OverlayForm form) {
  const auto& s = batch.shape();
  if (s.size() != 4) throw StructuralError("apply_batch: expected [B, C, H, W], got " + shape_string(s));
  if (spec.kind == AugKind::Identity) return batch;
  const std::size_t n = s[0];
  const std::size_t per = batch.size() / std::max<std::size_t>(n, 1);
  Tensor<float> out(s);
  // Validate the shape once outside the parallel region.
  check_fits_bank(ImageObservation({s[1], s[2], s[3]}), bank);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(n); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    Rng rng(derive_seed(seed, b));
    ImageObservation one({s[1], s[2], s[3]},
                         std::vector<float>(batch.raw() + b * per, batch.raw() + (b + 1) * per));
    const auto aug = apply(one, spec, bank, rng, form);
    std::copy(aug.raw(), aug.raw() + per, out.raw() + b * per);
  }
  return out;
}

std::vector<std::string> Combination::names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.name());
  return out;
}

Combination make_combination(std::span<const AugmentationSpec> specs) {
  if (specs.empty()) throw StructuralError("augmentation combination is empty");
  Combination gamma;
  gamma.specs_.push_back(AugmentationSpec::identity());
  std::size_t identities = 0;
  for (const auto& s : specs) {
    s.validate();
    if (s.kind == AugKind::Identity) {
      if (++identities > 1) throw StructuralError("augmentation combination lists Identity twice");
      continue;
    }
    gamma.specs_.push_back(s);
  }
  return gamma;
}

std::vector<AugmentationSpec> default_augmentations() {
  return {AugmentationSpec::random_conv(3), AugmentationSpec::overlay(0.5),
          AugmentationSpec::overlay_s(0.15)};
}

std::vector<AugmentationSpec> analysis_augmentations() {
  return {AugmentationSpec::random_shift(4), AugmentationSpec::random_conv(3),
          AugmentationSpec::cutout(0.3), AugmentationSpec::mixup(0.5)};
}

}  // namespace cg2a::augbox
