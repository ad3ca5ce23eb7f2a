#include "siriib/spectral.hpp"

#include "siriib/error.hpp"

#include <string>

namespace siriib::spectral {
namespace {

void check_square_stack(const torch::Tensor& x, const char* what) {
  require(x.dim() >= 2, ErrorCode::kInvalidShape,
          std::string(what) + ": expected at least 2 dimensions");
  require(x.size(-1) == x.size(-2), ErrorCode::kInvalidShape,
          std::string(what) + ": channel matrices must be square, got " +
              std::to_string(x.size(-2)) + "x" + std::to_string(x.size(-1)));
}

void check_finite(const torch::Tensor& x, const char* what) {
  require(torch::isfinite(x).all().item<bool>(), ErrorCode::kNonFinite,
          std::string(what) + ": input contains NaN or Inf");
}

torch::Tensor apply_clip(torch::Tensor x, ClipMode clip) {
  return clip == ClipMode::kUnitInterval ? x.clamp(0.0, 1.0) : x;
}

}  // namespace

SvdFactors decompose(const torch::Tensor& image) {
  require(image.dim() == 3, ErrorCode::kInvalidShape, "decompose: expected [C, n, n] image");
  check_square_stack(image, "decompose");
  check_finite(image, "decompose");

  auto [u, s, vt] = torch::linalg_svd(image.to(torch::kFloat64), /*full_matrices=*/false);
  SvdFactors out;
  out.channels.reserve(static_cast<size_t>(image.size(0)));
  for (int64_t c = 0; c < image.size(0); ++c) {
    out.channels.push_back({u[c].contiguous(), s[c].contiguous(), vt[c].contiguous()});
  }
  return out;
}

torch::Tensor reconstruct(const SvdFactors& factors, ClipMode clip) {
  require(!factors.channels.empty(), ErrorCode::kInvalidShape, "reconstruct: no channels");
  std::vector<torch::Tensor> channels;
  channels.reserve(factors.channels.size());
  for (const auto& f : factors.channels) {
    require(f.u.dim() == 2 && f.vt.dim() == 2 && f.sigma.dim() == 1, ErrorCode::kInvalidShape,
            "reconstruct: U and Vt must be matrices, sigma a vector");
    const int64_t k = f.sigma.size(0);
    require(f.u.size(1) == k && f.vt.size(0) == k, ErrorCode::kInvalidShape,
            "reconstruct: U columns, sigma length and Vt rows disagree");
    auto u = f.u.to(torch::kFloat64);
    auto vt = f.vt.to(torch::kFloat64);
    auto sigma = f.sigma.to(torch::kFloat64);
    channels.push_back(torch::matmul(u * sigma.unsqueeze(0), vt));
  }
  const auto& first = channels.front();
  for (const auto& ch : channels) {
    require(ch.sizes() == first.sizes(), ErrorCode::kInvalidShape,
            "reconstruct: channels have different sizes");
  }
  return apply_clip(torch::stack(channels), clip);
}

torch::Tensor swap_singular_values(const torch::Tensor& adv, const torch::Tensor& clean,
                                   ClipMode clip) {
  require(adv.sizes() == clean.sizes(), ErrorCode::kInvalidShape,
          "swap_singular_values: adversarial and clean shapes differ");
  check_square_stack(adv, "swap_singular_values");
  check_finite(adv, "swap_singular_values");
  check_finite(clean, "swap_singular_values");

  auto [u, s_adv, vt] = torch::linalg_svd(adv.to(torch::kFloat64), /*full_matrices=*/false);
  auto s_clean = torch::linalg_svdvals(clean.to(torch::kFloat64));
  auto out = torch::matmul(u * s_clean.unsqueeze(-2), vt);
  return apply_clip(out, clip).to(adv.scalar_type());
}

torch::Tensor difference_map(const torch::Tensor& a, const torch::Tensor& b) {
  require(a.sizes() == b.sizes(), ErrorCode::kInvalidShape, "difference_map: shapes differ");
  auto d = (a.to(torch::kFloat64) - b.to(torch::kFloat64));
  const double lo = d.min().item<double>();
  const double hi = d.max().item<double>();
  if (!(hi > lo)) return torch::full_like(d, 0.5);
  return (d - lo) / (hi - lo);
}

std::vector<double> parseval_residual(const torch::Tensor& image) {
  require(image.dim() == 3, ErrorCode::kInvalidShape,
          "parseval_residual: expected [C, n, n] image");
  check_square_stack(image, "parseval_residual");
  check_finite(image, "parseval_residual");

  auto x = image.to(torch::kFloat64);
  const double nm = static_cast<double>(x.size(-1) * x.size(-2));
  auto spectral_energy = torch::linalg_svdvals(x).square().sum(-1);
  auto fourier_energy = torch::fft::fft2(x).abs().square().sum({-2, -1}) / nm;

  std::vector<double> out;
  out.reserve(static_cast<size_t>(x.size(0)));
  for (int64_t c = 0; c < x.size(0); ++c) {
    const double s = spectral_energy[c].item<double>();
    const double g = fourier_energy[c].item<double>();
    out.push_back(s == 0.0 ? 0.0 : std::abs(s - g) / s);
  }
  return out;
}

}  // namespace siriib::spectral
