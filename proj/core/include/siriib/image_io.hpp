#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace siriib {

/// Writes a [3, H, W] (or [H, W]) image with values in [0, 1] as an 8-bit PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Tiles rows of equally sized images into one PNG with a 1-pixel white
/// gutter, nearest-neighbour upscaled by `scale`.
void write_png_grid(const std::filesystem::path& path,
                    const std::vector<std::vector<torch::Tensor>>& rows, int scale = 2);

}  // namespace siriib
