#include "siriib/image_io.hpp"

#include "siriib/error.hpp"

#include <png.h>

#include <cstdio>
#include <system_error>
#include <memory>

namespace siriib {
namespace {

torch::Tensor to_rgb(const torch::Tensor& image) {
  auto x = image.detach().to(torch::kFloat32);
  if (x.dim() == 2) x = x.unsqueeze(0);
  require(x.dim() == 3, ErrorCode::kInvalidShape, "png: expected [C, H, W] or [H, W]");
  if (x.size(0) == 1) x = x.expand({3, x.size(1), x.size(2)});
  require(x.size(0) == 3, ErrorCode::kInvalidShape, "png: expected 1 or 3 channels");
  return x;
}

}  // namespace

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  auto rgb = to_rgb(image);
  auto bytes = (rgb.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  const auto height = static_cast<png_uint_32>(bytes.size(0));
  const auto width = static_cast<png_uint_32>(bytes.size(1));

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    require(!ec, ErrorCode::kIo, "cannot create " + path.parent_path().string());
  }
  std::unique_ptr<FILE, decltype(&std::fclose)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(file != nullptr, ErrorCode::kIo, "cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  require(png != nullptr && info != nullptr, ErrorCode::kIo, "png: out of memory");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "png: failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* data = bytes.data_ptr<uint8_t>();
  for (png_uint_32 r = 0; r < height; ++r) png_write_row(png, data + static_cast<size_t>(r) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png_grid(const std::filesystem::path& path,
                    const std::vector<std::vector<torch::Tensor>>& rows, int scale) {
  require(!rows.empty() && !rows.front().empty(), ErrorCode::kInvalidArgument, "png grid: empty");
  require(scale >= 1, ErrorCode::kInvalidArgument, "png grid: scale must be >= 1");
  const auto first = to_rgb(rows.front().front());
  const int64_t h = first.size(1) * scale;
  const int64_t w = first.size(2) * scale;
  size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  auto canvas = torch::ones({3, static_cast<int64_t>(rows.size()) * (h + 1) + 1,
                             static_cast<int64_t>(cols) * (w + 1) + 1});
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      auto img = to_rgb(rows[r][c]);
      require(img.size(1) * scale == h && img.size(2) * scale == w, ErrorCode::kInvalidShape,
              "png grid: images must share one size");
      img = img.repeat_interleave(scale, 1).repeat_interleave(scale, 2);
      const int64_t top = static_cast<int64_t>(r) * (h + 1) + 1;
      const int64_t left = static_cast<int64_t>(c) * (w + 1) + 1;
      canvas.slice(1, top, top + h).slice(2, left, left + w).copy_(img);
    }
  }
  write_png(path, canvas);
}

}  // namespace siriib
