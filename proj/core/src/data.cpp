#include "siriib/data.hpp"

#include "siriib/error.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace siriib {

void ImageBatch::validate(int64_t num_classes) const {
  require(images.defined() && images.dim() == 4 && images.size(1) == 3, ErrorCode::kInvalidShape,
          "ImageBatch: images must be [N, 3, H, W]");
  require(labels.defined() && labels.dim() == 1 && labels.size(0) == images.size(0),
          ErrorCode::kInvalidShape, "ImageBatch: labels must be [N]");
  require(indices.defined() && indices.sizes() == labels.sizes(), ErrorCode::kInvalidShape,
          "ImageBatch: indices must be [N]");
  if (size() == 0) return;
  require(images.min().item<double>() >= 0.0 && images.max().item<double>() <= 1.0,
          ErrorCode::kFormat, "ImageBatch: intensities must lie in [0, 1]");
  require(labels.min().item<int64_t>() >= 0 && labels.max().item<int64_t>() < num_classes,
          ErrorCode::kFormat, "ImageBatch: label out of range");
}

ImageBatch ImageBatch::slice(int64_t begin, int64_t end) const {
  return {images.slice(0, begin, end), labels.slice(0, begin, end), indices.slice(0, begin, end)};
}

ImageBatch ImageBatch::select(const torch::Tensor& rows) const {
  return {images.index_select(0, rows), labels.index_select(0, rows),
          indices.index_select(0, rows)};
}

ImageBatch decode_cifar10(std::span<const uint8_t> bytes, int64_t first_index) {
  require(bytes.size() % kCifarRecordBytes == 0, ErrorCode::kFormat,
          "CIFAR-10: truncated file (" + std::to_string(bytes.size()) +
              " bytes is not a whole number of 3073-byte records)");
  const int64_t n = static_cast<int64_t>(bytes.size()) / kCifarRecordBytes;
  auto pixels = torch::empty({n, 3, 32, 32}, torch::kUInt8);
  auto labels = torch::empty({n}, torch::kInt64);
  auto* dst = pixels.data_ptr<uint8_t>();
  auto* lab = labels.data_ptr<int64_t>();
  for (int64_t i = 0; i < n; ++i) {
    const auto* rec = bytes.data() + i * kCifarRecordBytes;
    require(rec[0] < kCifarClasses, ErrorCode::kFormat,
            "CIFAR-10: label byte " + std::to_string(rec[0]) + " > 9 in record " +
                std::to_string(first_index + i));
    lab[i] = rec[0];
    std::copy(rec + 1, rec + kCifarRecordBytes, dst + i * (kCifarRecordBytes - 1));
  }
  return {pixels.to(torch::kFloat32) / 255.0f, labels,
          torch::arange(first_index, first_index + n, torch::kInt64)};
}

std::vector<uint8_t> encode_cifar10(const ImageBatch& batch) {
  require(batch.images.dim() == 4 && batch.images.size(1) == 3 && batch.images.size(2) == 32 &&
              batch.images.size(3) == 32,
          ErrorCode::kInvalidShape, "CIFAR-10: images must be [N, 3, 32, 32]");
  const int64_t n = batch.size();
  auto bytes_t = (batch.images.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
  auto labels = batch.labels.to(torch::kInt64).contiguous();
  std::vector<uint8_t> out(static_cast<size_t>(n * kCifarRecordBytes));
  const auto* src = bytes_t.data_ptr<uint8_t>();
  for (int64_t i = 0; i < n; ++i) {
    auto* rec = out.data() + i * kCifarRecordBytes;
    rec[0] = static_cast<uint8_t>(labels[i].item<int64_t>());
    std::copy(src + i * (kCifarRecordBytes - 1), src + (i + 1) * (kCifarRecordBytes - 1), rec + 1);
  }
  return out;
}

namespace {

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::filesystem::path> split_files(const std::filesystem::path& dir, Split split) {
  if (split == Split::kTest) return {dir / "test_batch.bin"};
  std::vector<std::filesystem::path> files;
  for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  return files;
}

}  // namespace

ImageBatch load_cifar10(const DatasetSpec& spec) {
  std::vector<ImageBatch> parts;
  int64_t next_index = 0;
  for (const auto& file : split_files(spec.source, spec.split)) {
    auto bytes = read_file(file);
    parts.push_back(decode_cifar10(bytes, next_index));
    next_index += parts.back().size();
  }
  std::vector<torch::Tensor> images, labels, indices;
  for (auto& p : parts) {
    images.push_back(p.images);
    labels.push_back(p.labels);
    indices.push_back(p.indices);
  }
  ImageBatch full{torch::cat(images), torch::cat(labels), torch::cat(indices)};
  const int64_t size = spec.subset_size > 0 ? spec.subset_size : full.size();
  return sample_subset(full, size, spec.class_balanced && spec.subset_size > 0, spec.seed);
}

ImageBatch sample_subset(const ImageBatch& full, int64_t size, bool class_balanced, uint64_t seed,
                         int64_t num_classes) {
  require(size > 0 && size <= full.size(), ErrorCode::kConfig,
          "subset size " + std::to_string(size) + " exceeds split size " +
              std::to_string(full.size()));
  std::mt19937_64 rng(seed);
  std::vector<int64_t> chosen;
  if (class_balanced) {
    require(size % num_classes == 0, ErrorCode::kConfig,
            "balanced subset size must be divisible by the class count");
    const int64_t per_class = size / num_classes;
    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(num_classes));
    auto labels = full.labels.contiguous();
    const auto* lab = labels.data_ptr<int64_t>();
    for (int64_t i = 0; i < full.size(); ++i) by_class[static_cast<size_t>(lab[i])].push_back(i);
    for (auto& rows : by_class) {
      require(static_cast<int64_t>(rows.size()) >= per_class, ErrorCode::kConfig,
              "not enough samples in a class for a balanced subset");
      std::shuffle(rows.begin(), rows.end(), rng);
      chosen.insert(chosen.end(), rows.begin(), rows.begin() + per_class);
    }
  } else {
    chosen.resize(static_cast<size_t>(full.size()));
    std::iota(chosen.begin(), chosen.end(), 0);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(static_cast<size_t>(size));
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return full.select(torch::tensor(chosen, torch::kInt64));
}

ImageBatch make_synthetic_cifar(int64_t size, uint64_t seed, int64_t num_classes) {
  require(size > 0 && num_classes > 1, ErrorCode::kInvalidArgument,
          "synthetic data: size and class count must be positive");
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const auto opts = torch::TensorOptions().dtype(torch::kFloat32);

  // Class templates are fixed; only per-sample variation depends on `seed`.
  auto tgen = at::make_generator<at::CPUGeneratorImpl>(0x51D1B);
  auto orientation = torch::arange(num_classes, opts) * (std::numbers::pi / num_classes);
  auto frequency = 2.0 + at::rand({num_classes}, tgen, opts) * 3.0;
  auto color = at::rand({num_classes, 3}, tgen, opts) * 2.0 - 1.0;
  color = color / torch::linalg_vector_norm(color, 2, {1}, true);

  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto labels = torch::arange(size, torch::kInt64).remainder(num_classes);
  labels = labels.index_select(0, at::randperm(size, gen, torch::kInt64));

  auto coords = torch::arange(32, opts) / 32.0;
  auto yy = coords.view({1, 32, 1});
  auto xx = coords.view({1, 1, 32});

  auto theta = orientation.index_select(0, labels) + (at::rand({size}, gen, opts) - 0.5) * 0.3;
  auto freq = frequency.index_select(0, labels);
  auto phase = at::rand({size}, gen, opts) * kTwoPi;
  auto contrast = 0.15 + at::rand({size}, gen, opts) * 0.15;
  auto wave = torch::cos(kTwoPi * freq.view({-1, 1, 1}) *
                             (xx * torch::cos(theta).view({-1, 1, 1}) +
                              yy * torch::sin(theta).view({-1, 1, 1})) +
                         phase.view({-1, 1, 1}));
  auto signal = contrast.view({-1, 1, 1, 1}) * color.index_select(0, labels).view({-1, 3, 1, 1}) *
                wave.unsqueeze(1);

  // Class-independent low-frequency background and pixel noise.
  auto bg_theta = at::rand({size}, gen, opts) * kTwoPi;
  auto bg_phase = at::rand({size}, gen, opts) * kTwoPi;
  auto bg_color = (at::rand({size, 3}, gen, opts) - 0.5) * 0.3;
  auto bg = torch::cos(kTwoPi * (xx * torch::cos(bg_theta).view({-1, 1, 1}) +
                                 yy * torch::sin(bg_theta).view({-1, 1, 1})) +
                       bg_phase.view({-1, 1, 1}));
  auto background = bg_color.view({-1, 3, 1, 1}) * bg.unsqueeze(1);
  auto base = 0.35 + at::rand({size, 3, 1, 1}, gen, opts) * 0.3;
  auto noise = at::randn({size, 3, 32, 32}, gen, opts) * 0.03;

  auto images = (base + signal + background + noise).clamp(0.0, 1.0);
  // Quantize like real 8-bit data so CIFAR-format round trips are exact.
  images = (images * 255.0).round() / 255.0;
  return {images.contiguous(), labels, torch::arange(size, torch::kInt64)};
}

void write_cifar10_split(const std::filesystem::path& dir, Split split, const ImageBatch& batch) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  };
  if (split == Split::kTest) {
    write(dir / "test_batch.bin", encode_cifar10(batch));
    return;
  }
  const int64_t n = batch.size();
  for (int64_t f = 0; f < 5; ++f) {
    const int64_t begin = n * f / 5;
    const int64_t end = n * (f + 1) / 5;
    write(dir / ("data_batch_" + std::to_string(f + 1) + ".bin"),
          encode_cifar10(batch.slice(begin, end)));
  }
}

std::vector<ImageBatch> make_batches(const ImageBatch& data, int64_t batch_size,
                                     std::optional<uint64_t> shuffle_seed) {
  require(batch_size > 0, ErrorCode::kInvalidArgument, "batch size must be positive");
  ImageBatch ordered = data;
  if (shuffle_seed) {
    std::vector<int64_t> rows(static_cast<size_t>(data.size()));
    std::iota(rows.begin(), rows.end(), 0);
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    ordered = data.select(torch::tensor(rows, torch::kInt64));
  }
  std::vector<ImageBatch> out;
  for (int64_t begin = 0; begin < ordered.size(); begin += batch_size) {
    out.push_back(ordered.slice(begin, std::min(begin + batch_size, ordered.size())));
  }
  return out;
}

}  // namespace siriib
