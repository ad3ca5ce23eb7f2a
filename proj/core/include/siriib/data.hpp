#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace siriib {

/// Images [N, 3, H, W] float32 in [0, 1], labels [N] int64, and the index of
/// each sample in its source split (used to pair archived adversarial
/// examples with their clean originals).
struct ImageBatch {
  torch::Tensor images;
  torch::Tensor labels;
  torch::Tensor indices;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }

  /// Throws kInvalidShape / kFormat if any invariant is broken.
  void validate(int64_t num_classes = 10) const;

  ImageBatch slice(int64_t begin, int64_t end) const;
  ImageBatch select(const torch::Tensor& rows) const;
};

inline constexpr int64_t kCifarRecordBytes = 1 + 3 * 32 * 32;
inline constexpr int64_t kCifarRecordsPerFile = 10000;
inline constexpr int64_t kCifarClasses = 10;

enum class Split { kTrain, kTest };

struct DatasetSpec {
  std::filesystem::path source;  // directory holding the CIFAR-10 *.bin files
  Split split = Split::kTrain;
  int64_t subset_size = 0;  // 0 = whole split
  bool class_balanced = true;
  uint64_t seed = 0;
};

/// Decodes CIFAR-10 binary records (1 label byte + 3072 channel-planar pixel
/// bytes). `first_index` numbers the records.
ImageBatch decode_cifar10(std::span<const uint8_t> bytes, int64_t first_index = 0);

/// Inverse of decode_cifar10; pixels are rounded to the nearest byte.
std::vector<uint8_t> encode_cifar10(const ImageBatch& batch);

/// Reads data_batch_1..5.bin (train) or test_batch.bin (test) from
/// spec.source, then draws the requested subset. The subset and its order are
/// a deterministic function of spec.seed.
ImageBatch load_cifar10(const DatasetSpec& spec);

/// Draws `size` rows, `size / classes` per class when balanced. Throws if
/// the split is too small or a balanced size is not divisible by the class
/// count.
ImageBatch sample_subset(const ImageBatch& full, int64_t size, bool class_balanced, uint64_t seed,
                         int64_t num_classes = kCifarClasses);

/// Class-structured 32x32 images for exercising the pipeline when CIFAR-10
/// is not available. Each class is a fixed colored grating; samples vary in
/// phase, contrast, background and noise.
ImageBatch make_synthetic_cifar(int64_t size, uint64_t seed, int64_t num_classes = kCifarClasses);

/// Writes `batch` as CIFAR-10 binary files under `dir` (train split into
/// data_batch_1..5.bin, or test_batch.bin).
void write_cifar10_split(const std::filesystem::path& dir, Split split, const ImageBatch& batch);

/// Mini-batches in order, or shuffled by `shuffle_seed` when given.
std::vector<ImageBatch> make_batches(const ImageBatch& data, int64_t batch_size,
                                     std::optional<uint64_t> shuffle_seed = std::nullopt);

}  // namespace siriib
