#pragma once

// Exchange format for externally generated adversarial examples.
//
// <stem>.adv    : "SIRIIBAX" | u32 version | u32 norm (0 = L-inf, 1 = L2) |
//                 f64 epsilon | u32 ndim | u64 dims[ndim] | f32 data (C order)
// <stem>.labels : "SIRIIBLB" | u32 version | u64 n | u8 label[n] | u32 index[n]
//
// All integers and floats are little-endian. `index` is the position of the
// clean original in its source split.

#include "siriib/attacks.hpp"
#include "siriib/data.hpp"

#include <filesystem>

namespace siriib {

struct AdversarialArchive {
  static constexpr uint32_t kFormatVersion = 1;

  ImageBatch examples;
  Norm norm = Norm::kLinf;
  double epsilon = 0.0;
};

void save_archive(const std::filesystem::path& stem, const AdversarialArchive& archive);

/// Throws kVersionMismatch / kFormat on unknown versions or corrupt files.
AdversarialArchive load_archive(const std::filesystem::path& stem);

struct ArchiveReport {
  int64_t checked = 0;
  int64_t violations = 0;  // samples whose perturbation exceeds epsilon
  int64_t missing = 0;     // samples whose index is absent from the clean set
  double max_distance = 0.0;
};

/// Compares each archived example with its clean original (matched by
/// index) under the archive's norm. `tolerance` absorbs float rounding.
ArchiveReport validate_archive(const AdversarialArchive& archive, const ImageBatch& clean,
                               double tolerance = 1e-6);

}  // namespace siriib
