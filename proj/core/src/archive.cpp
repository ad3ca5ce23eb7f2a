#include "siriib/archive.hpp"

#include "siriib/error.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

namespace siriib {
namespace {

constexpr char kDataMagic[8] = {'S', 'I', 'R', 'I', 'I', 'B', 'A', 'X'};
constexpr char kLabelMagic[8] = {'S', 'I', 'R', 'I', 'I', 'B', 'L', 'B'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorCode::kFormat, what + ": truncated file");
  return v;
}

void expect_magic(std::istream& in, const char (&magic)[8], const std::string& what) {
  char buf[8];
  in.read(buf, 8);
  require(in && std::memcmp(buf, magic, 8) == 0, ErrorCode::kFormat, what + ": bad magic");
}

void expect_version(std::istream& in, const std::string& what) {
  const auto v = get<uint32_t>(in, what);
  require(v == AdversarialArchive::kFormatVersion, ErrorCode::kVersionMismatch,
          what + ": unsupported format version " + std::to_string(v));
}

}  // namespace

void save_archive(const std::filesystem::path& stem, const AdversarialArchive& archive) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto& ex = archive.examples;
  require(ex.images.dim() == 4, ErrorCode::kInvalidShape, "archive: images must be [N, C, H, W]");
  auto data = ex.images.to(torch::kFloat32).contiguous();
  {
    std::ofstream out(stem.string() + ".adv", std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + stem.string() + ".adv");
    out.write(kDataMagic, 8);
    put<uint32_t>(out, AdversarialArchive::kFormatVersion);
    put<uint32_t>(out, archive.norm == Norm::kLinf ? 0u : 1u);
    put<double>(out, archive.epsilon);
    put<uint32_t>(out, static_cast<uint32_t>(data.dim()));
    for (int64_t d : data.sizes()) put<uint64_t>(out, static_cast<uint64_t>(d));
    out.write(static_cast<const char*>(data.data_ptr()), static_cast<std::streamsize>(data.nbytes()));
  }
  std::ofstream out(stem.string() + ".labels", std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + stem.string() + ".labels");
  out.write(kLabelMagic, 8);
  put<uint32_t>(out, AdversarialArchive::kFormatVersion);
  const int64_t n = ex.size();
  put<uint64_t>(out, static_cast<uint64_t>(n));
  auto labels = ex.labels.to(torch::kInt64).contiguous();
  auto indices = ex.indices.to(torch::kInt64).contiguous();
  for (int64_t i = 0; i < n; ++i) put<uint8_t>(out, static_cast<uint8_t>(labels.data_ptr<int64_t>()[i]));
  for (int64_t i = 0; i < n; ++i) put<uint32_t>(out, static_cast<uint32_t>(indices.data_ptr<int64_t>()[i]));
}

AdversarialArchive load_archive(const std::filesystem::path& stem) {
  AdversarialArchive archive;
  const std::string adv = stem.string() + ".adv";
  const std::string lab = stem.string() + ".labels";
  {
    std::ifstream in(adv, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + adv);
    expect_magic(in, kDataMagic, adv);
    expect_version(in, adv);
    const auto norm = get<uint32_t>(in, adv);
    require(norm <= 1, ErrorCode::kFormat, adv + ": unknown norm code");
    archive.norm = norm == 0 ? Norm::kLinf : Norm::kL2;
    archive.epsilon = get<double>(in, adv);
    const auto ndim = get<uint32_t>(in, adv);
    require(ndim == 4, ErrorCode::kFormat, adv + ": expected 4 dimensions");
    std::vector<int64_t> dims;
    for (uint32_t i = 0; i < ndim; ++i) dims.push_back(static_cast<int64_t>(get<uint64_t>(in, adv)));
    archive.examples.images = torch::empty(dims, torch::kFloat32);
    in.read(static_cast<char*>(archive.examples.images.data_ptr()),
            static_cast<std::streamsize>(archive.examples.images.nbytes()));
    require(static_cast<bool>(in), ErrorCode::kFormat, adv + ": truncated data");
  }
  std::ifstream in(lab, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + lab);
  expect_magic(in, kLabelMagic, lab);
  expect_version(in, lab);
  const auto n = static_cast<int64_t>(get<uint64_t>(in, lab));
  require(n == archive.examples.images.size(0), ErrorCode::kFormat,
          "archive: label count does not match image count");
  auto labels = torch::empty({n}, torch::kInt64);
  auto indices = torch::empty({n}, torch::kInt64);
  for (int64_t i = 0; i < n; ++i) labels.data_ptr<int64_t>()[i] = get<uint8_t>(in, lab);
  for (int64_t i = 0; i < n; ++i) indices.data_ptr<int64_t>()[i] = get<uint32_t>(in, lab);
  archive.examples.labels = labels;
  archive.examples.indices = indices;
  return archive;
}

ArchiveReport validate_archive(const AdversarialArchive& archive, const ImageBatch& clean,
                               double tolerance) {
  std::unordered_map<int64_t, int64_t> row_of;
  auto clean_idx = clean.indices.contiguous();
  for (int64_t r = 0; r < clean.size(); ++r) row_of[clean_idx.data_ptr<int64_t>()[r]] = r;

  ArchiveReport report;
  const auto& ex = archive.examples;
  auto idx = ex.indices.contiguous();
  for (int64_t i = 0; i < ex.size(); ++i) {
    auto it = row_of.find(idx.data_ptr<int64_t>()[i]);
    if (it == row_of.end()) {
      ++report.missing;
      continue;
    }
    auto delta = (ex.images[i].to(torch::kFloat64) - clean.images[it->second].to(torch::kFloat64));
    const double dist = archive.norm == Norm::kLinf ? delta.abs().max().item<double>()
                                                    : delta.norm().item<double>();
    report.max_distance = std::max(report.max_distance, dist);
    ++report.checked;
    if (dist > archive.epsilon + tolerance) ++report.violations;
  }
  return report;
}

}  // namespace siriib
