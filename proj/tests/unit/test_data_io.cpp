#include "siriib/archive.hpp"
#include "siriib/checkpoint.hpp"
#include "siriib/config.hpp"
#include "siriib/data.hpp"
#include "siriib/error.hpp"
#include "siriib/image_io.hpp"
#include "siriib/results.hpp"
#include "support/helpers.hpp"
#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace siriib {
namespace {

using siriib::testing::TempDir;

std::vector<uint8_t> record(uint8_t label, uint8_t fill) {
  std::vector<uint8_t> r(static_cast<size_t>(kCifarRecordBytes), fill);
  r[0] = label;
  return r;
}

void write_bytes(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(Cifar, ZeroRecordAndEndpoint) {
  auto zero = decode_cifar10(record(0, 0));
  EXPECT_EQ(zero.size(), 1);
  EXPECT_EQ(zero.labels[0].item<int64_t>(), 0);
  EXPECT_EQ(zero.images.abs().max().item<float>(), 0.0f);

  auto full = decode_cifar10(record(7, 255), 42);
  EXPECT_EQ(full.images.min().item<float>(), 1.0f);
  EXPECT_EQ(full.labels[0].item<int64_t>(), 7);
  EXPECT_EQ(full.indices[0].item<int64_t>(), 42);
  EXPECT_EQ(full.images.sizes(), (std::vector<int64_t>{1, 3, 32, 32}));
}

TEST(Cifar, ChannelPlanarLayout) {
  auto r = record(1, 0);
  r[1 + 0 * 1024 + 5 * 32 + 7] = 51;   // red, row 5, col 7
  r[1 + 2 * 1024 + 31 * 32 + 0] = 255; // blue, row 31, col 0
  auto b = decode_cifar10(r);
  EXPECT_FLOAT_EQ(b.images[0][0][5][7].item<float>(), 0.2f);
  EXPECT_FLOAT_EQ(b.images[0][2][31][0].item<float>(), 1.0f);
  EXPECT_EQ(encode_cifar10(b), r);
}

TEST(Cifar, TruncatedAndBadLabel) {
  auto r = record(1, 3);
  r.pop_back();
  EXPECT_THROW(decode_cifar10(r), Error);
  EXPECT_THROW(decode_cifar10(record(10, 0)), Error);
}

TEST(Cifar, LoadFromDirectoryBalancedAndDeterministic) {
  TempDir dir;
  auto data = make_synthetic_cifar(2000, 1);
  write_cifar10_split(dir.path(), Split::kTrain, data);
  DatasetSpec spec{dir.path(), Split::kTrain, 1000, true, 5};
  auto a = load_cifar10(spec);
  EXPECT_EQ(a.size(), 1000);
  auto counts = torch::bincount(a.labels, {}, 10);
  EXPECT_TRUE(torch::equal(counts, torch::full({10}, 100, torch::kInt64)));
  auto b = load_cifar10(spec);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_TRUE(torch::equal(a.indices, b.indices));
  // Index bookkeeping points back to the original rows.
  auto originals = data.images.index_select(0, a.indices);
  EXPECT_TRUE(torch::equal(originals, a.images));

  spec.seed = 6;
  EXPECT_FALSE(torch::equal(load_cifar10(spec).indices, a.indices));
  spec.subset_size = 1005;
  EXPECT_THROW(load_cifar10(spec), Error);
  spec.subset_size = 3000;
  EXPECT_THROW(load_cifar10(spec), Error);
  spec.split = Split::kTest;
  EXPECT_THROW(load_cifar10(spec), Error);
}

TEST(Cifar, TruncatedFileOnDisk) {
  TempDir dir;
  write_cifar10_split(dir.path(), Split::kTest, make_synthetic_cifar(10, 2));
  auto bytes = encode_cifar10(make_synthetic_cifar(10, 2));
  bytes.resize(bytes.size() - 100);
  write_bytes(dir / "test_batch.bin", bytes);
  try {
    load_cifar10(DatasetSpec{dir.path(), Split::kTest, 0, false, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
}

TEST(Synthetic, ValidQuantizedAndSeeded) {
  auto a = make_synthetic_cifar(100, 3);
  EXPECT_NO_THROW(a.validate());
  auto q = a.images * 255.0;
  EXPECT_LE((q - q.round()).abs().max().item<float>(), 1e-3f);
  EXPECT_TRUE(torch::equal(make_synthetic_cifar(100, 3).images, a.images));
  EXPECT_FALSE(torch::equal(make_synthetic_cifar(100, 4).images, a.images));
  EXPECT_TRUE(torch::equal(torch::bincount(a.labels, {}, 10), torch::full({10}, 10, torch::kInt64)));
}

TEST(Batches, CoverEverySampleOnce) {
  auto data = make_synthetic_cifar(50, 1);
  auto batches = make_batches(data, 16, 9);
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches.back().size(), 2);
  std::vector<torch::Tensor> idx;
  for (auto& b : batches) idx.push_back(b.indices);
  auto all = std::get<0>(torch::sort(torch::cat(idx)));
  EXPECT_TRUE(torch::equal(all, torch::arange(50, torch::kInt64)));
  EXPECT_THROW(make_batches(data, 0), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  torch::manual_seed(1);
  auto d = siriib::testing::small_descriptor(true);
  auto model = Classifier(d);
  siriib::testing::randomize_projections(model);
  torch::optim::SGD opt(model->parameters(), torch::optim::SGDOptions(0.1).momentum(0.9));
  model->train();
  auto x = torch::rand({4, 3, 32, 32});
  torch::cross_entropy_loss(model->forward(x), torch::tensor({0, 1, 2, 3})).backward();
  opt.step();

  auto ck = capture_checkpoint(model, &opt, 3, 77);
  save_checkpoint(dir / "m.ckpt", ck);
  auto loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(loaded.epoch, 3);
  EXPECT_EQ(loaded.seed, 77u);
  EXPECT_EQ(loaded.architecture, d);
  EXPECT_EQ(loaded.mean, kCifarMean);
  EXPECT_FALSE(loaded.optimizer_state.empty());
  ASSERT_EQ(loaded.state.size(), ck.state.size());
  for (size_t i = 0; i < ck.state.size(); ++i) {
    EXPECT_EQ(loaded.state[i].first, ck.state[i].first);
    EXPECT_TRUE(torch::equal(loaded.state[i].second, ck.state[i].second)) << ck.state[i].first;
  }

  auto rebuilt = build_model(loaded);
  model->eval();
  rebuilt->eval();
  auto probe = torch::rand({3, 3, 32, 32});
  EXPECT_TRUE(torch::equal(model->forward(probe), rebuilt->forward(probe)));

  torch::optim::SGD opt2(rebuilt->parameters(), torch::optim::SGDOptions(0.5));
  restore_optimizer(opt2, rebuilt, loaded);
  auto& group = static_cast<torch::optim::SGDOptions&>(opt2.param_groups()[0].options());
  EXPECT_DOUBLE_EQ(group.lr(), 0.1);
  EXPECT_DOUBLE_EQ(group.momentum(), 0.9);
}

TEST(Checkpoint, DescriptorMismatchFailsLoudly) {
  auto ck = capture_checkpoint(Classifier(siriib::testing::small_descriptor(true)), nullptr, 0, 0);
  auto other = Classifier(siriib::testing::small_descriptor(false));
  try {
    restore_model(other, ck);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDescriptorMismatch);
  }
}

TEST(Checkpoint, VersionAndCorruption) {
  TempDir dir;
  auto ck = capture_checkpoint(Classifier(siriib::testing::small_descriptor(false)), nullptr, 0, 0);
  save_checkpoint(dir / "a.ckpt", ck);
  std::ifstream in(dir / "a.ckpt", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();

  auto bumped = bytes;
  bumped[8] = 99;  // version field follows the 8-byte magic
  std::ofstream(dir / "b.ckpt", std::ios::binary).write(bumped.data(), static_cast<std::streamsize>(bumped.size()));
  try {
    load_checkpoint(dir / "b.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }

  auto cut = bytes;
  cut.resize(cut.size() / 2);
  std::ofstream(dir / "c.ckpt", std::ios::binary).write(cut.data(), static_cast<std::streamsize>(cut.size()));
  try {
    load_checkpoint(dir / "c.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }

  auto magic = bytes;
  magic[0] = 'X';
  std::ofstream(dir / "d.ckpt", std::ios::binary).write(magic.data(), static_cast<std::streamsize>(magic.size()));
  EXPECT_THROW(load_checkpoint(dir / "d.ckpt"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST(Config, ParseOverrideAndTypes) {
  auto c = Config::parse("# comment\nepochs = 10\n eps= 8/255 \nattacks = pgd20, cw100\nflag = yes\n");
  EXPECT_EQ(c.get_int("epochs", 0), 10);
  EXPECT_DOUBLE_EQ(c.get_double("eps", 0.0), 8.0 / 255.0);
  EXPECT_EQ(c.get_list("attacks", {}), (std::vector<std::string>{"pgd20", "cw100"}));
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_string("missing", "x"), "x");
  c.apply_override("epochs=3");
  EXPECT_EQ(c.get_int("epochs", 0), 3);
  EXPECT_THROW(c.apply_override("novalue"), Error);
  c.set("bad", "abc");
  EXPECT_THROW(c.get_int("bad", 0), Error);
  EXPECT_THROW(c.get_double("bad", 0), Error);
  EXPECT_THROW(c.get_bool("bad", false), Error);
  EXPECT_THROW(Config::parse("just words\n"), Error);

  auto again = Config::parse(c.to_string());
  EXPECT_EQ(again.values(), c.values());
}

TEST(Results, SchemaAndFiles) {
  ResultsTable t;
  t.title = "robust accuracy";
  t.columns = {"Clean", "PGD-20", "PGD-100", "CW-100", "L2-PGD-20"};
  t.add_row("ResNet-18", {80.0, 50.0, 49.0, 48.0, 60.0});
  EXPECT_EQ(t.columns.size(), 5u);
  EXPECT_THROW(t.add_row("short", {1.0}), Error);
  auto text = t.format_text();
  EXPECT_NE(text.find("PGD-100"), std::string::npos);
  EXPECT_NE(text.find("49.00"), std::string::npos);

  TempDir dir;
  write_results(dir / "results", t);
  auto recs = read_json_lines(dir / "results.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0]["Model"], "ResNet-18");
  EXPECT_DOUBLE_EQ(recs[0]["CW-100"].get<double>(), 48.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "results.txt"));
}

TEST(Archive, RoundTripAndValidation) {
  TempDir dir;
  auto clean = make_synthetic_cifar(20, 1);
  auto adv = clean;
  adv.images = (clean.images + (8.0f / 255.0f) * torch::randn_like(clean.images).sign()).clamp(0, 1);
  AdversarialArchive archive{adv, Norm::kLinf, 8.0 / 255.0};
  save_archive(dir / "ext", archive);
  auto back = load_archive(dir / "ext");
  EXPECT_TRUE(torch::equal(back.examples.images, adv.images));
  EXPECT_TRUE(torch::equal(back.examples.labels, adv.labels));
  EXPECT_TRUE(torch::equal(back.examples.indices, adv.indices));
  EXPECT_EQ(back.norm, Norm::kLinf);

  auto ok = validate_archive(back, clean);
  EXPECT_EQ(ok.checked, 20);
  EXPECT_EQ(ok.violations, 0);
  EXPECT_EQ(ok.missing, 0);
  EXPECT_NEAR(ok.max_distance, 8.0 / 255.0, 1e-6);

  back.examples.images[3][0][0][0] = 1.0f;
  back.examples.images[3][0][0][1] = 0.0f;
  auto bad = validate_archive(back, clean);
  EXPECT_EQ(bad.violations, 1);

  auto partial = clean.slice(0, 10);
  EXPECT_EQ(validate_archive(archive, partial).missing, 10);
}

TEST(Archive, RejectsUnknownVersion) {
  TempDir dir;
  save_archive(dir / "ext", AdversarialArchive{make_synthetic_cifar(2, 1), Norm::kL2, 0.5});
  std::fstream f(dir / "ext.adv", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  const char v = 7;
  f.write(&v, 1);
  f.close();
  try {
    load_archive(dir / "ext");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }
}

TEST(Png, WritesValidFiles) {
  TempDir dir;
  write_png(dir / "a.png", torch::rand({3, 8, 8}));
  write_png(dir / "g.png", torch::rand({8, 8}));
  write_png_grid(dir / "grid.png", {{torch::rand({3, 4, 4}), torch::rand({3, 4, 4})}}, 3);
  std::ifstream in(dir / "a.png", std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
  EXPECT_GT(std::filesystem::file_size(dir / "grid.png"), 0u);
  EXPECT_THROW(write_png(dir / "x.png", torch::rand({2, 4, 4})), Error);
  write_png(dir / "nested" / "x.png", torch::rand({3, 4, 4}));
  EXPECT_TRUE(std::filesystem::exists(dir / "nested" / "x.png"));
  EXPECT_THROW(write_png(dir / "nested" / "x.png" / "y.png", torch::rand({3, 4, 4})), Error);
}

}  // namespace
}  // namespace siriib
