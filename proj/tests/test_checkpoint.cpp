#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "poolgen/checkpoint.hpp"
#include "poolgen/config.hpp"
#include "poolgen/data.hpp"
#include "poolgen/train.hpp"

using namespace poolgen;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

constexpr const char* kArch =
    "conv:4,relu,pool:mixed:r2x2:s2,conv:4,relu,pool:gated:r2x2:s2,"
    "dense:4,softmax";

}  // namespace

TEST_CASE("checkpoint save/load/save is byte-identical") {
  Network net = Network::build(parse_arch(kArch), {1, 1, 16, 16}, 42, 0.5);
  SgdOptimizer opt(0.9, 5e-4, LrSchedule({0.025, 0.0125, 0.0001}, 5));

  const std::string p1 = temp_path("poolgen_rt1.ckpt");
  const std::string p2 = temp_path("poolgen_rt2.ckpt");
  const Checkpoint ck = snapshot(net, opt, 3, {0.13}, 0.5);
  save_checkpoint(ck, p1);
  const Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  // Restored parameters are bit-identical to the source network's.
  RestoredState state = restore_checkpoint(loaded);
  auto src = net.param_slots();
  auto dst = state.network.param_slots();
  REQUIRE(src.size() == dst.size());
  for (std::size_t k = 0; k < src.size(); ++k) {
    CHECK(src[k].name == dst[k].name);
    REQUIRE(src[k].value.size() == dst[k].value.size());
    for (std::size_t i = 0; i < src[k].value.size(); ++i) {
      CHECK(src[k].value[i] == dst[k].value[i]);
    }
  }
  CHECK(state.epoch == 3);
  CHECK(state.channel_means == std::vector<double>{0.13});

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("corrupt and mismatched checkpoint files are rejected") {
  Network net = Network::build(parse_arch(kArch), {1, 1, 16, 16}, 1, 0.5);
  SgdOptimizer opt(0.9, 5e-4, LrSchedule({0.025}, 5));
  const std::string path = temp_path("poolgen_bad.ckpt");
  save_checkpoint(snapshot(net, opt, 0, {}, 0.5), path);

  // Truncation anywhere in the payload is a corruption error.
  const std::string bytes = slurp(path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  // Wrong magic is a version error.
  {
    std::string mangled = bytes;
    mangled[0] = 'X';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(mangled.data(), static_cast<std::streamsize>(mangled.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointVersionError);

  // Unsupported version byte.
  {
    std::string mangled = bytes;
    mangled[8] = 9;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(mangled.data(), static_cast<std::streamsize>(mangled.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointVersionError);

  std::remove(path.c_str());
}

TEST_CASE("restore rejects a checkpoint whose manifest mismatches") {
  Network net = Network::build(parse_arch(kArch), {1, 1, 16, 16}, 1, 0.5);
  SgdOptimizer opt(0.9, 5e-4, LrSchedule({0.025}, 5));
  Checkpoint ck = snapshot(net, opt, 0, {}, 0.5);
  ck.params[0].second.pop_back();
  CHECK_THROWS_AS(restore_checkpoint(ck), CheckpointError);
}

TEST_CASE("checkpoint restore continues the exact training trajectory") {
  Dataset full = synthesize_shapes(128, 77, 0.05);
  full.channel_means = compute_channel_means(full.images);
  auto [train, val] = split_validation(full, 0.25);

  TrainOptions topt;
  topt.batch_size = 32;
  topt.max_epochs = 3;

  // Uninterrupted three-epoch run.
  Network net_a = Network::build(parse_arch(kArch), {1, 1, 16, 16}, 5, 0.5);
  SgdOptimizer opt_a(0.9, 5e-4, LrSchedule({0.025, 0.0125}, 5));
  const TrainResult run_a = train_network(net_a, opt_a, train, val, topt);
  REQUIRE(run_a.metrics.size() == 3);

  // One epoch, checkpoint, restore, two more epochs.
  Network net_b = Network::build(parse_arch(kArch), {1, 1, 16, 16}, 5, 0.5);
  SgdOptimizer opt_b(0.9, 5e-4, LrSchedule({0.025, 0.0125}, 5));
  TrainOptions first_leg = topt;
  first_leg.max_epochs = 1;
  const TrainResult run_b1 = train_network(net_b, opt_b, train, val, first_leg);
  REQUIRE(run_b1.metrics.size() == 1);

  const std::string path = temp_path("poolgen_traj.ckpt");
  save_checkpoint(snapshot(net_b, opt_b, 1, full.channel_means, 0.5), path);
  RestoredState state = restore_checkpoint(load_checkpoint(path));
  const TrainResult run_b2 = train_network(state.network, state.optimizer,
                                           train, val, topt,
                                           static_cast<int>(state.epoch));
  REQUIRE(run_b2.metrics.size() == 2);

  for (int e = 1; e < 3; ++e) {
    const EpochMetrics& a = run_a.metrics[e];
    const EpochMetrics& b = run_b2.metrics[e - 1];
    CHECK(a.epoch == b.epoch);
    CHECK(a.lr == b.lr);
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.train_acc == b.train_acc);
    CHECK(a.val_err == b.val_err);
  }
  std::remove(path.c_str());
}
