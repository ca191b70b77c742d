#include "poolgen/bench.hpp"

#include <algorithm>
#include <chrono>

#include "poolgen/layers.hpp"

namespace poolgen {

std::vector<LayerSpec> substitute_pool_variants(
    std::vector<LayerSpec> arch, const std::vector<PoolVariant>& variants) {
  std::size_t next = 0;
  for (LayerSpec& spec : arch) {
    if (spec.kind != LayerSpec::Kind::Pool) continue;
    spec.pool_variant = variants[std::min(next, variants.size() - 1)];
    ++next;
  }
  return arch;
}

namespace {

double time_net_ms(Network& net, const Tensor& image,
                   const std::vector<int>& label, int iters, int warmup) {
  for (int i = 0; i < warmup; ++i) {
    net.zero_grads();
    net.loss_and_gradients(image, label, Mode::Train);
    net.bump_step();
  }
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) {
    net.zero_grads();
    net.loss_and_gradients(image, label, Mode::Train);
    net.bump_step();
  }
  const auto stop = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration<double, std::milli>(stop - start).count();
  return ms / iters;
}

}  // namespace

std::vector<BenchRow> run_timing_bench(const RunConfig& cfg, int iters,
                                       int warmup) {
  const std::vector<LayerSpec> base = parse_arch(cfg.arch);
  struct Entry {
    const char* name;
    std::vector<PoolVariant> variants;
  };
  const Entry entries[] = {
      {"max", {PoolVariant::Max}},
      {"mixed", {PoolVariant::Mixed}},
      {"gated", {PoolVariant::Gated}},
      {"tree", {PoolVariant::Tree2}},
      {"tree+gated", {PoolVariant::Tree2, PoolVariant::Gated}},
  };

  // One input image matching the configured dataset geometry; the content
  // does not matter for timing but is pinned for reproducible paths.
  Shape in_shape{1, 1, 16, 16};
  if (cfg.dataset == "mnist") in_shape = {1, 1, 28, 28};
  if (cfg.dataset == "cifar10") in_shape = {1, 3, 32, 32};
  const Tensor image = Tensor::gaussian(in_shape, 0.0, 1.0, cfg.seed);
  const std::vector<int> label{0};

  std::vector<BenchRow> rows;
  double baseline = 0.0;
  for (const Entry& e : entries) {
    Network net = Network::build(substitute_pool_variants(base, e.variants),
                                 in_shape, cfg.seed, cfg.init_std);
    const double ms = time_net_ms(net, image, label, iters, warmup);
    BenchRow row{e.name, ms, 0.0};
    if (rows.empty()) {
      baseline = ms;
    } else {
      row.overhead_pct = 100.0 * (ms - baseline) / baseline;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace poolgen
