#include "poolgen/evaluate.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

namespace poolgen {

namespace {

// Copies images [begin, end) into a batch tensor, mean-subtracted.
Tensor gather_batch(const Tensor& images, std::span<const double> means,
                    int begin, int end) {
  const Shape& s = images.shape();
  Tensor batch({end - begin, s.c, s.h, s.w});
  for (int i = begin; i < end; ++i)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          batch.at(i - begin, c, y, x) = images.at(i, c, y, x) - means[c];
        }
  return batch;
}

int argmax_class(const Tensor& logits, int n) {
  int best = 0;
  for (int c = 1; c < logits.shape().c; ++c) {
    if (logits.at(n, c, 0, 0) > logits.at(n, best, 0, 0)) best = c;
  }
  return best;
}

}  // namespace

double evaluate_accuracy(const Network& net, const Tensor& images,
                         std::span<const int> labels,
                         std::span<const double> channel_means,
                         int threads) {
  const int total = images.shape().n;
  if (labels.size() != static_cast<std::size_t>(total)) {
    throw std::invalid_argument("label count does not match image count");
  }
  if (threads < 1) threads = 1;
  if (threads > total) threads = total;
  std::vector<char> correct(total, 0);

  auto worker = [&](int begin, int end) {
    constexpr int kBatch = 64;
    for (int b = begin; b < end; b += kBatch) {
      const int stop = std::min(b + kBatch, end);
      const Tensor batch = gather_batch(images, channel_means, b, stop);
      const Tensor logits = net.infer(batch);
      for (int i = b; i < stop; ++i) {
        correct[i] = argmax_class(logits, i - b) == labels[i] ? 1 : 0;
      }
    }
  };

  if (threads == 1) {
    worker(0, total);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (total + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int begin = t * chunk;
      const int end = std::min(begin + chunk, total);
      if (begin >= end) break;
      pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  int hits = 0;
  for (char c : correct) hits += c;
  return static_cast<double>(hits) / total;
}

std::vector<SweepRow> invariance_sweep(const Network& net, const Dataset& test,
                                       std::span<const TransformSpec> grid,
                                       int threads) {
  if (test.channel_means.empty()) {
    throw std::invalid_argument(
        "invariance sweep needs channel means on the test dataset");
  }
  if (net.input_shape().c != test.images.shape().c ||
      net.input_shape().h != test.images.shape().h ||
      net.input_shape().w != test.images.shape().w) {
    throw std::invalid_argument("network input does not match dataset shape");
  }
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const TransformSpec& spec : grid) {
    const Tensor transformed = apply_transform(test.images, spec);
    rows.push_back({spec, evaluate_accuracy(net, transformed, test.labels,
                                            test.channel_means, threads)});
  }
  return rows;
}

}  // namespace poolgen
