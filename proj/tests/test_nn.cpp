#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "poolgen/config.hpp"
#include "poolgen/data.hpp"
#include "poolgen/evaluate.hpp"
#include "poolgen/gradcheck.hpp"
#include "poolgen/layers.hpp"
#include "poolgen/network.hpp"
#include "poolgen/optimizer.hpp"
#include "poolgen/rng.hpp"
#include "poolgen/train.hpp"

using namespace poolgen;

namespace {

Tensor ones_like(const Tensor& t) {
  Tensor w(t.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0;
  return w;
}

}  // namespace

TEST_CASE("conv with a 1x1 identity kernel reproduces the input") {
  const Tensor in = Tensor::gaussian({2, 1, 4, 4}, 0.0, 1.0, 3);
  Tensor k({1, 1, 1, 1}, {1.0});
  const std::vector<double> bias{0.0};
  const Tensor out = conv2d_forward(in, k, bias, 1, 0);
  REQUIRE(out.shape() == in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i] == in[i]);
}

TEST_CASE("conv all-ones 2x2 kernel sums the window") {
  const Tensor in({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor k({1, 1, 2, 2}, {1, 1, 1, 1});
  const std::vector<double> bias{0.0};
  const Tensor out = conv2d_forward(in, k, bias, 1, 0);
  REQUIRE(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out[0] == 10.0);
}

TEST_CASE("conv gradients match finite differences") {
  const Tensor in = Tensor::gaussian({1, 2, 4, 4}, 0.0, 1.0, 5);
  const Tensor k = Tensor::gaussian({3, 2, 3, 3}, 0.0, 0.5, 6);
  const std::vector<double> bias{0.1, -0.2, 0.3};
  const Tensor w = Tensor::gaussian({1, 3, 4, 4}, 0.0, 1.0, 7);

  const Tensor out = conv2d_forward(in, k, bias, 1, 1);
  REQUIRE(out.shape() == w.shape());
  const ConvGrads g = conv2d_backward(w, in, k, 1, 1);

  auto objective_in = [&](const Tensor& x) {
    const Tensor o = conv2d_forward(x, k, bias, 1, 1);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * w[i];
    return s;
  };
  const Tensor fd_in = gradcheck::fd_gradient(objective_in, in, 1e-5);
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(gradcheck::rel_err(g.input[i], fd_in[i]) < 1e-6);
  }

  auto objective_k = [&](const Tensor& kk) {
    const Tensor o = conv2d_forward(in, kk, bias, 1, 1);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * w[i];
    return s;
  };
  const Tensor fd_k = gradcheck::fd_gradient(objective_k, k, 1e-5);
  for (std::size_t i = 0; i < k.size(); ++i) {
    CHECK(gradcheck::rel_err(g.kernels[i], fd_k[i]) < 1e-6);
  }
}

TEST_CASE("relu forward and backward") {
  const Tensor in({1, 1, 1, 3}, {-1, 0, 2});
  const Tensor out = relu_forward(in);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);

  const Tensor neg({1, 1, 1, 3}, {-1, -2, -3});
  const Tensor nout = relu_forward(neg);
  for (std::size_t i = 0; i < nout.size(); ++i) CHECK(nout[i] == 0.0);

  // Gradient at exactly zero is zero.
  const Tensor g = relu_backward(ones_like(in), in);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("dropout contract") {
  const Tensor in = Tensor::gaussian({1, 1, 10, 10}, 1.0, 0.1, 21);

  const DropoutResult id0 = dropout_forward(in, 0.0, Mode::Train, 1);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(id0.output[i] == in[i]);

  const DropoutResult idt = dropout_forward(in, 0.7, Mode::Test, 1);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(idt.output[i] == in[i]);

  CHECK_THROWS_AS(dropout_forward(in, 1.0, Mode::Train, 1),
                  std::invalid_argument);

  const Tensor big = Tensor::gaussian({1, 1, 100, 100}, 1.0, 0.1, 22);
  const DropoutResult half = dropout_forward(big, 0.5, Mode::Train, 99);
  int survivors = 0;
  for (std::size_t i = 0; i < big.size(); ++i) {
    if (half.output[i] != 0.0) {
      ++survivors;
      CHECK(half.output[i] == big[i] * 2.0);
    }
  }
  CHECK(survivors > 4500);
  CHECK(survivors < 5500);

  // Backward reuses the recorded mask.
  const Tensor g = dropout_backward(ones_like(big), half.mask);
  for (std::size_t i = 0; i < big.size(); ++i) {
    CHECK(g[i] == (half.output[i] != 0.0 ? 2.0 : 0.0));
  }
}

TEST_CASE("softmax cross entropy") {
  // Uniform logits over k classes: loss = ln k.
  const Tensor uniform({2, 5, 1, 1}, std::vector<double>(10, 0.7));
  const std::vector<int> labels{3, 0};
  const XentResult u = softmax_xent(uniform, labels);
  CHECK(u.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  // Saturated correct logit: negligible loss.
  const Tensor sat({1, 2, 1, 1}, {40.0, -40.0});
  const XentResult s = softmax_xent(sat, std::vector<int>{0});
  CHECK(s.loss >= 0.0);
  CHECK(s.loss < 1e-12);

  // Gradient rows sum to zero per sample.
  const Tensor logits = Tensor::gaussian({3, 4, 1, 1}, 0.0, 2.0, 31);
  const XentResult r = softmax_xent(logits, std::vector<int>{1, 3, 0});
  for (int n = 0; n < 3; ++n) {
    double sum = 0.0;
    for (int c = 0; c < 4; ++c) sum += r.grad_logits.at(n, c, 0, 0);
    CHECK(std::abs(sum) < 1e-12);
  }

  CHECK_THROWS_AS(softmax_xent(logits, std::vector<int>{1, 4, 0}),
                  std::invalid_argument);
}

TEST_CASE("dense layer gradients match finite differences") {
  const Tensor in = Tensor::gaussian({3, 2, 2, 2}, 0.0, 1.0, 41);
  Matrix w(4, 8);
  const Tensor wt = Tensor::gaussian({4, 8, 1, 1}, 0.0, 0.5, 42);
  std::copy(wt.data().begin(), wt.data().end(), w.data.begin());
  const std::vector<double> bias{0.1, 0.2, -0.3, 0.0};
  const Tensor delta = Tensor::gaussian({3, 4, 1, 1}, 0.0, 1.0, 43);

  const DenseGrads g = dense_backward(delta, in, w);
  auto objective = [&](const Tensor& x) {
    const Tensor o = dense_forward(x, w, bias);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += o[i] * delta[i];
    return s;
  };
  const Tensor fd = gradcheck::fd_gradient(objective, in, 1e-5);
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(gradcheck::rel_err(g.input[i], fd[i]) < 1e-6);
  }
}

TEST_CASE("sgd step: degenerate hyperparameters reduce to plain descent") {
  Network net = Network::build(
      parse_arch("dense:2,softmax"), {1, 1, 1, 2}, 7, 0.5);
  auto slots = net.param_slots();
  REQUIRE(!slots.empty());
  std::vector<double> before(slots[0].value.begin(), slots[0].value.end());
  for (double& g : slots[0].grad) g = 0.5;

  SgdOptimizer opt(0.0, 0.0, LrSchedule({0.1}, 5));
  opt.step(slots, 0.1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(slots[0].value[i] == doctest::Approx(before[i] - 0.05).epsilon(1e-15));
  }

  // Zero gradient, zero velocity: fixed point.
  Network net2 = Network::build(
      parse_arch("dense:2,softmax"), {1, 1, 1, 2}, 7, 0.5);
  auto slots2 = net2.param_slots();
  std::vector<double> before2(slots2[0].value.begin(), slots2[0].value.end());
  SgdOptimizer opt2(0.9, 0.0, LrSchedule({0.1}, 5));
  opt2.step(slots2, 0.1);
  for (std::size_t i = 0; i < before2.size(); ++i) {
    CHECK(slots2[0].value[i] == before2[i]);
  }
}

TEST_CASE("sgd momentum matches the two-step hand unroll") {
  // Constant gradient G, momentum 0.9, no decay:
  //   v1 = -lr G,        p1 = p0 - lr G
  //   v2 = -1.9 lr G,    p2 = p0 - 2.9 lr G
  Network net = Network::build(
      parse_arch("dense:2,softmax"), {1, 1, 1, 2}, 7, 0.5);
  auto slots = net.param_slots();
  const double p0 = slots[0].value[0];
  const double G = 0.25;
  const double lr = 0.1;
  SgdOptimizer opt(0.9, 0.0, LrSchedule({lr}, 5));

  for (double& g : slots[0].grad) g = G;
  opt.step(slots, lr);
  CHECK(slots[0].value[0] == doctest::Approx(p0 - lr * G).epsilon(1e-15));
  for (double& g : slots[0].grad) g = G;
  opt.step(slots, lr);
  CHECK(slots[0].value[0] ==
        doctest::Approx(p0 - 2.9 * lr * G).epsilon(1e-14));
}

TEST_CASE("weight decay applies to weights only; proportions are clipped") {
  Network net = Network::build(
      parse_arch("conv:2,relu,pool:mixed:r2x2:s2,dense:2,softmax"),
      {1, 1, 4, 4}, 11, 0.5);
  auto slots = net.param_slots();
  // Locate slots by contract flags.
  bool saw_decay = false, saw_clip = false, saw_bias = false;
  for (const ParamSlot& s : slots) {
    if (s.name.ends_with(".weight")) {
      CHECK(s.weight_decay);
      saw_decay = true;
    }
    if (s.name.ends_with(".bias")) {
      CHECK(!s.weight_decay);
      saw_bias = true;
    }
    if (s.name.ends_with(".a")) {
      CHECK(s.clip_unit);
      CHECK(!s.weight_decay);
      saw_clip = true;
    }
  }
  CHECK(saw_decay);
  CHECK(saw_clip);
  CHECK(saw_bias);

  // A huge gradient pushes a outside [0,1]; the step projects it back.
  for (ParamSlot& s : slots) {
    if (s.clip_unit) {
      s.grad[0] = 1e3;
    }
  }
  SgdOptimizer opt(0.0, 5e-4, LrSchedule({0.1}, 5));
  opt.step(slots, 0.1);
  for (const ParamSlot& s : slots) {
    if (s.clip_unit) {
      CHECK(s.value[0] == 0.0);
    }
  }
}

TEST_CASE("lr schedule advances on stagnation and signals completion") {
  LrSchedule sched({0.025, 0.0125, 0.0001}, 5);
  CHECK(sched.current() == 0.025);

  // Strictly improving: rate never changes.
  for (int i = 0; i < 10; ++i) {
    CHECK(!sched.observe(1.0 - 0.01 * i));
    CHECK(sched.current() == 0.025);
  }
  // Five stagnant evaluations: drop to the next rate.
  for (int i = 0; i < 5; ++i) CHECK(!sched.observe(0.95));
  CHECK(sched.current() == 0.0125);
  // Stagnating through the last rate finishes training.
  for (int i = 0; i < 5; ++i) sched.observe(0.95);
  CHECK(sched.current() == 0.0001);
  bool done = false;
  for (int i = 0; i < 5; ++i) done = sched.observe(0.95);
  CHECK(done);
  CHECK(sched.finished());

  CHECK_THROWS_AS(LrSchedule({}, 5), std::invalid_argument);
  CHECK_THROWS_AS(LrSchedule({0.01, 0.02}, 5), std::invalid_argument);
}

TEST_CASE("network rejects bad architectures") {
  CHECK_THROWS_AS(
      Network::build(parse_arch("conv:4,relu,dense:2,softmax"), {1, 1, 0, 4},
                     1, 0.5),
      std::invalid_argument);
  // softmax not last is a config-level error.
  CHECK_THROWS_AS(parse_arch("softmax,dense:2"), ConfigError);
  // No dense head: spatial dims never reach 1x1.
  CHECK_THROWS_AS(
      Network::build(parse_arch("conv:4,relu,softmax"), {1, 1, 4, 4}, 1, 0.5),
      std::invalid_argument);
}

namespace {

// Finite-difference check of every parameter of a small network. The loss
// is only piecewise smooth: perturbations that flip a pooling argmax or
// cross a relu kink are detected through a discrete signature of the
// forward pass and those coordinates are skipped. Richardson extrapolation
// keeps truncation negligible at h = 1e-5.
void whole_network_fd(const std::string& arch, std::uint64_t seed,
                      double tol) {
  Network net = Network::build(parse_arch(arch), {1, 1, 8, 8}, seed, 0.5);
  REQUIRE(net.param_count() <= 2000);

  const Tensor x = Tensor::gaussian({4, 1, 8, 8}, 0.0, 1.0, seed + 1);
  const std::vector<int> labels{0, 1, 2, 3};

  net.zero_grads();
  net.loss_and_gradients(x, labels, Mode::Test);
  auto slots = net.param_slots();
  std::vector<std::vector<double>> analytic;
  for (const ParamSlot& s : slots) {
    analytic.emplace_back(s.grad.begin(), s.grad.end());
  }

  auto eval = [&](std::vector<std::int32_t>* sig) {
    const Tensor logits = net.forward(x, Mode::Test);
    if (sig) {
      sig->clear();
      for (Layer* l : net.layers()) {
        if (auto* p = dynamic_cast<PoolLayer*>(l)) {
          const PoolCache& c = p->last_cache();
          sig->insert(sig->end(), c.argmax.begin(), c.argmax.end());
        } else if (auto* r = dynamic_cast<ReluLayer*>(l)) {
          const Tensor& in = r->last_input();
          for (std::size_t i = 0; i < in.size(); ++i) {
            sig->push_back(in[i] > 0.0 ? 1 : 0);
          }
        }
      }
    }
    return softmax_xent(logits, labels).loss;
  };

  const double h = 1e-5;
  int checked = 0, skipped = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    for (std::size_t i = 0; i < slots[k].value.size(); ++i) {
      double& p = slots[k].value[i];
      const double orig = p;
      std::vector<std::int32_t> sig_p, sig_m, sig;
      p = orig + h;
      const double fp = eval(&sig_p);
      p = orig - h;
      const double fm = eval(&sig_m);
      p = orig + 0.5 * h;
      const double fp2 = eval(&sig);
      const bool ok1 = sig == sig_p;
      p = orig - 0.5 * h;
      const double fm2 = eval(&sig);
      p = orig;
      if (sig_p != sig_m || !ok1 || sig != sig_p) {
        ++skipped;
        continue;
      }
      const double d1 = (fp - fm) / (2.0 * h);
      const double d2 = (fp2 - fm2) / h;
      const double fd = (4.0 * d2 - d1) / 3.0;
      worst = std::max(worst, gradcheck::rel_err(analytic[k][i], fd));
      ++checked;
    }
  }
  INFO("arch: " << arch << " worst " << worst << " checked " << checked
                << " skipped " << skipped);
  CHECK(worst < tol);
  CHECK(checked > 0);
  // The kink guard should only ever trim a small fraction.
  CHECK(skipped * 20 < checked);
}

}  // namespace

TEST_CASE("whole-network gradient check: mixed + gated pools") {
  whole_network_fd(
      "conv:4:3:1:1,relu,pool:mixed:r2x2:s2,conv:6:3:1:1,relu,"
      "pool:gated:r2x2:s2,dense:4,softmax",
      2029, 1e-5);
}

TEST_CASE("whole-network gradient check: tree + max pools") {
  whole_network_fd(
      "conv:4:3:1:1,relu,pool:tree2:r2x2:s2,conv:6:3:1:1,relu,"
      "pool:max:r2x2:s2,dense:4,softmax",
      4051, 1e-5);
}

TEST_CASE("fifty sgd steps halve the loss on a fixed batch") {
  for (const char* pool : {"avg", "max", "stochastic", "mix5050", "mixed",
                           "gated", "tree2", "tree3"}) {
    const std::string arch =
        std::string("conv:4:3:1:1,relu,pool:") + pool +
        ":r2x2:s2,conv:4:3:1:1,relu,pool:max:r2x2:s2,dense:4,softmax";
    Network net = Network::build(parse_arch(arch), {1, 1, 8, 8}, 5, 0.5);
    const Tensor x = Tensor::gaussian({32, 1, 8, 8}, 0.0, 1.0, 6);
    std::vector<int> labels(32);
    for (int i = 0; i < 32; ++i) labels[i] = i % 4;

    SgdOptimizer opt(0.9, 5e-4, LrSchedule({0.025}, 5));
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 50; ++step) {
      net.zero_grads();
      const double loss = net.loss_and_gradients(x, labels, Mode::Train);
      if (step == 0) first = loss;
      last = loss;
      auto slots = net.param_slots();
      opt.step(slots);
      net.bump_step();
    }
    INFO("pool " << pool << ": loss " << first << " -> " << last);
    CHECK(last <= 0.5 * first);
  }
}

TEST_CASE("training aborts with the offending layer on divergence") {
  Dataset train = synthesize_shapes(32, 9, 0.0);
  train.channel_means = compute_channel_means(train.images);
  Dataset val = synthesize_shapes(8, 10, 0.0);
  val.channel_means = train.channel_means;

  Network net = Network::build(
      parse_arch("conv:4,relu,pool:max:r2x2:s2,dense:4,softmax"),
      {1, 1, 16, 16}, 3, 0.5);
  auto slots = net.param_slots();
  slots[0].value[0] = std::numeric_limits<double>::infinity();

  SgdOptimizer opt(0.9, 5e-4, LrSchedule({0.025}, 5));
  TrainOptions topt;
  topt.batch_size = 16;
  topt.max_epochs = 1;
  try {
    train_network(net, opt, train, val, topt);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.layer_name == "conv1");
  }
}
