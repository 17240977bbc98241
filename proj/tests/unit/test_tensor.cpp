#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>

#include "jobgen/common/error.hpp"
#include "jobgen/common/rng.hpp"
#include "jobgen/tensor/checkpoint.hpp"
#include "jobgen/tensor/gradcheck.hpp"
#include "jobgen/tensor/optimizer.hpp"
#include "jobgen/tensor/tape.hpp"

using namespace jobgen;
using namespace jobgen::tensor;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Reduces an op output to a scalar with fixed random weights so every output
// coordinate contributes a distinct amount.
Var weighted_sum(Var y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = random_tensor(rng, y.value().shape());
  return sum(multiply(y, constant(*y.tape, w)));
}

}  // namespace

TEST_CASE("matmul shape algebra and diagnostics") {
  Tape tape;
  Var a = constant(tape, Tensor(Shape{2, 3}, 1.0));
  Var b = constant(tape, Tensor(Shape{3, 4}, 1.0));
  Var c = matmul(a, b);
  CHECK(c.value().shape() == Shape{2, 4});
  CHECK(c.value().at(1, 3) == doctest::Approx(3.0));

  try {
    matmul(b, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[3x4]") != std::string::npos);
  }
}

TEST_CASE("softmax and sigmoid symmetric points") {
  Tape tape;
  Var s = softmax(constant(tape, Tensor::vector({0.0, 0.0, 0.0})));
  for (double v : s.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Var g = sigmoid(constant(tape, Tensor::scalar(0.0)));
  CHECK(g.value().item() == 0.5);
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  CHECK_THROWS_AS(log(constant(tape, Tensor::vector({1.0, 0.0}))), ShapeError);
  CHECK_THROWS_AS(log(constant(tape, Tensor::vector({-2.0}))), ShapeError);
}

TEST_CASE("softmax rows sum to one and stay positive for extreme logits") {
  Rng rng(7);
  Tape tape;
  Tensor x = random_tensor(rng, Shape{20, 9}, -400.0, 400.0);
  Var y = softmax(constant(tape, x));
  CHECK(y.value().all_finite());
  for (std::size_t r = 0; r < 20; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      total += y.value().at(r, c);
      CHECK(y.value().at(r, c) >= 0.0);
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  Tape tape2;
  Var z = softmax(constant(tape2, random_tensor(rng, Shape{5, 6}, -3.0, 3.0)));
  for (double v : z.value().data()) CHECK(v > 0.0);
}

TEST_CASE("backward: sum gives all-ones, sigmoid slope at zero") {
  Tape tape;
  Var x = variable(tape, Tensor(Shape{3, 2}, 0.7));
  tape.backward(sum(x).id);
  for (double v : tape.gradient(x.id).data()) CHECK(v == 1.0);

  Tape t2;
  Var w = variable(t2, Tensor::scalar(0.0));
  t2.backward(sigmoid(w).id);
  CHECK(t2.gradient(w.id).item() == 0.25);
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape tape;
  Var x = variable(tape, Tensor(Shape{2}, 1.0));
  CHECK_THROWS_AS(tape.backward(x.id), ShapeError);
}

TEST_CASE("unreachable parameters get zero gradients; backward is idempotent") {
  Parameter used{"used", Tensor(Shape{2, 2}, 0.5)};
  Parameter unused{"unused", Tensor(Shape{3}, 1.0)};
  Tape tape;
  Var u = parameter(tape, used);
  Var n = parameter(tape, unused);
  (void)n;
  Var loss = sum(square(u));
  Gradients g1 = tape.backward(loss.id);
  Gradients g2 = tape.backward(loss.id);
  REQUIRE(g1.find(unused));
  for (double v : g1.find(unused)->data()) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK((*g1.find(used))[i] == 1.0);
    CHECK((*g1.find(used))[i] == (*g2.find(used))[i]);
  }
}

TEST_CASE("no recording when no input requires gradients") {
  Tape tape;
  Var a = constant(tape, Tensor::vector({1.0, 2.0}));
  Var b = exp(a);
  CHECK_FALSE(tape.requires_grad(b.id));
  CHECK(b.value()[1] == doctest::Approx(std::exp(2.0)));
}

TEST_CASE("catalogue gradients match central differences") {
  using Build = std::function<Var(Tape&, Var)>;
  struct Case {
    const char* name;
    Shape shape;
    Build build;
    double lo = -1.0, hi = 1.0;
  };
  Rng rng(11);
  Tensor other34 = random_tensor(rng, Shape{3, 4});
  Tensor left23 = random_tensor(rng, Shape{2, 3});
  Tensor row4 = random_tensor(rng, Shape{4});
  Tensor table = random_tensor(rng, Shape{5, 3});

  std::vector<Case> cases = {
      {"matmul-left", {2, 3}, [&](Tape& t, Var x) { return matmul(x, constant(t, other34)); }},
      {"matmul-right", {3, 4}, [&](Tape& t, Var x) { return matmul(constant(t, left23), x); }},
      {"add-row-broadcast", {3, 4}, [&](Tape& t, Var x) { return add(x, constant(t, row4)); }},
      {"add-bias-grad", {4}, [&](Tape& t, Var x) { return add(constant(t, other34), x); }},
      {"subtract", {3, 4}, [&](Tape& t, Var x) { return subtract(constant(t, other34), x); }},
      {"multiply", {3, 4}, [&](Tape& t, Var x) { return multiply(x, constant(t, other34)); }},
      {"multiply-self", {3, 4}, [&](Tape&, Var x) { return multiply(x, x); }},
      {"multiply-scalar-grad", {}, [&](Tape& t, Var x) { return multiply(constant(t, other34), x); }},
      {"scale", {3, 4}, [&](Tape&, Var x) { return scale(x, -2.5); }},
      {"concat-last", {3, 2}, [&](Tape& t, Var x) {
         Var parts[] = {x, constant(t, other34), x};
         return concat_last(parts);
       }},
      {"gather-rows", {5, 3}, [&](Tape&, Var x) { return gather_rows(x, {4, 0, 4, 2}); }},
      {"softmax", {3, 5}, [&](Tape&, Var x) { return softmax(x); }, -3.0, 3.0},
      {"log-softmax", {3, 5}, [&](Tape&, Var x) { return log_softmax(x); }, -3.0, 3.0},
      {"layer-norm", {3, 6}, [&](Tape&, Var x) { return layer_norm(x); }, -2.0, 2.0},
      {"relu", {4, 4}, [&](Tape&, Var x) { return relu(x); }},
      {"gelu", {4, 4}, [&](Tape&, Var x) { return gelu(x); }, -3.0, 3.0},
      {"sigmoid", {4, 4}, [&](Tape&, Var x) { return sigmoid(x); }, -4.0, 4.0},
      {"log-sigmoid", {4, 4}, [&](Tape&, Var x) { return log_sigmoid(x); }, -6.0, 6.0},
      {"log", {3, 3}, [&](Tape&, Var x) { return log(x); }, 0.2, 3.0},
      {"exp", {3, 3}, [&](Tape&, Var x) { return exp(x); }, -2.0, 2.0},
      {"mean", {3, 4}, [&](Tape&, Var x) { return mean(x); }},
      {"sum", {3, 4}, [&](Tape&, Var x) { return sum(x); }},
      {"mean-rows", {5, 3}, [&](Tape&, Var x) { return mean_rows(x); }},
      {"causal-mask-fill", {4, 4}, [&](Tape&, Var x) { return softmax(causal_mask_fill(x)); }, -2.0, 2.0},
      {"causal-mask-offset", {2, 5}, [&](Tape&, Var x) { return softmax(causal_mask_fill(x)); }},
      {"transpose", {3, 4}, [&](Tape&, Var x) { return transpose(x); }},
      {"slice-last", {3, 6}, [&](Tape&, Var x) { return slice_last(x, 2, 3); }},
      {"pick", {3, 5}, [&](Tape&, Var x) { return pick(x, {4, 0, 2}); }},
      {"clip", {4, 4}, [&](Tape&, Var x) { return clip(x, -0.5, 0.5); }},
      {"minimum", {3, 4}, [&](Tape& t, Var x) { return minimum(x, constant(t, other34)); }},
      {"square", {3, 4}, [&](Tape&, Var x) { return square(x); }},
  };

  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    std::string name = c.name;
    CAPTURE(name);
    Tensor point = random_tensor(rng, c.shape, c.lo, c.hi);
    // Keep kinks of relu/clip/minimum away from the probe step.
    for (double& v : point.data()) {
      if (std::abs(v) < 1e-3) v += 0.01;
      if (std::abs(std::abs(v) - 0.5) < 1e-3) v += 0.01;
    }
    const std::uint64_t s = seed++;
    auto build = [&](Tape& t, Var x) { return weighted_sum(c.build(t, x), s); };
    double err = finite_difference_check(build, point, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite_difference_check reference functions") {
  auto sq = [](const Tensor& x) { return x[0] * x[0]; };
  CHECK(finite_difference_check(sq, Tensor::scalar(3.0), Tensor::scalar(6.0)) < 1e-8);

  auto log_sig = [](Tape&, Var x) { return log_sigmoid(x); };
  Tape tape;
  Var x = variable(tape, Tensor::scalar(0.0));
  tape.backward(log_sigmoid(x).id);
  CHECK(tape.gradient(x.id).item() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(finite_difference_check(log_sig, Tensor::scalar(0.0)) < 1e-9);

  auto nan_fn = [](const Tensor&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK(std::isnan(finite_difference_check(nan_fn, Tensor::scalar(1.0), Tensor::scalar(0.0))));
}

TEST_CASE("optimizer plain mode and zero gradients") {
  Parameter p{"w", Tensor::scalar(1.0)};
  Parameter* ps[] = {&p};
  Optimizer sgd({OptimizerKind::sgd, 0.1});
  Gradients g;
  g.slot(p)[0] = 2.0;
  sgd.step(ps, g);
  CHECK(p.value.item() == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(sgd.state().step == 1);

  Parameter q{"q", Tensor::vector({0.3, -1.2, 5.0})};
  Parameter* qs[] = {&q};
  Tensor before = q.value;
  Optimizer adam({OptimizerKind::adam, 0.05});
  Gradients zero;
  zero.slot(q);
  adam.step(qs, zero);
  adam.step(qs, Gradients{});
  for (std::size_t i = 0; i < 3; ++i) CHECK(q.value[i] == before[i]);
  Optimizer sgd2({OptimizerKind::sgd, 0.05});
  sgd2.step(qs, zero);
  for (std::size_t i = 0; i < 3; ++i) CHECK(q.value[i] == before[i]);
}

TEST_CASE("optimizer: quadratic bowl converges like (1-2a)^k") {
  Parameter theta{"theta", Tensor::scalar(1.0)};
  Parameter* ps[] = {&theta};
  Optimizer sgd({OptimizerKind::sgd, 0.1});
  for (int k = 0; k < 100; ++k) {
    Tape tape;
    Gradients g = tape.backward(square(parameter(tape, theta)).id);
    sgd.step(ps, g);
  }
  CHECK(std::abs(theta.value.item()) < 1e-4);
  CHECK(theta.value.item() == doctest::Approx(std::pow(0.8, 100)).epsilon(1e-9));
}

TEST_CASE("optimizer refuses NaN gradients and names the parameter") {
  Parameter a{"layer0.w", Tensor::scalar(1.0)};
  Parameter b{"layer1.w", Tensor::scalar(2.0)};
  Parameter* ps[] = {&a, &b};
  Optimizer opt({OptimizerKind::adam, 0.1});
  Gradients g;
  g.slot(a)[0] = 1.0;
  g.slot(b)[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step(ps, g);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("layer1.w") != std::string::npos);
  }
  CHECK(a.value.item() == 1.0);
  CHECK(opt.state().step == 0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(5);
  ParameterStore store;
  store.add("emb", random_tensor(rng, Shape{7, 3}, -1e3, 1e3));
  store.add("bias", Tensor::vector({std::numeric_limits<double>::denorm_min(), -0.0, 1.0 / 3.0}));
  store.add("scalar", Tensor::scalar(std::nextafter(1.0, 2.0)));
  Checkpoint ck;
  ck.role = "generator";
  ck.meta = {{"width", 3}, {"note", "x"}};
  ck.add_store(store);
  auto path = std::filesystem::temp_directory_path() / "jobgen_test_ckpt.bin";
  write_checkpoint(path, ck);
  Checkpoint back = read_checkpoint(path);
  CHECK(back.role == "generator");
  CHECK(back.meta["width"] == 3);
  ParameterStore restored;
  restored.add("emb", Tensor(Shape{7, 3}));
  restored.add("bias", Tensor(Shape{3}));
  restored.add("scalar", Tensor(Shape{}));
  back.load_store(restored);
  CHECK(restored.checksum() == store.checksum());
  std::filesystem::remove(path);
}
