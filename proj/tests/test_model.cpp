#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cll/labelgen.hpp"
#include "cll/model.hpp"
#include "support.hpp"

using namespace cll;

static double mean_soft_loss(const MlpModel& m, const Matrix& X,
                             const std::vector<SoftLabel>& labels,
                             const LossSpec& spec) {
  auto Z = forward_logits(m, X);
  double acc = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i)
    acc += soft_loss(spec, labels[i], softmax(Z.row(i)));
  return acc / static_cast<double>(X.rows);
}

TEST_CASE("init is seed-deterministic with zero biases") {
  auto a = init_model({4, 3, 2}, 9);
  auto b = init_model({4, 3, 2}, 9);
  auto c = init_model({4, 3, 2}, 10);
  REQUIRE(a.layers[0].W.data == b.layers[0].W.data);
  REQUIRE(a.layers[1].W.data == b.layers[1].W.data);
  REQUIRE(a.layers[0].W.data != c.layers[0].W.data);
  for (const auto& l : a.layers)
    for (double v : l.b) REQUIRE(v == 0.0);
  REQUIRE_THROWS_AS(init_model({4}, 1), ConfigError);
  REQUIRE_THROWS_AS(init_model({4, 0, 2}, 1), ConfigError);
}

TEST_CASE("init weight spread matches fan-in scaling") {
  auto m = init_model({784, 256, 10}, 3);
  const auto& W = m.layers[0].W.data;
  double mean = 0.0;
  for (double w : W) mean += w;
  mean /= W.size();
  double var = 0.0;
  for (double w : W) var += (w - mean) * (w - mean);
  var /= W.size();
  double want_sd = std::sqrt(2.0 / 784.0);
  REQUIRE(std::abs(std::sqrt(var) - want_sd) < 0.1 * want_sd);
  double limit = std::sqrt(6.0 / 784.0);
  for (double w : W) REQUIRE(std::abs(w) <= limit);
}

TEST_CASE("hand-stepped 2-2-2 forward pass") {
  MlpModel m;
  m.dims = {2, 2, 2};
  m.layers.resize(2);
  m.layers[0].W = Matrix(2, 2);
  m.layers[0].W.data = {1.0, 0.0, 0.0, 1.0};  // identity
  m.layers[0].b = {0.0, 0.0};
  m.layers[1].W = Matrix(2, 2);
  m.layers[1].W.data = {1.0, 2.0, 3.0, 4.0};
  m.layers[1].b = {0.5, -0.5};
  Matrix X(1, 2);
  X.data = {1.0, -2.0};
  // hidden = relu(1, -2) = (1, 0); logits = (1*1 + 0.5, 1*2 - 0.5)
  auto Z = forward_logits(m, X);
  REQUIRE(Z.at(0, 0) == 1.5);
  REQUIRE(Z.at(0, 1) == 1.5);
}

TEST_CASE("model without hidden layers is linear") {
  auto m = init_model({3, 4}, 5);
  Matrix X(2, 3);
  X.data = {0.2, -1.0, 0.5, 0.0, 0.0, 0.0};
  auto Z = forward_logits(m, X);
  for (int j = 0; j < 4; ++j) {
    double want = m.layers[0].b[j];
    for (int k = 0; k < 3; ++k) want += X.at(0, k) * m.layers[0].W.at(k, j);
    REQUIRE(Z.at(0, j) == Catch::Approx(want).margin(1e-15));
    REQUIRE(Z.at(1, j) == m.layers[0].b[j]);  // zero input passes bias
  }
}

TEST_CASE("batch forward equals single-row forward") {
  auto m = init_model({5, 7, 3}, 11);
  Rng rng(4);
  Matrix X(6, 5);
  for (auto& v : X.data) v = rng.next_normal();
  auto Z = forward_logits(m, X);
  for (std::size_t i = 0; i < X.rows; ++i) {
    Matrix one(1, 5);
    std::copy(X.row(i).begin(), X.row(i).end(), one.data.begin());
    auto z1 = forward_logits(m, one);
    for (int j = 0; j < 3; ++j) REQUIRE(Z.at(i, j) == z1.at(0, j));
  }
}

TEST_CASE("forward and backward are thread-count invariant") {
  auto m = init_model({9, 8, 4}, 2);
  Rng rng(6);
  Matrix X(33, 9);
  for (auto& v : X.data) v = rng.next_normal();
  std::vector<SoftLabel> labels;
  for (std::size_t i = 0; i < X.rows; ++i) {
    SoftLabel s(4, 0.0);
    s[rng.next_below(4)] = 1.0;
    labels.push_back(s);
  }
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  auto Z1 = forward_logits(m, X, 1);
  auto Z4 = forward_logits(m, X, 4);
  REQUIRE(Z1.data == Z4.data);
  auto g1 = backward(m, X, labels, spec, 1);
  auto g4 = backward(m, X, labels, spec, 4);
  REQUIRE(g1.mean_loss == g4.mean_loss);
  for (std::size_t l = 0; l < g1.grads.dW.size(); ++l) {
    REQUIRE(g1.grads.dW[l].data == g4.grads.dW[l].data);
    REQUIRE(g1.grads.db[l] == g4.grads.db[l]);
  }
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(21);
  for (LossKind kind : {LossKind::SclNl, LossKind::SclExp, LossKind::Fwd}) {
    LossSpec spec{kind, 1e-6, uniform_transition(3)};
    auto m = init_model({4, 5, 3}, 13);
    Matrix X(6, 4);
    for (auto& v : X.data) v = rng.next_normal();
    std::vector<SoftLabel> labels;
    for (std::size_t i = 0; i < X.rows; ++i) {
      SoftLabel s(3, 0.0);
      double lam = rng.next_double();
      s[rng.next_below(3)] += lam;
      s[rng.next_below(3)] += 1.0 - lam;
      labels.push_back(s);
    }
    auto res = backward(m, X, labels, spec);
    REQUIRE(res.mean_loss ==
            Catch::Approx(mean_soft_loss(m, X, labels, spec)).epsilon(1e-12));

    auto analytic = flatten(res.grads);
    std::vector<double> fd;
    const double h = 1e-5;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      auto probe = [&](double* slot) {
        double keep = *slot;
        *slot = keep + h;
        double up = mean_soft_loss(m, X, labels, spec);
        *slot = keep - h;
        double dn = mean_soft_loss(m, X, labels, spec);
        *slot = keep;
        fd.push_back((up - dn) / (2.0 * h));
      };
      for (auto& w : m.layers[l].W.data) probe(&w);
      for (auto& b : m.layers[l].b) probe(&b);
    }
    REQUIRE(testsupport::rel_vec_err(analytic, fd) < 1e-6);
  }
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged") {
  auto m = init_model({3, 4, 3}, 8);
  Rng rng(9);
  Matrix X(4, 3);
  for (auto& v : X.data) v = rng.next_normal();
  std::vector<SoftLabel> labels;
  for (int i = 0; i < 4; ++i) {
    SoftLabel s(3, 0.0);
    s[rng.next_below(3)] = 1.0;
    labels.push_back(s);
  }
  Matrix X2(8, 3);
  std::copy(X.data.begin(), X.data.end(), X2.data.begin());
  std::copy(X.data.begin(), X.data.end(), X2.data.begin() + X.data.size());
  auto labels2 = labels;
  labels2.insert(labels2.end(), labels.begin(), labels.end());

  LossSpec spec{LossKind::SclExp, 1e-6, {}};
  auto g1 = backward(m, X, labels, spec);
  auto g2 = backward(m, X2, labels2, spec);
  auto f1 = flatten(g1.grads);
  auto f2 = flatten(g2.grads);
  for (std::size_t i = 0; i < f1.size(); ++i)
    REQUIRE(f1[i] == Catch::Approx(f2[i]).margin(1e-12));
}

TEST_CASE("tied hidden units receive identical gradients") {
  // two hidden units with equal incoming and outgoing weights are
  // exchangeable, so backprop must treat them identically
  MlpModel m;
  m.dims = {3, 2, 4};
  m.layers.resize(2);
  m.layers[0].W = Matrix(3, 2);
  m.layers[0].W.data = {0.3, 0.3, -0.2, -0.2, 0.7, 0.7};
  m.layers[0].b = {0.1, 0.1};
  m.layers[1].W = Matrix(2, 4);
  m.layers[1].W.data = {0.5, -0.1, 0.2, 0.4, 0.5, -0.1, 0.2, 0.4};
  m.layers[1].b = {0.0, 0.0, 0.0, 0.0};
  Rng rng(3);
  Matrix X(5, 3);
  for (auto& v : X.data) v = rng.next_normal();
  std::vector<SoftLabel> labels(5, SoftLabel{0.25, 0.25, 0.25, 0.25});
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  auto res = backward(m, X, labels, spec);
  for (std::size_t k = 0; k < 3; ++k)
    REQUIRE(res.grads.dW[0].at(k, 0) == res.grads.dW[0].at(k, 1));
  REQUIRE(res.grads.db[0][0] == res.grads.db[0][1]);
  for (std::size_t j = 0; j < 4; ++j)
    REQUIRE(res.grads.dW[1].at(0, j) == res.grads.dW[1].at(1, j));
}

TEST_CASE("SGD with zero gradient shrinks weights by 1 - lr*wd") {
  auto m = init_model({2, 3}, 4);
  auto before = m.layers[0].W.data;
  auto g = zero_gradients(m);
  auto s = init_opt_state(m);
  optimizer_step(OptKind::Sgd, m, g, s, 0.1, 0.5);
  for (std::size_t i = 0; i < before.size(); ++i)
    REQUIRE(m.layers[0].W.data[i] ==
            Catch::Approx(before[i] * (1.0 - 0.1 * 0.5)).margin(1e-15));
}

TEST_CASE("plain SGD steps along the negative gradient") {
  auto m = init_model({2, 2}, 4);
  auto before = m.layers[0].W.data;
  auto g = zero_gradients(m);
  g.dW[0].data = {1.0, -2.0, 0.5, 0.0};
  auto s = init_opt_state(m);
  optimizer_step(OptKind::Sgd, m, g, s, 0.01, 0.0);
  for (std::size_t i = 0; i < before.size(); ++i)
    REQUIRE(m.layers[0].W.data[i] == before[i] - 0.01 * g.dW[0].data[i]);
}

TEST_CASE("Adam first step moves by about lr in the gradient direction") {
  auto m = init_model({1, 1}, 4);
  double before = m.layers[0].W.data[0];
  auto g = zero_gradients(m);
  g.dW[0].data[0] = 0.5;
  auto s = init_opt_state(m);
  optimizer_step(OptKind::Adam, m, g, s, 1e-3, 0.0);
  // mhat = g, vhat = g^2, update = lr * g / (|g| + eps) ~ lr * sign(g)
  REQUIRE(m.layers[0].W.data[0] ==
          Catch::Approx(before - 1e-3).epsilon(1e-6));
  REQUIRE(s.t == 1);
}

TEST_CASE("Adam with constant gradient keeps unit-scale steps") {
  auto m = init_model({1, 1}, 4);
  auto g = zero_gradients(m);
  g.dW[0].data[0] = -0.25;
  auto s = init_opt_state(m);
  double prev = m.layers[0].W.data[0];
  for (int step = 0; step < 5; ++step) {
    optimizer_step(OptKind::Adam, m, g, s, 1e-3, 0.0);
    double moved = m.layers[0].W.data[0] - prev;
    REQUIRE(moved == Catch::Approx(1e-3).epsilon(1e-4));
    prev = m.layers[0].W.data[0];
  }
}

TEST_CASE("checkpoints round-trip bitwise") {
  testsupport::TempDir td;
  auto m = init_model({6, 5, 4}, 77);
  m.layers[0].b[2] = -0.125;
  save_checkpoint(td.file("m.bin"), m);
  auto back = load_checkpoint(td.file("m.bin"));
  REQUIRE(back.dims == m.dims);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    REQUIRE(back.layers[l].W.data == m.layers[l].W.data);
    REQUIRE(back.layers[l].b == m.layers[l].b);
  }

  auto bytes = testsupport::read_bytes(td.file("m.bin"));
  bytes[1] = 'X';
  testsupport::write_bytes(td.file("bad.bin"), bytes);
  REQUIRE_THROWS_WITH(load_checkpoint(td.file("bad.bin")),
                      Catch::Matchers::ContainsSubstring("magic"));
  bytes[1] = 'L';
  bytes.pop_back();
  testsupport::write_bytes(td.file("trunc.bin"), bytes);
  REQUIRE_THROWS_WITH(load_checkpoint(td.file("trunc.bin")),
                      Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("evaluate ties to the lowest class and scales sanely") {
  // all-zero weights: logits constant, prediction is class 0 everywhere
  auto m = init_model({3, 4}, 1);
  for (auto& w : m.layers[0].W.data) w = 0.0;
  Matrix X(8, 3, 0.5);
  std::vector<int> y = {0, 1, 2, 3, 0, 1, 2, 3};
  REQUIRE(evaluate(m, X, y) == 0.25);

  // a perfect linear classifier on one-hot inputs
  auto id = init_model({4, 4}, 1);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j) id.layers[0].W.at(k, j) = k == j ? 1.0 : 0.0;
  Matrix X2(4, 4, 0.0);
  for (int i = 0; i < 4; ++i) X2.at(i, i) = 1.0;
  std::vector<int> y2 = {0, 1, 2, 3};
  REQUIRE(evaluate(id, X2, y2) == 1.0);

  // positive scaling never changes the argmax
  for (auto& w : id.layers[0].W.data) w *= 3.0;
  REQUIRE(evaluate(id, X2, y2) == 1.0);
}

TEST_CASE("forward validates shapes and finiteness") {
  auto m = init_model({3, 2}, 1);
  Matrix wrong(2, 4, 0.0);
  REQUIRE_THROWS_AS(forward_logits(m, wrong), DataError);
  Matrix bad(1, 3, 0.0);
  bad.data[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(forward_logits(m, bad), NumericError);
}
