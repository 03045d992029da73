#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cll/labelgen.hpp"
#include "cll/train.hpp"
#include "support.hpp"

using namespace cll;

namespace {

// Three well-separated gaussian blobs in the plane.
LabeledSet blob_set(std::size_t per_class, std::uint64_t seed) {
  LabeledSet s;
  s.K = 3;
  s.X = Matrix(3 * per_class, 2);
  Rng rng(seed);
  double centers[3][2] = {{0.0, 0.0}, {8.0, 0.0}, {0.0, 8.0}};
  for (std::size_t i = 0; i < 3 * per_class; ++i) {
    int c = static_cast<int>(i % 3);
    s.y.push_back(c);
    s.X.at(i, 0) = centers[c][0] + 0.5 * rng.next_normal();
    s.X.at(i, 1) = centers[c][1] + 0.5 * rng.next_normal();
  }
  s.ybar = sample_complementary(s.y, uniform_transition(3), seed + 9);
  return s;
}

std::vector<double> params_of(const MlpModel& m) {
  std::vector<double> v;
  for (const auto& l : m.layers) {
    v.insert(v.end(), l.W.data.begin(), l.W.data.end());
    v.insert(v.end(), l.b.begin(), l.b.end());
  }
  return v;
}

}  // namespace

TEST_CASE("seeded splits are disjoint, sorted, and sized by the fraction") {
  auto [kept, held] = split_indices(100, 0.1, 5);
  REQUIRE(held.size() == 10);
  REQUIRE(kept.size() == 90);
  REQUIRE(std::is_sorted(kept.begin(), kept.end()));
  REQUIRE(std::is_sorted(held.begin(), held.end()));
  std::vector<bool> seen(100, false);
  for (auto i : kept) seen[i] = true;
  for (auto i : held) {
    REQUIRE(!seen[i]);
    seen[i] = true;
  }
  for (bool b : seen) REQUIRE(b);
  auto [k2, h2] = split_indices(100, 0.1, 5);
  REQUIRE(k2 == kept);
  auto [k3, h3] = split_indices(100, 0.1, 6);
  REQUIRE(k3 != kept);
  REQUIRE_THROWS_AS(split_indices(10, 1.0, 1), ConfigError);
  REQUIRE_THROWS_AS(split_indices(10, -0.1, 1), ConfigError);
}

TEST_CASE("row and vector subsets validate their indices") {
  Matrix X(3, 2);
  X.data = {1, 2, 3, 4, 5, 6};
  auto sub = subset_rows(X, {2, 0});
  REQUIRE(sub.data == std::vector<double>{5, 6, 1, 2});
  REQUIRE_THROWS_AS(subset_rows(X, {3}), DataError);
  std::vector<int> v = {7, 8, 9};
  REQUIRE(subset_vec(v, {1}) == std::vector<int>{8});
  REQUIRE_THROWS_AS(subset_vec(v, {5}), DataError);
  REQUIRE(subset_vec(std::vector<int>{}, {5}).empty());  // absent field
}

TEST_CASE("one plain epoch matches a hand-rolled loop step for step") {
  auto data = blob_set(5, 3);  // 15 rows; batch 4 leaves a short tail batch
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 1;
  opt.batch_size = 4;
  opt.lr = 1e-2;
  opt.weight_decay = 1e-4;
  opt.optimizer = OptKind::Adam;
  opt.seed = 11;

  auto init = init_model({2, 4, 3}, 7);
  auto got = train_model(init, data, spec, opt);

  // replay: same shuffle stream, same batch walk, same updates
  MlpModel m = init;
  auto st = init_opt_state(m);
  std::vector<std::size_t> order(15);
  for (std::size_t i = 0; i < 15; ++i) order[i] = i;
  Rng shuffle_rng = Rng(opt.seed).fork(1, 1);
  shuffle_rng.shuffle(order);
  double loss_sum = 0.0;
  for (std::size_t lo = 0; lo < 15; lo += 4) {
    std::size_t hi = std::min<std::size_t>(15, lo + 4);
    std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
    Matrix Xb = subset_rows(data.X, idx);
    std::vector<SoftLabel> labels;
    for (auto i : idx) {
      SoftLabel s(3, 0.0);
      s[data.ybar[i]] = 1.0;
      labels.push_back(s);
    }
    auto res = backward(m, Xb, labels, spec);
    optimizer_step(opt.optimizer, m, res.grads, st, opt.lr, opt.weight_decay);
    loss_sum += res.mean_loss * static_cast<double>(Xb.rows);
  }
  REQUIRE(params_of(got.model) == params_of(m));
  REQUIRE(got.history.size() == 1);
  REQUIRE(got.history[0].metric == "loss");
  REQUIRE(got.history[0].value == loss_sum / 15.0);
}

TEST_CASE("training is bit-deterministic and thread-count independent") {
  auto data = blob_set(40, 5);
  data.cluster = data.y;  // class-pure clusters
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 32;
  opt.policy = MixKind::Icm;
  opt.alpha = 0.4;
  opt.seed = 21;

  auto a = train_model(init_model({2, 8, 3}, 1), data, spec, opt);
  auto b = train_model(init_model({2, 8, 3}, 1), data, spec, opt);
  opt.threads = 4;
  auto c = train_model(init_model({2, 8, 3}, 1), data, spec, opt);
  REQUIRE(params_of(a.model) == params_of(b.model));
  REQUIRE(params_of(a.model) == params_of(c.model));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    REQUIRE(a.history[i].value == b.history[i].value);
    REQUIRE(a.history[i].value == c.history[i].value);
  }

  opt.seed = 22;
  auto d = train_model(init_model({2, 8, 3}, 1), data, spec, opt);
  REQUIRE(params_of(a.model) != params_of(d.model));
}

TEST_CASE("plain training loss sinks monotonically on a separable toy") {
  auto data = blob_set(60, 7);
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 5;
  opt.batch_size = 32;
  opt.lr = 1e-2;
  opt.seed = 2;

  auto res = train_model(init_model({2, 16, 3}, 3), data, spec, opt);
  std::vector<double> losses;
  for (const auto& row : res.history)
    if (row.metric == "loss") losses.push_back(row.value);
  REQUIRE(losses.size() == 5);
  for (std::size_t i = 1; i < losses.size(); ++i)
    REQUIRE(losses[i] <= losses[i - 1] + 1e-9);
}

TEST_CASE("complementary training learns the blobs and logs evaluation") {
  auto train_set = blob_set(80, 13);
  auto test_set = blob_set(20, 14);
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 30;
  opt.batch_size = 64;
  opt.lr = 1e-2;
  opt.seed = 4;

  std::vector<EvalSplit> evals = {{"test", &test_set.X, &test_set.y}};
  auto res = train_model(init_model({2, 16, 3}, 6), train_set, spec, opt,
                         evals, "toy");
  double last_acc = 0.0;
  std::size_t acc_rows = 0;
  for (const auto& row : res.history)
    if (row.metric == "accuracy") {
      REQUIRE(row.split == "test");
      REQUIRE(row.value >= 0.0);
      REQUIRE(row.value <= 1.0);
      last_acc = row.value;
      ++acc_rows;
    }
  REQUIRE(acc_rows == 30);
  REQUIRE(last_acc >= 0.9);  // complementary labels suffice on this toy
  for (const auto& row : res.history) REQUIRE(row.run_id == "toy");
}

TEST_CASE("policies declare their data requirements") {
  auto data = blob_set(10, 17);
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 1;

  opt.policy = MixKind::Icm;
  REQUIRE_THROWS_AS(
      train_model(init_model({2, 4, 3}, 1), data, spec, opt), ConfigError);

  opt.policy = MixKind::MixupNf;
  auto no_oracle = data;
  no_oracle.y.clear();
  REQUIRE_THROWS_AS(
      train_model(init_model({2, 4, 3}, 1), no_oracle, spec, opt), ConfigError);

  opt.policy = MixKind::Mixup;
  opt.track_noise = true;
  REQUIRE_THROWS_AS(
      train_model(init_model({2, 4, 3}, 1), no_oracle, spec, opt), ConfigError);

  auto no_comp = data;
  no_comp.ybar.clear();
  opt.policy = MixKind::None;
  opt.track_noise = false;
  REQUIRE_THROWS_AS(
      train_model(init_model({2, 4, 3}, 1), no_comp, spec, opt), DataError);
}

TEST_CASE("noise tracking logs per-epoch rows with sane values") {
  auto data = blob_set(50, 19);
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 50;
  opt.policy = MixKind::Mixup;
  opt.track_noise = true;
  opt.seed = 6;

  auto res = train_model(init_model({2, 4, 3}, 1), data, spec, opt);
  std::size_t noise_rows = 0;
  for (const auto& row : res.history)
    if (row.metric == "noise_ratio") {
      REQUIRE(row.value >= 0.0);
      REQUIRE(row.value <= 1.0);
      ++noise_rows;
    }
  REQUIRE(noise_rows == 2);

  // class-pure clusters force the mixing noise to zero
  data.cluster = data.y;
  opt.policy = MixKind::Icm;
  auto pure = train_model(init_model({2, 4, 3}, 1), data, spec, opt);
  for (const auto& row : pure.history)
    if (row.metric == "noise_ratio") REQUIRE(row.value == 0.0);
}

TEST_CASE("all-singleton clusters yield no steps and leave the model alone") {
  auto data = blob_set(8, 23);
  data.cluster.resize(data.X.rows);
  for (std::size_t i = 0; i < data.cluster.size(); ++i)
    data.cluster[i] = static_cast<int>(i);
  LossSpec spec{LossKind::SclNl, 1e-6, {}};
  TrainOptions opt;
  opt.epochs = 2;
  opt.policy = MixKind::Icm;

  auto init = init_model({2, 4, 3}, 9);
  auto res = train_model(init, data, spec, opt);
  REQUIRE(params_of(res.model) == params_of(init));
  for (const auto& row : res.history)
    if (row.metric == "loss") REQUIRE(row.value == 0.0);
}
