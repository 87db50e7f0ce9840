#include <doctest.h>

#include <cmath>
#include <numbers>

#include "altfreeze/trainer.hpp"
#include "freeze.hpp"
#include "support.hpp"

using namespace altfreeze;
using testing::Gen;

TEST_CASE("20:1 schedule over 210 iterations") {
  FreezeSchedule s;
  std::size_t temporal = 0, spatial = 0;
  for (; s.counter < 210; ++s.counter) {
    const Phase p = s.phase();
    (p == Phase::temporal_update ? temporal : spatial)++;
    // Spatial weights are frozen for the first I_s iterations of each cycle.
    CHECK((p == Phase::spatial_update) == (s.counter % 21 == 20));
  }
  CHECK(temporal == 200);
  CHECK(spatial == 10);
  CHECK(s.cycle_length() == 21);
}

TEST_CASE("schedule with other ratios") {
  CHECK(active_group(0, 1, 1) == Phase::temporal_update);
  CHECK(active_group(1, 1, 1) == Phase::spatial_update);
  CHECK(active_group(2, 1, 3) == Phase::spatial_update);
  CHECK(active_group(4, 1, 3) == Phase::temporal_update);
  CHECK_THROWS(active_group(0, 0, 1));
  CHECK_THROWS(active_group(0, 1, 0));
}

TEST_CASE("sgd momentum on a scalar") {
  std::vector<Parameter<double>> params{{{"w", ParamKind::linear_bias, {1}}, Tensor<double>({1}, 0.0)},
                                        {{"v", ParamKind::linear_bias, {1}}, Tensor<double>({1}, 5.0)}};
  SgdState<double> state(params, 0.9, 1.0);
  const std::map<ParamId, Tensor<double>> grads{{0, Tensor<double>({1}, 1.0)}, {1, Tensor<double>({1}, 1.0)}};
  const std::vector<std::size_t> active{0};
  sgd_step(params, active, grads, state);
  CHECK(params[0].value[0] == doctest::Approx(-1.0));
  sgd_step(params, active, grads, state);
  CHECK(params[0].value[0] == doctest::Approx(-2.9));
  CHECK(params[1].value[0] == 5.0);
  CHECK(state.momentum[1][0] == 0.0);
  const std::vector<std::size_t> missing{1};
  CHECK_THROWS(sgd_step(params, missing, {}, state));
}

TEST_CASE("bce of a coin flip is ln 2 per sample") {
  for (std::size_t n : {1u, 2u, 32u}) {
    std::vector<double> p(n, 0.5), y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = double(i % 2);
    CHECK(std::abs(bce_loss(p, y, Reduction::sum) - double(n) * std::numbers::ln2) < 1e-9);
    CHECK(std::abs(bce_loss(p, y, Reduction::mean) - std::numbers::ln2) < 1e-9);
  }
}

TEST_CASE("bce reference values and errors") {
  const std::vector<double> p{0.9, 0.2}, y{1, 0};
  CHECK(bce_loss(p, y, Reduction::sum) == doctest::Approx(-std::log(0.9) - std::log(0.8)));
  const std::vector<double> sure{1.0}, wrong{0.0};
  CHECK(std::isfinite(bce_loss(sure, wrong, Reduction::sum)));
  CHECK(bce_loss(sure, wrong, Reduction::sum) == doctest::Approx(30.0).epsilon(1e-6));
  const std::vector<double> bad{0.5};
  CHECK_THROWS(bce_loss(p, bad, Reduction::sum));
  CHECK_THROWS(bce_loss(bad, std::vector<double>{2.0}, Reduction::sum));
  CHECK_THROWS(bce_loss({}, {}, Reduction::mean));
}

TEST_CASE("cosine learning rate endpoints") {
  CHECK(std::abs(cosine_lr(0, 1000, 0.05) - 0.05) < 1e-9);
  CHECK(std::abs(cosine_lr(1000, 1000, 0.05)) < 1e-9);
  CHECK(std::abs(cosine_lr(500, 1000, 0.05) - 0.025) < 1e-9);
  double last = 1.0;
  for (std::uint64_t i = 0; i <= 100; ++i) {
    const double lr = cosine_lr(i, 100, 0.05);
    CHECK(lr <= last);
    last = lr;
  }
  CHECK_THROWS(cosine_lr(0, 0, 0.05));
  CHECK_THROWS(cosine_lr(11, 10, 0.05));
}

TEST_CASE("frozen groups are untouched and everything else moves") {
  const auto r = testing::run_freeze_check(42, 2, 3);
  CHECK(r.temporal_phases == 40);
  CHECK(r.spatial_phases == 2);
  CHECK(r.frozen_changed == 0);
  CHECK(r.updated_unchanged == 0);
}

TEST_CASE("joint training updates every group") {
  const ClipDataset data = testing::small_training_set(4, 1);
  Model<float> model = build_model<float>(ModelSpec::reference(), 1);
  TrainConfig config;
  config.batch_size = 4;
  config.epochs = 1;
  config.alt_freezing = false;
  Trainer<float> trainer(model, data, config);
  CHECK(trainer.active_params(Phase::joint).size() == model.parameters().size());
  const auto before = model.parameters();
  CHECK(trainer.step().phase == Phase::joint);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK_FALSE(bitwise_equal(before[i].value, model.parameters()[i].value));
}

TEST_CASE("same seed gives the same loss trace and restore continues it") {
  const ClipDataset data = testing::small_training_set(4, 2);
  TrainConfig config;
  config.batch_size = 4;
  config.epochs = 3;
  config.seed = 9;
  Model<float> a = build_model<float>(ModelSpec::reference(), 9);
  Model<float> b = build_model<float>(ModelSpec::reference(), 9);
  Trainer<float> ta(a, data, config), tb(b, data, config);
  const auto la = ta.run().losses();
  CHECK(la.size() == 6);

  std::vector<double> lb;
  for (int i = 0; i < 3; ++i) lb.push_back(tb.step().loss);
  const TrainerState<float> state = tb.state();
  Model<float> c = b;
  Trainer<float> tc(c, data, config);
  tc.restore(state);
  while (!tc.done()) lb.push_back(tc.step().loss);
  CHECK(la == lb);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(bitwise_equal(a.parameters()[i].value, c.parameters()[i].value));
}

TEST_CASE("batches are reproducible and labelled") {
  const ClipDataset data = testing::small_training_set(4, 3);
  Model<float> model(ModelSpec::reference());
  TrainConfig config;
  config.batch_size = 4;
  Trainer<float> t(model, data, config);
  const auto [x1, y1] = t.make_batch(5);
  const auto [x2, y2] = t.make_batch(5);
  CHECK(bitwise_equal(x1, x2));
  CHECK(bitwise_equal(y1, y2));
  CHECK(x1.shape() == Shape{4, 3, 8, 32, 32});
  for (float y : y1.values()) CHECK((y == 0.0f || y == 1.0f));
  for (float v : x1.values()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("trainer rejects unusable inputs") {
  Model<float> model(ModelSpec::reference());
  ClipDataset data = testing::small_training_set(2, 4);
  TrainConfig config;
  config.batch_size = 2;
  ClipDataset reals;
  for (const auto& r : data.records)
    if (r.label == 0) reals.records.push_back(r);
  CHECK_THROWS(Trainer<float>(model, reals, config));
  config.clip_length = 4;
  CHECK_THROWS(Trainer<float>(model, data, config));
  config = TrainConfig{};
  config.spatial_frozen_iters = 0;
  CHECK_THROWS(config.validate());
  config = TrainConfig{};
  config.batch_size = 0;
  CHECK_THROWS(config.validate());
}

TEST_CASE("log csv") {
  TrainLog log;
  log.iterations.push_back({0, 0, Phase::temporal_update, 0.05, 0.5});
  log.evals.push_back({0, 0, 0.75});
  const std::string csv = log.csv({"seed=1"});
  CHECK(csv.rfind("# seed=1\niter,epoch,phase,lr,loss,eval_auc\n0,0,temporal,", 0) == 0);
  CHECK(csv.find("eval") != std::string::npos);
}
