#include <doctest.h>

#include <cmath>
#include <random>

#include "dypro/error.hpp"
#include "dypro/objective.hpp"

using namespace dypro;

namespace {

ad::Matrix logit_of(const ad::Matrix& h) { return (h.array() / (1.0 - h.array())).log(); }

}  // namespace

TEST_CASE("label to bin") {
  const TimeBins annual = TimeBins::annual(12);
  CHECK(label_to_bin(0.5, annual) == 0);
  CHECK(label_to_bin(1.0, annual) == 1);
  CHECK(label_to_bin(99.0, annual) == 11);
  CHECK(label_to_bin(0.0, annual) == 0);
  CHECK_THROWS_AS(label_to_bin(-0.1, annual), DomainError);
}

TEST_CASE("discrete NLL hand values") {
  const TimeBins bins = TimeBins::annual(2);
  const Eigen::Vector2d half(0.5, 0.5);
  CHECK(discrete_nll(half, {0.5, true}, bins) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(discrete_nll(half, {0.5, false}, bins) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(discrete_nll(Eigen::Vector2d(0.2, 0.5), {1.5, true}, bins) ==
        doctest::Approx(0.9163).epsilon(1e-4));
  CHECK(discrete_nll(Eigen::Vector2d(0.2, 0.5), {1.5, true}, bins) ==
        doctest::Approx(-(std::log(0.8) + std::log(0.5))).epsilon(1e-15));
  // Censored in bin 1 survives through bin 1 inclusive.
  CHECK(discrete_nll(Eigen::Vector2d(0.2, 0.5), {1.5, false}, bins) ==
        doctest::Approx(-(std::log(0.8) + std::log(0.5))).epsilon(1e-15));
}

TEST_CASE("discrete NLL clamps saturated hazards") {
  const TimeBins bins = TimeBins::annual(2);
  const double v = discrete_nll(Eigen::Vector2d(0.0, 1.0), {0.2, true}, bins);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(kHazardFloor)));
}

TEST_CASE("combined loss arithmetic") {
  CHECK(combined_loss(0.5, 0.3, {1.0, 0.0}) == 0.5);
  CHECK(combined_loss(0.5, 0.3, {1.0, 1.0}) == doctest::Approx(0.8));
  CHECK(combined_loss(0.5, 0.3, {2.0, 1.0}) == doctest::Approx(1.3));
  CHECK_THROWS_AS(validate(LossWeights{0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(validate(LossWeights{-1.0, 1.0}), ConfigError);
}

TEST_CASE("batch NLL is the mean of per-patient NLLs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> time(0.0, 14.0);
  std::bernoulli_distribution event(0.5);
  std::normal_distribution<double> logit(0.0, 2.0);
  const TimeBins bins = TimeBins::annual(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + trial % 7;
    ad::Matrix logits(n, 12);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = logit(rng);
    std::vector<SurvivalLabel> labels;
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      labels.push_back({time(rng), event(rng)});
      mean += discrete_nll(hazards_from_logits(logits.row(i).transpose()), labels.back(), bins) /
              static_cast<double>(n);
    }
    ad::ParameterSet ps;
    ad::Tape tape(ps);
    const double batch =
        batch_nll(tape.constant(logits), make_nll_targets(labels, bins)).value()(0, 0);
    CHECK(std::abs(batch - mean) <= 1e-12);
  }
}

TEST_CASE("NLL gradient pushes the event bin up and earlier bins down") {
  const TimeBins bins = TimeBins::annual(4);
  const std::vector<SurvivalLabel> label = {{2.4, true}};
  ad::ParameterSet ps;
  const auto x = ps.add("logits", ad::Matrix{{0.3, -0.2, 0.1, 0.4}});
  ad::Tape tape(ps);
  const auto g = tape.backward(batch_nll(tape.param(x), make_nll_targets(label, bins)))[x];
  CHECK(g(0, 0) > 0.0);
  CHECK(g(0, 1) > 0.0);
  CHECK(g(0, 2) < 0.0);
  CHECK(g(0, 3) == 0.0);
}

TEST_CASE("batch NLL gradient check") {
  const TimeBins bins = TimeBins::annual(5);
  const std::vector<SurvivalLabel> labels = {{0.2, true}, {3.5, false}, {7.0, true}};
  ad::ParameterSet ps;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  ad::Matrix h(3, 5);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = u(rng);
  ps.add("logits", logit_of(h));
  const auto targets = make_nll_targets(labels, bins);
  const auto r = ad::grad_check([&](ad::Tape& t) { return batch_nll(t.param(0), targets); }, ps,
                                1e-5);
  CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("AdamW steps") {
  AdamWConfig cfg;
  cfg.lr = 0.1;

  SUBCASE("zero gradient without decay") {
    cfg.weight_decay = 0.0;
    ad::ParameterSet ps;
    ps.add("w", ad::Matrix::Constant(2, 2, 1.3));
    auto state = make_optimizer_state(ps, cfg.lr);
    adamw_step(ps, {ad::Matrix::Zero(2, 2)}, state, cfg);
    CHECK(ps.value(0) == ad::Matrix::Constant(2, 2, 1.3));
  }
  SUBCASE("first bias-corrected step") {
    cfg.weight_decay = 0.0;
    ad::ParameterSet ps;
    ps.add("w", ad::Matrix::Ones(1, 1));
    auto state = make_optimizer_state(ps, cfg.lr);
    adamw_step(ps, {ad::Matrix::Ones(1, 1)}, state, cfg);
    CHECK(ps.value(0)(0, 0) == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(state.step == 1);
  }
  SUBCASE("decoupled decay") {
    cfg.weight_decay = 0.1;
    ad::ParameterSet ps;
    ps.add("w", ad::Matrix::Constant(1, 3, 2.0));
    auto state = make_optimizer_state(ps, cfg.lr);
    adamw_step(ps, {ad::Matrix::Zero(1, 3)}, state, cfg);
    CHECK(ps.value(0).isApprox(ad::Matrix::Constant(1, 3, 2.0 * 0.99), 1e-15));
  }
  SUBCASE("non-finite gradient names the parameter") {
    ad::ParameterSet ps;
    ps.add("embed.liver.weight", ad::Matrix::Ones(1, 1));
    auto state = make_optimizer_state(ps, cfg.lr);
    ad::Gradients g = {ad::Matrix::Constant(1, 1, std::nan(""))};
    CHECK_THROWS_WITH_AS(adamw_step(ps, g, state, cfg),
                         doctest::Contains("embed.liver.weight"), DomainError);
  }
  SUBCASE("bitwise deterministic") {
    auto run = [&] {
      std::mt19937_64 rng(9);
      std::normal_distribution<double> n(0.0, 1.0);
      ad::ParameterSet ps;
      ad::Matrix w(3, 3);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
      ps.add("w", w);
      auto state = make_optimizer_state(ps, cfg.lr);
      for (int s = 0; s < 10; ++s) {
        ad::Matrix g(3, 3);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
        adamw_step(ps, {g}, state, cfg);
      }
      return ps.value(0);
    };
    CHECK(run() == run());
  }
}

TEST_CASE("plateau schedule traces") {
  ad::ParameterSet ps;
  SUBCASE("improving losses never reduce the rate") {
    auto state = make_optimizer_state(ps, 1e-3);
    for (int e = 0; e < 30; ++e) plateau_schedule(state, 10.0 - e, 0.5, 5);
    CHECK(state.lr == 1e-3);
  }
  SUBCASE("six stalls halve the rate once") {
    auto state = make_optimizer_state(ps, 1e-3);
    plateau_schedule(state, 1.0, 0.5, 5);
    for (int e = 0; e < 5; ++e) {
      plateau_schedule(state, 1.0, 0.5, 5);
      CHECK(state.lr == 1e-3);
    }
    plateau_schedule(state, 1.0, 0.5, 5);
    CHECK(state.lr == 0.5e-3);
    CHECK(state.plateau.counter == 0);
  }
  SUBCASE("improvement after five stalls resets the counter") {
    auto state = make_optimizer_state(ps, 1e-3);
    plateau_schedule(state, 1.0, 0.5, 5);
    for (int e = 0; e < 5; ++e) plateau_schedule(state, 1.0, 0.5, 5);
    plateau_schedule(state, 0.9, 0.5, 5);
    CHECK(state.plateau.counter == 0);
    CHECK(state.lr == 1e-3);
  }
  SUBCASE("changes below the tolerance are stalls") {
    auto state = make_optimizer_state(ps, 1e-3);
    plateau_schedule(state, 1.0, 0.5, 5);
    plateau_schedule(state, 1.0 - 1e-9, 0.5, 5);
    CHECK(state.plateau.counter == 1);
  }
}

TEST_CASE("early stopping traces") {
  ad::ParameterSet ps;
  SUBCASE("improving every epoch never stops") {
    auto state = make_optimizer_state(ps, 1e-3);
    for (int e = 0; e < 500; ++e) {
      CHECK(early_stop(state, 100.0 - 0.1 * e, 20) == StopDecision::Continue);
    }
  }
  SUBCASE("flat losses with patience 10 stop at epoch 11") {
    auto state = make_optimizer_state(ps, 1e-3);
    std::size_t stopped = 0;
    for (std::size_t epoch = 1; epoch <= 50 && !stopped; ++epoch) {
      if (early_stop(state, 0.7, 10) == StopDecision::Stop) stopped = epoch;
    }
    CHECK(stopped == 11);
    CHECK(state.early.best_evaluation == 1);
  }
  SUBCASE("best at epoch 3, stop at 13") {
    auto state = make_optimizer_state(ps, 1e-3);
    const double losses[] = {3.0, 2.0, 1.0};
    std::size_t stopped = 0;
    for (std::size_t epoch = 1; epoch <= 50 && !stopped; ++epoch) {
      const double loss = epoch <= 3 ? losses[epoch - 1] : 1.5;
      if (early_stop(state, loss, 10) == StopDecision::Stop) stopped = epoch;
    }
    CHECK(stopped == 13);
    CHECK(state.early.best_evaluation == 3);
  }
}
