#include <cmath>
#include <regex>

#include "doctest.h"
#include "mail/errors.hpp"
#include "mail/metrics.hpp"
#include "mail/ops.hpp"
#include "mail/optim.hpp"
#include "mail/synth.hpp"
#include "mail/trainer.hpp"

using namespace mail;

namespace {

using Vec = std::vector<double>;

/// One-hot-ish scores putting all mass on the predicted class.
Vec scores_for(const std::vector<int>& pred, std::size_t k) {
  Vec s(pred.size() * k, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) s[i * k + static_cast<std::size_t>(pred[i])] = 1.0;
  return s;
}

Dataset tiny_data() {
  SynthConfig c;
  c.train = 48;
  c.val = 0;
  c.test = 24;
  c.classes = 2;
  c.size = 16;
  c.modalities = 2;
  c.channels = 1;
  c.amplitude = 0.3;
  return synth_generate(4, c);
}

NetworkConfig tiny_net() {
  NetworkConfig c;
  c.modalities = 2;
  c.in_channels = 1;
  c.height = c.width = 16;
  c.stage_channels = {4};
  c.stage_depths = {1};
  c.tasks = {{"task0", 2}};
  return c;
}

}  // namespace

TEST_SUITE("train_eval") {
  TEST_CASE("SGD closed-form updates") {
    Tensor p = Tensor::full({1}, 1.0, true);
    Sgd plain({{"p", p}}, {0.1, 0.0});
    scale(p, 2.0).backward();  // grad 2
    plain.step();
    CHECK(p.item() == doctest::Approx(0.8).epsilon(1e-15));

    Tensor q = Tensor::full({1}, 1.0, true);
    Sgd mom({{"q", q}}, {0.1, 0.9});
    for (int i = 0; i < 2; ++i) {
      mom.zero_grad();
      scale(q, 0.5).backward();
      mom.step();
    }
    // v1 = 0.5, p1 = 0.95; v2 = 0.95, p2 = 0.855.
    CHECK(q.item() == doctest::Approx(0.855).epsilon(1e-15));
  }

  TEST_CASE("SGD leaves zero-gradient and frozen parameters untouched") {
    Tensor a = Tensor::full({2}, 3.0, true), b = Tensor::full({2}, 5.0, false);
    Sgd opt({{"a", a}, {"b", b}}, {0.1, 0.9});
    scale(sum(a), 0.0).backward();
    opt.step();
    CHECK(a[0] == 3.0);
    CHECK(b[0] == 5.0);
  }

  TEST_CASE("SGD converges on a quadratic bowl") {
    Tensor p = Tensor::full({1}, 1.0, true);
    Sgd opt({{"p", p}}, {0.1, 0.0});
    for (int i = 0; i < 100; ++i) {
      opt.zero_grad();
      sum_squares(p).backward();
      opt.step();
    }
    CHECK(std::abs(p.item()) < 1e-8);
  }

  TEST_CASE("SGD rejects non-finite gradients") {
    Tensor p = Tensor::full({1}, 1.0, true);
    Sgd opt({{"weird", p}}, {0.1, 0.0});
    scale(p, std::nan("")).backward();
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("weird"), NumericError);
    CHECK(p.item() == 1.0);
  }

  TEST_CASE("plateau schedule") {
    PlateauConfig c;
    c.patience = 2;
    PlateauScheduler improving(0.001, c);
    for (double m = 1.0; m > 0.5; m -= 0.1) CHECK(improving.step(m) == 0.001);

    PlateauScheduler flat(0.001, c);
    CHECK(flat.step(1.0) == 0.001);  // establishes the best value
    CHECK(flat.step(1.0) == 0.001);
    CHECK(flat.step(1.0) == 0.001);
    CHECK(flat.step(1.0) == doctest::Approx(0.0001).epsilon(1e-12));

    PlateauScheduler floor(0.001, c);
    double lr = 0.001, prev = lr;
    for (int i = 0; i < 100; ++i) {
      lr = floor.step(1.0);
      CHECK(lr <= prev);
      prev = lr;
    }
    CHECK(lr == 1e-6);

    // Improvements below the relative threshold count as flat.
    PlateauScheduler tiny(0.01, c);
    tiny.step(1.0);
    for (int i = 0; i < 3; ++i) tiny.step(1.0 - 1e-6 * (i + 1));
    CHECK(tiny.lr() == doctest::Approx(0.001).epsilon(1e-12));
  }

  TEST_CASE("binary metrics example") {
    const auto r = compute_metrics(scores_for({1, 1, 0, 0}, 2), 2, {1, 0, 0, 0});
    CHECK(r.acc == doctest::Approx(0.75));
    CHECK(r.precision[1] == doctest::Approx(0.5));
    CHECK(r.recall[1] == doctest::Approx(1.0));
    CHECK(r.f1[1] == doctest::Approx(2.0 / 3.0));
    CHECK(r.precision[0] == doctest::Approx(1.0));
    CHECK(r.recall[0] == doctest::Approx(2.0 / 3.0));
    CHECK(r.f1[0] == doctest::Approx(0.8));
    CHECK(r.macro_f1 == doctest::Approx((0.8 + 2.0 / 3.0) / 2.0));
    CHECK(r.macro_f1 == doctest::Approx(0.7333).epsilon(1e-4));
    CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{2, 1}, {0, 1}});
  }

  TEST_CASE("perfect predictions and tied scores") {
    const std::vector<int> y{0, 1, 2, 1, 0};
    const auto r = compute_metrics(scores_for(y, 3), 3, y);
    CHECK(r.acc == 1.0);
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.macro_auc == 1.0);
    const auto t = compute_metrics(Vec(15, 0.2), 3, y);
    CHECK(t.macro_auc == doctest::Approx(0.5));
  }

  TEST_CASE("AUC against a pairwise oracle") {
    Rng rng(3, "x");
    const std::size_t n = 40, k = 3;
    Vec s(n * k);
    std::vector<int> y(n);
    for (auto& v : s) v = std::round(rng.uniform(0.0, 4.0));  // plenty of ties
    for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, 2));
    double ref = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      double wins = 0.0, pairs = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (y[i] != int(c) || y[j] == int(c)) continue;
          pairs += 1.0;
          const double a = s[i * k + c], b = s[j * k + c];
          wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
        }
      ref += wins / pairs;
    }
    CHECK(macro_auc(s, k, y) == doctest::Approx(ref / double(k)).epsilon(1e-12));
  }

  TEST_CASE("metrics invariants") {
    Rng rng(5, "x");
    const std::size_t n = 30, k = 4;
    Vec s(n * k);
    std::vector<int> y(n);
    for (auto& v : s) v = rng.uniform(0.0, 1.0);
    for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, 3));
    const auto r = compute_metrics(s, k, y);
    std::size_t trace = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t row = 0;
      for (auto v : r.confusion[c]) row += v;
      CHECK(row == r.support[c]);
      trace += r.confusion[c][c];
    }
    CHECK(r.acc == doctest::Approx(double(trace) / double(n)));
    for (double v : {r.acc, r.macro_f1, r.macro_auc}) CHECK((v >= 0.0 && v <= 1.0));

    const auto perm = rng.permutation(n);
    Vec ps(n * k);
    std::vector<int> py(n);
    for (std::size_t i = 0; i < n; ++i) {
      py[i] = y[perm[i]];
      for (std::size_t c = 0; c < k; ++c) ps[i * k + c] = s[perm[i] * k + c];
    }
    const auto p = compute_metrics(ps, k, py);
    CHECK(p.acc == r.acc);
    CHECK(p.macro_f1 == doctest::Approx(r.macro_f1).epsilon(1e-15));
    CHECK(p.macro_auc == doctest::Approx(r.macro_auc).epsilon(1e-15));
  }

  TEST_CASE("single-class AUC is undefined") {
    CHECK_THROWS_AS(macro_auc(Vec{0.1, 0.9, 0.3, 0.7}, 2, {1, 1}), UndefinedMetricError);
    const auto r = compute_metrics(Vec{0.1, 0.9, 0.3, 0.7}, 2, {1, 1});
    CHECK_FALSE(r.auc_defined);
    CHECK(r.f1[0] == 0.0);
  }

  TEST_CASE("epoch log line format") {
    EpochLog e{3, 0.5, 0.25, 0.75, 0.001};
    CHECK(std::regex_match(e.line(), std::regex("epoch=3 train_loss=\\S+ val_loss=\\S+ val_acc=\\S+ lr=\\S+")));
  }

  TEST_CASE("a short training run is deterministic and logs every epoch") {
    const Dataset ds = tiny_data();
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 16;
    cfg.sgd.lr = 0.01;
    std::vector<std::string> lines;
    MailNet a(tiny_net(), 1), b(tiny_net(), 1);
    const auto ra = train(a, ds, cfg, 9, nullptr, nullptr, nullptr, [&](const EpochLog& e) { lines.push_back(e.line()); });
    const auto rb = train(b, ds, cfg, 9);
    CHECK(ra.monitored == Split::Test);
    REQUIRE(ra.log.size() == 2);
    CHECK(lines.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(ra.log[i].line() == rb.log[i].line());
      CHECK(std::isfinite(ra.log[i].train_loss));
    }
    CHECK(ra.final_train_acc == rb.final_train_acc);
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::vector<double>(pa[i].tensor.data().begin(), pa[i].tensor.data().end()) ==
            std::vector<double>(pb[i].tensor.data().begin(), pb[i].tensor.data().end()));
    }
  }

  TEST_CASE("zero-budget sweep reports robust accuracy equal to clean accuracy") {
    const Dataset ds = tiny_data();
    MailNet net(tiny_net(), 2);
    AttackConfig c;
    c.epsilon = 0.0;
    c.iters = 3;
    const auto rows = attack_sweep(net, ds, Split::Test, c, {1, 3}, 10, 5);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(r.robust_acc == r.clean_acc);
    const std::string csv = sweep_csv(rows);
    CHECK(csv.rfind("attack,epsilon,iters,clean_acc,robust_acc,seed\n", 0) == 0);
    CHECK(csv.find("pgd,0.00000000,3,") != std::string::npos);
  }

  TEST_CASE("train config validation") {
    TrainConfig c;
    c.batch = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
