#include <sstream>

#include "doctest.h"
#include "mail/errors.hpp"
#include "mail/run_config.hpp"

using namespace mail;

TEST_SUITE("run_config") {
  TEST_CASE("defaults cover every schema key") {
    RunConfig c;
    for (const auto& k : config_schema()) CHECK(c.get(k.key) == k.fallback);
    CHECK(c.seed() == 7);
    CHECK(c.get_real("attack.epsilon") == doctest::Approx(4.0 / 255.0));
    CHECK(c.get_real("train.lr") == 0.001);
    CHECK(c.get_uint("train.plateau_patience") == 10);
    CHECK(c.get_real("train.min_lr") == 1e-6);
  }

  TEST_CASE("parse handles comments, blanks and whitespace") {
    RunConfig c;
    c.parse("# header\n\n  seed = 11   # trailing\ntrain.epochs=3\nattack.iters = 1, 5 ,10\n");
    CHECK(c.seed() == 11);
    CHECK(c.train().epochs == 3);
    CHECK(c.attack_iters() == std::vector<std::size_t>{1, 5, 10});
    CHECK(c.attack().iters == 10);
  }

  TEST_CASE("malformed input names the key") {
    RunConfig c;
    CHECK_THROWS_WITH_AS(c.parse("no_such.key = 1\n"), doctest::Contains("no_such.key"), ConfigError);
    CHECK_THROWS_WITH_AS(c.parse("seed = 1\nseed = 2\n"), doctest::Contains("seed"), ConfigError);
    CHECK_THROWS_AS(c.parse("just text\n"), ConfigError);
    CHECK_THROWS_WITH_AS(c.set("train.epochs", "x"), doctest::Contains("train.epochs"), ConfigError);
    CHECK_THROWS_AS(c.set("train.adversarial", "maybe"), ConfigError);
    CHECK_THROWS_AS(c.parse("attack.epsilon = lots\n"), ConfigError);
    CHECK_THROWS_AS(c.assign("seed"), ConfigError);
  }

  TEST_CASE("real values accept fractions") {
    CHECK(parse_real("k", "4/255") == doctest::Approx(4.0 / 255.0).epsilon(1e-15));
    CHECK(parse_real("k", "0.25") == 0.25);
    CHECK(parse_real("k", "1e-3") == 0.001);
    CHECK_THROWS_AS(parse_real("k", "1/0"), ConfigError);
    CHECK_THROWS_AS(parse_real("k", "abc"), ConfigError);
  }

  TEST_CASE("attack iteration lists must ascend") {
    RunConfig c;
    c.set("attack.iters", "5,2");
    CHECK_THROWS_AS(c.attack(), ConfigError);
    c.set("attack.family", "fgsm");
    c.set("attack.iters", "1");
    CHECK(c.attack().iters == 1);
    c.set("attack.family", "nope");
    CHECK_THROWS_AS(c.attack(), ConfigError);
  }

  TEST_CASE("echo lists resolved values in schema order") {
    RunConfig c;
    c.assign("train.lr=0.01");
    const std::string e = c.echo();
    CHECK(e.find("train.lr = 0.01") != std::string::npos);
    std::size_t pos = 0;
    for (const auto& k : config_schema()) {
      const auto at = e.find(std::string(k.key) + " = ", pos);
      REQUIRE(at != std::string::npos);
      pos = at;
    }
  }

  TEST_CASE("network follows the dataset") {
    RunConfig c;
    c.set("synth.size", "32");
    c.set("synth.channels", "1");
    c.set("synth.modalities", "3");
    c.set("synth.classes", "5");
    c.set("synth.train", "10");
    c.set("synth.test", "5");
    c.set("model.widths", "4,8");
    c.set("model.depths", "1,1");
    const Dataset ds = synth_generate(1, c.synth());
    const NetworkConfig n = c.network(ds);
    CHECK(n.modalities == 3);
    CHECK(n.in_channels == 1);
    CHECK(n.height == 32);
    CHECK(n.tasks.size() == 1);
    CHECK(n.tasks[0].classes == 5);
    CHECK(n.stage_channels == std::vector<std::size_t>{4, 8});

    c.set("model.depths", "1");
    CHECK_THROWS_AS(c.network(ds), ConfigError);
  }

  TEST_CASE("robust and train sections") {
    RunConfig c;
    c.set("robust.rpf_fraction", "0.25");
    c.set("robust.rpf_sigma", "0.1");
    c.set("train.target_acc", "0.9");
    const auto r = c.robust();
    CHECK(r.blocks.rpf_fraction == 0.25);
    REQUIRE(r.blocks.rpf_sigma.has_value());
    CHECK(*r.blocks.rpf_sigma == 0.1);
    CHECK(c.train().target_acc == 0.9);
    RunConfig d;
    CHECK_FALSE(d.robust().blocks.rpf_sigma.has_value());
    d.set("robust.rpf_fraction", "2");
    CHECK_THROWS_AS(d.robust(), ConfigError);
  }
}
