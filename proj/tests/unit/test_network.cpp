#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mail/checkpoint.hpp"
#include "mail/errors.hpp"
#include "mail/network.hpp"
#include "mail/ops.hpp"
#include "oracles.hpp"

using namespace mail;
using oracle::max_abs_diff;
using oracle::random_tensor;
using oracle::values;

namespace {

using U = std::uint64_t;

NetworkConfig tiny(std::size_t modalities = 2) {
  NetworkConfig c;
  c.modalities = modalities;
  c.in_channels = 3;
  c.height = c.width = 32;
  c.stage_channels = {4, 8};
  c.stage_depths = {1, 2};
  c.tasks = {{"a", 3}, {"b", 2}};
  return c;
}

// Closed-form parameter counts written from the block definitions.
U conv(U in, U out, U k, U groups) { return out * (in / groups) * k * k; }
U msgdc(U c, U t, U g) { return conv(c, t * c, 1, g) + conv(c, t * c, 3, c) + conv(c, t * c, 5, c); }
U ca(U ch, U r) {
  const U h = std::max<U>(1, ch / r);
  return ch * h + h + h * ch + ch + ch;
}
U emila(U c, const BlockOptions& o) {
  const U t = o.expansion;
  return msgdc(c, t, o.gpc_groups) + ca(t * c, o.ca_reduction) + conv(t * c, c, 1, o.restore_groups);
}
U erla(U in, U out, U stride, const BlockOptions& o) {
  const U skip = (stride != 1 || in != out) ? in * out : 0;
  return 2 * emila(in, o) + 2 * in + in * out + 2 * out + skip;
}
U basic(U in, U out, U stride) {
  const U skip = (stride != 1 || in != out) ? in * out : 0;
  return 9 * in * out + 9 * out * out + 4 * out + skip;
}
U emcam(U c, U m, const NetworkConfig& cfg) {
  U n = m * c;
  if (cfg.use_mfifa) n += 3 * m + 1;
  if (cfg.use_emsca) n += m + m * msgdc(c, 1, 1) + 1;
  return n;
}
U expected_params(const NetworkConfig& cfg) {
  U per_branch = conv(cfg.in_channels, cfg.stage_channels[0], 7, 1) + 2 * cfg.stage_channels[0];
  U in = cfg.stage_channels[0];
  U fusion = 0;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    const U out = cfg.stage_channels[s];
    for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
      const U stride = (b == 0 && s > 0) ? 2 : 1;
      per_branch += cfg.use_erla ? erla(in, out, stride, cfg.block) : basic(in, out, stride);
      in = out;
    }
    if (cfg.use_mfifa || cfg.use_emsca) fusion += emcam(out, cfg.modalities, cfg);
  }
  U heads = 0;
  for (const auto& t : cfg.tasks) heads += in * t.classes + t.classes;
  return cfg.modalities * per_branch + fusion + heads;
}

std::vector<Tensor> inputs(const NetworkConfig& cfg, std::size_t batch, Rng& rng) {
  std::vector<Tensor> xs;
  for (std::size_t i = 0; i < cfg.modalities; ++i) {
    xs.push_back(random_tensor({batch, cfg.in_channels, cfg.height, cfg.width}, rng));
  }
  return xs;
}

U stem_macs(const CostReport& r) {
  U n = 0;
  for (const auto& e : r.per_block) {
    if (e.block.find("stem") != std::string::npos) n += e.macs;
  }
  return n;
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("single-modality forward yields [1, K] logits") {
    NetworkConfig cfg = NetworkConfig::desk();
    cfg.modalities = 1;
    cfg.tasks = {{"t", 2}};
    MailNet net(cfg, 3);
    Rng rng(1, "x");
    auto logits = net.forward(inputs(cfg, 1, rng), ForwardContext{});
    REQUIRE(logits.size() == 1);
    CHECK(logits[0].shape() == Shape{1, 2});
  }

  TEST_CASE("logits are finite and sized per task") {
    auto cfg = tiny(3);
    MailNet net(cfg, 5);
    Rng rng(2, "x");
    auto logits = net.forward(inputs(cfg, 4, rng), ForwardContext{});
    REQUIRE(logits.size() == 2);
    CHECK(logits[0].shape() == Shape{4, 3});
    CHECK(logits[1].shape() == Shape{4, 2});
    for (const auto& l : logits) {
      for (double v : l.data()) CHECK(std::isfinite(v));
    }
  }

  TEST_CASE("every stage keeps identical shapes across modalities") {
    auto cfg = tiny(3);
    MailNet net(cfg, 5);
    Rng rng(4, "x");
    std::vector<std::vector<Tensor>> stages;
    net.forward(inputs(cfg, 2, rng), ForwardContext{}, &stages);
    REQUIRE(stages.size() == 2);
    CHECK(stages[0][0].shape() == Shape{2, 4, 16, 16});
    CHECK(stages[1][0].shape() == Shape{2, 8, 8, 8});
    for (const auto& s : stages) {
      for (const auto& t : s) CHECK(t.shape() == s[0].shape());
    }
  }

  TEST_CASE("symmetric init with identical inputs gives identical branch features") {
    auto cfg = tiny(2);
    cfg.symmetric_init = true;
    MailNet net(cfg, 8);
    Rng rng(5, "x");
    const Tensor x = random_tensor({2, 3, 32, 32}, rng);
    std::vector<std::vector<Tensor>> stages;
    net.forward({x, x}, ForwardContext{}, &stages);
    for (const auto& s : stages) CHECK(values(s[0]) == values(s[1]));
  }

  TEST_CASE("forward equals the chained stage calls with an explicit head") {
    auto cfg = tiny(2);
    MailNet net(cfg, 9);
    Rng rng(6, "x");
    const auto xs = inputs(cfg, 3, rng);
    const ForwardContext ctx;
    const auto logits = net.forward(xs, ctx);

    auto ys = net.forward_stem(xs, ctx);
    for (std::size_t s = 0; s < net.stage_count(); ++s) ys = net.forward_stage(s, ys, ctx);
    const std::size_t B = 3, C = ys[0].dim(1), P = ys[0].dim(2) * ys[0].dim(3);
    std::vector<double> pooled(B * C, 0.0);
    for (const auto& y : ys) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < P; ++p) pooled[b * C + c] += y.data()[(b * C + c) * P + p] / double(P);
    }
    for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
      const auto& head = net.heads[t];
      const std::size_t K = cfg.tasks[t].classes;
      std::vector<double> ref(B * K);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
          double acc = head.bias.data()[k];
          for (std::size_t c = 0; c < C; ++c) acc += head.weight.data()[k * C + c] * pooled[b * C + c];
          ref[b * K + k] = acc;
        }
      CHECK(max_abs_diff(values(logits[t]), ref) < 1e-12);
    }
  }

  TEST_CASE("wrong modality count is a contract violation") {
    auto cfg = tiny(2);
    MailNet net(cfg, 1);
    Rng rng(1, "x");
    auto xs = inputs(cfg, 1, rng);
    xs.pop_back();
    CHECK_THROWS_AS(net.forward(xs, ForwardContext{}), ContractError);
  }

  TEST_CASE("config validation names the offending field") {
    auto cfg = tiny();
    cfg.stage_depths = {1};
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("stage_depths"), ConfigError);
    cfg = tiny();
    cfg.tasks = {{"x", 1}};
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("tasks"), ConfigError);
    cfg = tiny();
    cfg.height = cfg.width = 8;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("input_size"), ConfigError);
  }

  TEST_CASE("parameter count matches the closed-form count") {
    for (int variant = 0; variant < 5; ++variant) {
      auto cfg = tiny(variant == 4 ? 3 : 2);
      if (variant == 1) cfg.use_erla = false;
      if (variant == 2) cfg.use_mfifa = false;
      if (variant == 3) cfg.use_emsca = false;
      if (variant == 4) cfg.parallel = false;
      MailNet net(cfg, 2);
      const CostReport r = count_params(net);
      CAPTURE(variant);
      CHECK(r.params == expected_params(cfg));
      U walk = 0;
      for (const auto& p : net.parameters()) walk += p.tensor.numel();
      CHECK(r.params == walk);
      U breakdown = 0;
      for (const auto& e : r.per_block) breakdown += e.params;
      CHECK(r.params == breakdown);
    }
  }

  TEST_CASE("cascaded and parallel fusion carry the same parameters") {
    auto a = tiny(2), b = tiny(2);
    b.parallel = false;
    MailNet na(a, 1), nb(b, 1);
    CHECK(count_params(na).params == count_params(nb).params);
  }

  TEST_CASE("ERLA stages are lighter than plain residual stages at equal widths") {
    auto a = NetworkConfig::full(), b = NetworkConfig::full();
    b.use_erla = false;
    CHECK(expected_params(a) < expected_params(b));
    // Depthwise and attention overhead dominate below about 32 channels.
    auto t = tiny(2), p = tiny(2);
    t.stage_channels = p.stage_channels = {64, 128};
    p.use_erla = false;
    MailNet nt(t, 1), np(p, 1);
    CHECK(count_params(nt).params < count_params(np).params);
  }

  TEST_CASE("toy cost examples") {
    Rng rng(1, "x");
    ConvSpec s;
    s.kernel_h = s.kernel_w = 3;
    Conv2d c3(s, rng);
    CHECK(c3.weight().numel() == 9);

    ConvSpec one;
    Conv2d c1(one, rng);
    CostRecorder rec;
    ForwardContext ctx;
    ctx.cost = &rec;
    c1.forward(Tensor::full({1, 1, 1, 1}, 1.0), ctx);
    CHECK(rec.total() == 1);
  }

  TEST_CASE("MAC accounting: exact stem and head charges, quadratic stem scaling") {
    auto cfg = tiny(2);
    MailNet net(cfg, 3);
    const CostReport r = count_flops(net);
    CHECK(stem_macs(r) == 2 * U(16 * 16) * 4 * 3 * 49);
    U head = 0;
    for (const auto& e : r.per_block) {
      if (e.block.find("head") != std::string::npos) head += e.macs;
    }
    CHECK(head == 8 * 3 + 8 * 2);
    U breakdown = 0;
    for (const auto& e : r.per_block) breakdown += e.macs;
    CHECK(breakdown == r.macs);

    auto big = cfg;
    big.height = big.width = 64;
    MailNet nb(big, 3);
    const CostReport rb = count_flops(nb);
    CHECK(stem_macs(rb) == 4 * stem_macs(r));
    CHECK(rb.macs > r.macs);
    CHECK(count_params(nb).params == count_params(net).params);
  }

  TEST_CASE("TMTL loss examples") {
    using Rows = std::vector<std::vector<Tensor>>;
    using Fused = std::vector<Tensor>;
    using Labels = std::vector<std::vector<int>>;
    using Lambda = std::vector<std::vector<double>>;
    const Tensor uniform = Tensor::zeros({2, 4});
    // One logits tensor per task stands for both modalities: 2 * ln 4.
    CHECK(tmtl_loss(Fused{uniform}, Labels{{0, 3}}, Lambda{{1.0, 1.0}}).item() ==
          doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
    CHECK(tmtl_loss(Rows{{uniform}}, Labels{{1, 2}}, Lambda{{1.0}}).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(tmtl_loss(Rows{{uniform, uniform}}, Labels{{1, 2}}, Lambda{{0.0, 0.0}}).item() == 0.0);

    const Tensor sure = Tensor::from({1, 3}, {50.0, 0.0, 0.0});
    CHECK(tmtl_loss(Rows{{sure}}, Labels{{0}}, Lambda{{1.0}}).item() < 1e-3);

    // Two tasks, weighted: 0.5 * ln 4 + 2 * ln 2.
    const Tensor two = Tensor::zeros({1, 2});
    const Tensor one4 = Tensor::zeros({1, 4});
    const double v = tmtl_loss(Rows{{one4}, {two}}, Labels{{0}, {1}}, Lambda{{0.5}, {2.0}}).item();
    CHECK(v == doctest::Approx(0.5 * std::log(4.0) + 2.0 * std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(tmtl_loss(Rows{{uniform}}, Labels{{0, 4}}, Lambda{{1.0}}), DataError);
    CHECK_THROWS_AS(tmtl_loss(Rows{{uniform}}, Labels{{0, 1}}, Lambda{{-1.0}}), ConfigError);
    CHECK_THROWS_AS(tmtl_loss(Rows{{uniform}}, Labels{{0, 1}}, Lambda{{1.0}, {1.0}}), ContractError);
  }

  TEST_CASE("TMTL gradient flows only through weighted terms") {
    Tensor a = Tensor::zeros({1, 2}, true), b = Tensor::zeros({1, 2}, true);
    tmtl_loss(std::vector<std::vector<Tensor>>{{a, b}}, std::vector<std::vector<int>>{{0}},
              std::vector<std::vector<double>>{{1.0, 0.0}})
        .backward();
    CHECK(a.grad()[0] == doctest::Approx(-0.5));
    CHECK(a.grad()[1] == doctest::Approx(0.5));
    if (b.has_grad()) {
      for (double g : b.grad()) CHECK(g == 0.0);
    }
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    auto cfg = tiny(2);
    MailNet a(cfg, 11), b(cfg, 12);
    const auto bytes = encode_checkpoint(snapshot(a));
    restore(b, decode_checkpoint(bytes));
    CHECK(encode_checkpoint(snapshot(b)) == bytes);
    Rng rng(3, "x");
    const auto xs = inputs(cfg, 2, rng);
    const auto la = a.forward(xs, ForwardContext{}), lb = b.forward(xs, ForwardContext{});
    for (std::size_t t = 0; t < la.size(); ++t) CHECK(values(la[t]) == values(lb[t]));
  }

  TEST_CASE("checkpoint decoding rejects damaged input") {
    auto cfg = tiny(2);
    MailNet a(cfg, 11);
    auto bytes = encode_checkpoint(snapshot(a));

    auto bad = bytes;
    bad[0] = 'X';
    try {
      decode_checkpoint(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(cut), FormatError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(extra), FormatError);

    auto other = tiny(2);
    other.stage_channels = {4, 12};
    MailNet c(other, 1);
    CHECK_THROWS_AS(restore(c, decode_checkpoint(bytes)), StateError);
  }
}
