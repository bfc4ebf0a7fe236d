// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Trained models are shared between
// criteria to keep the single-core budget reasonable.
//
// Usage: mail_acceptance <work_dir> [criterion ids...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mail/attention.hpp"
#include "mail/checkpoint.hpp"
#include "mail/errors.hpp"
#include "mail/experiment.hpp"
#include "mail/gradcheck.hpp"
#include "mail/noise.hpp"
#include "mail/ops.hpp"
#include "mail/run_config.hpp"

namespace fs = std::filesystem;
using namespace mail;

namespace {

using Clock = std::chrono::steady_clock;
using Vec = std::vector<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) { std::cout << "    " << s << std::endl; }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ------------------------------------------------------------ brute force

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Vec values(const Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

double max_diff(std::span<const double> a, const Vec& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vec conv_ref(const Vec& x, std::size_t B, std::size_t C, std::size_t H, std::size_t W, const Vec& w, std::size_t N,
             std::size_t k, std::size_t groups, std::size_t stride, std::size_t pad) {
  const std::size_t OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
  const std::size_t cg = C / groups, ng = N / groups;
  Vec y(B * N * OH * OW, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < cg; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long iy = long(oy * stride + i) - long(pad), ix = long(ox * stride + j) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) continue;
                acc += x[((b * C + (n / ng) * cg + c) * H + iy) * W + ix] * w[((n * cg + c) * k + i) * k + j];
              }
          y[((b * N + n) * OH + oy) * OW + ox] = acc;
        }
  return y;
}

Vec pool_ref(const Vec& x, std::size_t planes, std::size_t H, std::size_t W, PoolKind kind, std::size_t win,
             std::size_t stride) {
  const std::size_t OH = (H - win) / stride + 1, OW = (W - win) / stride + 1;
  Vec y;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double acc = kind == PoolKind::Avg ? 0.0 : (kind == PoolKind::Max ? -INFINITY : INFINITY);
        for (std::size_t i = 0; i < win; ++i)
          for (std::size_t j = 0; j < win; ++j) {
            const double v = x[(p * H + oy * stride + i) * W + ox * stride + j];
            if (kind == PoolKind::Avg) acc += v;
            if (kind == PoolKind::Max) acc = std::max(acc, v);
            if (kind == PoolKind::Min) acc = std::min(acc, v);
          }
        y.push_back(kind == PoolKind::Avg ? acc / double(win * win) : acc);
      }
  return y;
}

Vec dct_ref(const Vec& x, std::size_t planes, std::size_t H, std::size_t W) {
  const double pi = std::numbers::pi;
  Vec out(x.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < W; ++v) {
        double acc = 0.0;
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t z = 0; z < W; ++z)
            acc += x[(p * H + y) * W + z] * std::cos(pi * (2.0 * y + 1.0) * u / (2.0 * H)) *
                   std::cos(pi * (2.0 * z + 1.0) * v / (2.0 * W));
        const double au = std::sqrt((u == 0 ? 1.0 : 2.0) / H), av = std::sqrt((v == 0 ? 1.0 : 2.0) / W);
        out[(p * H + u) * W + v] = au * av * acc;
      }
  return out;
}

// ------------------------------------------------------------ experiments

RunConfig base_config(std::uint64_t seed) {
  RunConfig c;
  c.set("seed", std::to_string(seed));
  c.set("train.lr", "0.01");
  return c;
}

struct Trained {
  RunConfig cfg;
  Dataset ds;
  Model model;
  TrainResult result;
  double test_acc = 0.0;
};

Trained train_model(const std::string& tag, RunConfig cfg) {
  const auto t0 = Clock::now();
  Trained t{cfg, load_data(cfg), {}, {}, 0.0};
  t.model = build_model(cfg, t.ds);
  t.result = run_training(cfg, t.model, t.ds, [&](const EpochLog& e) { note(tag + " " + e.line()); });
  const bool stochastic = t.model.net->robust() && cfg.robust().stochastic_inference;
  const Evaluation ev = evaluate(*t.model.net, t.ds, Split::Test, eval_options(*t.model.net, t.model.rt(), stochastic));
  t.test_acc = ev.tasks[0].acc;
  note(fmt("%s test_acc=%.4f (%.0fs)", tag.c_str(), t.test_acc, seconds_since(t0)));
  return t;
}

std::vector<SweepRow> sweep(Trained& t, const AttackConfig& a, const std::vector<std::size_t>& iters,
                            std::size_t samples) {
  return attack_sweep(*t.model.net, t.ds, Split::Test, a, iters, samples, t.cfg.seed(), t.model.rt(),
                      t.cfg.robust().stochastic_inference);
}

constexpr std::size_t kAttackSamples = 100;

// ------------------------------------------------------------- criteria

Outcome criterion1() {
  Rng rng(101, "oracle");
  double worst = 0.0;
  std::map<std::string, int> trials;
  const auto t0 = Clock::now();
  for (int t = 0; t < 300; ++t) {
    // Dense, grouped and depthwise convolutions.
    const int kind = t % 3;
    const std::size_t groups = kind == 0 ? 1 : (kind == 1 ? 2 : 0);
    const std::size_t C = kind == 2 ? std::size_t(rng.uniform_int(1, 5)) : groups * std::size_t(rng.uniform_int(1, 3));
    const std::size_t g = kind == 2 ? C : groups;
    const std::size_t N = g * std::size_t(rng.uniform_int(1, 3));
    const std::size_t k = std::size_t(1 + 2 * rng.uniform_int(0, 2));
    const std::size_t stride = std::size_t(rng.uniform_int(1, 2));
    const std::size_t H = std::size_t(rng.uniform_int(long(k), 9)), W = std::size_t(rng.uniform_int(long(k), 9));
    const std::size_t B = std::size_t(rng.uniform_int(1, 2));
    ConvSpec s;
    s.in_channels = C, s.out_channels = N, s.kernel_h = s.kernel_w = k, s.groups = g, s.stride = stride;
    const Vec x = random_vec(B * C * H * W, rng), w = random_vec(N * (C / g) * k * k, rng);
    const Tensor y = conv2d(Tensor::from({B, C, H, W}, x), Tensor::from({N, C / g, k, k}, w), s);
    worst = std::max(worst, max_diff(y.data(), conv_ref(x, B, C, H, W, w, N, k, g, stride, (k - 1) / 2)));
    trials[kind == 0 ? "conv" : (kind == 1 ? "grouped" : "depthwise")]++;
  }
  for (int t = 0; t < 120; ++t) {
    const std::size_t P = std::size_t(rng.uniform_int(1, 4)), H = std::size_t(rng.uniform_int(2, 9)),
                      W = std::size_t(rng.uniform_int(2, 9));
    const Vec x = random_vec(P * H * W, rng);
    const Tensor X = Tensor::from({1, P, H, W}, x);
    for (PoolKind kind : {PoolKind::Avg, PoolKind::Max, PoolKind::Min}) {
      Vec ref;
      for (std::size_t p = 0; p < P; ++p) {
        const Vec plane(x.begin() + long(p * H * W), x.begin() + long((p + 1) * H * W));
        double acc = kind == PoolKind::Avg ? 0.0 : plane[0];
        for (double v : plane) {
          if (kind == PoolKind::Avg) acc += v;
          if (kind == PoolKind::Max) acc = std::max(acc, v);
          if (kind == PoolKind::Min) acc = std::min(acc, v);
        }
        ref.push_back(kind == PoolKind::Avg ? acc / double(H * W) : acc);
      }
      worst = std::max(worst, max_diff(global_pool(X, kind).data(), ref));
    }
    for (PoolKind kind : {PoolKind::Avg, PoolKind::Max}) {
      worst = std::max(worst, max_diff(local_pool(X, kind).data(), pool_ref(x, P, H, W, kind, 2, 2)));
    }
    trials["global_pool"]++;
    trials["local_pool"]++;
  }
  for (int t = 0; t < 120; ++t) {
    const std::size_t g = std::size_t(rng.uniform_int(1, 4)), C = g * std::size_t(rng.uniform_int(1, 4));
    const std::size_t B = 2, H = 3, W = 2;
    const Vec x = random_vec(B * C * H * W, rng);
    Vec ref(x.size());
    const std::size_t per = C / g;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < per; ++j)
        for (std::size_t i = 0; i < g; ++i)
          for (std::size_t q = 0; q < H * W; ++q)
            ref[(b * C + j * g + i) * H * W + q] = x[(b * C + i * per + j) * H * W + q];
    worst = std::max(worst, max_diff(channel_shuffle(Tensor::from({B, C, H, W}, x), g).data(), ref));
    trials["shuffle"]++;
  }
  for (int t = 0; t < 120; ++t) {
    const std::size_t P = std::size_t(rng.uniform_int(1, 3)), H = std::size_t(rng.uniform_int(1, 8)),
                      W = std::size_t(rng.uniform_int(1, 8));
    const Vec x = random_vec(P * H * W, rng);
    worst = std::max(worst, max_diff(dct2d(Tensor::from({1, P, H, W}, x)).data(), dct_ref(x, P, H, W)));
    trials["dct"]++;
  }
  std::string d = fmt("max |diff| %.3g over", worst);
  bool enough = true;
  for (const auto& [name, n] : trials) {
    d += " " + name + "=" + std::to_string(n);
    enough = enough && n >= 100;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && enough && secs < 60.0, d + fmt(", %.1fs", secs)};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  const auto results = gradcheck_suite(GradcheckOptions{});
  bool all = results.size() == gradcheck_blocks().size();
  std::string d;
  for (const auto& r : results) {
    all = all && r.passed && r.max_rel_error < 1e-4;
    d += fmt("%s=%.1e ", r.block.c_str(), r.max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {all && secs < 300.0, d + fmt("(%.1fs)", secs)};
}

Outcome criterion3() {
  Rng rng(303, "freq");
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t B = 2, C = 3, H = std::size_t(rng.uniform_int(1, 7)), W = std::size_t(rng.uniform_int(1, 7));
    const Vec x = random_vec(B * C * H * W, rng);
    const FreqComponents f = mfifa_decompose(Tensor::from({B, C, H, W}, x), false);
    const std::size_t plane = H * W;
    Vec s1(x.size()), s2(x.size()), a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t p = i / plane;
      s1[i] = f.h1.data()[i] + f.lw1.data()[p];
      s2[i] = f.h2.data()[i] + f.lw2.data()[p];
      a[i] = f.h.data()[i] - f.lw.data()[p];
    }
    worst = std::max({worst, max_diff(s1, x), max_diff(s2, x), max_diff(f.a.data(), a)});
  }
  // Constant c: lw = 2c, h = c, a = -c.
  std::size_t mismatches = 0, checked = 0;
  for (double c : {0.0, 0.3, -1.75, 2.0, 1e-3, 1.0 / 3.0, 0.1}) {
    const FreqComponents f = mfifa_decompose(Tensor::full({2, 3, 3, 4}, c), false);
    for (double v : values(f.lw)) mismatches += v != 2.0 * c, ++checked;
    for (double v : values(f.h)) mismatches += v != c, ++checked;
    for (double v : values(f.a)) mismatches += v != -c, ++checked;
  }
  return {worst <= 1e-12 && mismatches == 0,
          fmt("identity max |diff| %.3g, constant closed forms exact on %zu/%zu entries", worst,
              checked - mismatches, checked)};
}

Outcome criterion4() {
  Rng rng(404, "maps");
  const ForwardContext ctx;
  double lo = 1.0, hi = 0.0;
  std::size_t forwards = 0;
  auto track = [&](const Tensor& t) {
    for (double v : t.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  };
  for (int t = 0; t < 1000; ++t) {
    const std::size_t C = std::size_t(rng.uniform_int(2, 6)), H = std::size_t(rng.uniform_int(4, 6));
    const double scale = rng.uniform(0.1, 3.0);
    auto input = [&] {
      Vec v = random_vec(2 * C * H * H, rng);
      for (double& x : v) x *= scale;
      return Tensor::from({2, C, H, H}, v);
    };
    if (t % 3 == 0) {
      ChannelAttention ca(C, 2, rng);
      track(ca.attention_map(input(), ctx));
    } else if (t % 3 == 1) {
      const FusionParams p = FusionParams::ones(2, C, true, false);
      track(mfifa({input(), input()}, p, t % 2 == 0));
    } else {
      Emcam e(C, 2, EmcamOptions{}, rng, "emcam");
      track(e.attention_map({input(), input()}, ctx));
    }
    ++forwards;
  }
  // Zero scalars give uniform one-half maps.
  bool half = true;
  auto all_half = [&](const Tensor& t) {
    for (double v : t.data()) half = half && v == 0.5;
  };
  for (int t = 0; t < 20; ++t) {
    const Tensor x = Tensor::from({1, 4, 4, 4}, random_vec(64, rng));
    ChannelAttention ca(4, 2, rng);
    for (double& v : ca.theta_x.mutable_data()) v = 0.0;
    all_half(ca.attention_map(x, ctx));
    FusionParams p = FusionParams::ones(2, 4, true, false);
    for (auto* group : {&p.alpha, &p.wp, &p.gamma})
      for (auto& s : *group) s.mutable_data()[0] = 0.0;
    all_half(mfifa({x, x}, p, true));
    Emcam e(4, 2, EmcamOptions{}, rng, "emcam");
    e.params.theta_f.mutable_data()[0] = 0.0;
    e.params.theta_s.mutable_data()[0] = 0.0;
    all_half(e.attention_map({x, x}, ctx));
  }
  const bool open = lo > 0.0 && hi < 1.0;
  return {open && half && forwards == 1000,
          fmt("%zu forwards, min %.3g, 1 - max %.3g, zero-scalar maps %s", forwards, lo, 1.0 - hi, half ? "0.5" : "not 0.5")};
}

Outcome criterion5() {
  bool ok = true;
  std::string d;
  Rng rng(505, "cost");
  {
    ConvSpec s;
    s.kernel_h = s.kernel_w = 3;
    Conv2d c(s, rng);
    ConvSpec one;
    Conv2d unit(one, rng);
    CostRecorder rec;
    ForwardContext ctx;
    ctx.cost = &rec;
    unit.forward(Tensor::full({1, 1, 1, 1}, 1.0), ctx);
    ConvSpec dw;
    dw.in_channels = dw.out_channels = dw.groups = 4;
    dw.kernel_h = dw.kernel_w = 3;
    Conv2d depthwise(dw, rng);
    CostRecorder rec2;
    ctx.cost = &rec2;
    depthwise.forward(Tensor::zeros({1, 4, 5, 5}), ctx);
    Linear fc(3, 2, rng);
    CostRecorder rec3;
    ctx.cost = &rec3;
    fc.forward(Tensor::zeros({1, 3}), ctx);
    const bool toy = c.weight().numel() == 9 && rec.total() == 1 && depthwise.weight().numel() == 36 &&
                     rec2.total() == 4 * 25 * 9 && fc.weight.numel() + fc.bias.numel() == 8 && rec3.total() == 6;
    ok = ok && toy;
    d += std::string("toy counts ") + (toy ? "exact" : "WRONG");
  }
  NetworkConfig full = NetworkConfig::full();
  MailNet on(full, 1);
  const CostReport r = cost_report(on);
  NetworkConfig no_erla = full;
  no_erla.use_erla = false;
  MailNet off(no_erla, 1);
  const double ratio = double(count_params(off).params) / double(r.params);
  NetworkConfig cascade = full;
  cascade.parallel = false;
  MailNet casc(cascade, 1);
  const bool equal = count_params(casc).params == r.params;
  ok = ok && std::abs(ratio - 2.0) <= 0.3 && equal;
  d += fmt("; erla off/on %.3f; cascaded==parallel %s; full preset %.3fM params (%.2f%% vs 11.7M), %.3fG MACs "
           "(%.2f%% vs 1.84G)",
           ratio, equal ? "yes" : "no", r.params / 1e6, 100.0 * (r.params / 11.7e6 - 1.0), r.macs / 1e9,
           100.0 * (r.macs / 1.84e9 - 1.0));
  return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: mail_acceptance <work_dir> [criterion ids...]\n";
    return 2;
  }
  const fs::path work(argv[1]);
  fs::create_directories(work);
  // Passing ctest runs hide stdout, so the verdicts also go to a file.
  std::ofstream verdicts(work / "acceptance_report.txt");
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  std::vector<std::pair<int, Outcome>> outcomes;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.contains(id)) return;
    std::cout << "criterion " << id << ": " << title << std::endl;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = std::string(o.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " (" +
                             title + ") " + o.detail + fmt(" [%.0fs]", seconds_since(t0));
    std::cout << line << std::endl;
    verdicts << line << std::endl;
    outcomes.emplace_back(id, o);
  };

  report(1, "oracle equivalence", criterion1);
  report(2, "gradient suite", criterion2);
  report(3, "frequency identities", criterion3);
  report(4, "attention-map range", criterion4);
  report(5, "cost accounting", criterion5);

  const std::vector<std::uint64_t> seeds{1, 2, 3};

  // 6: the default synthetic task, 30-epoch budget with early stop at the target.
  std::optional<Trained> primary;
  report(6, "desk-scale learning", [&] {
    const auto t0 = Clock::now();
    RunConfig c = base_config(seeds[0]);
    c.set("train.epochs", "30");
    c.set("train.target_acc", "0.95");
    primary.emplace(train_model("mail", c));
    const auto& r = primary->result;
    const double secs = seconds_since(t0);
    return Outcome{primary->test_acc >= 0.95 && r.log.size() <= 30 && secs < 1200.0,
                   fmt("test acc %.4f after %zu epoch(s) on %zu train / %zu test in %.0fs", primary->test_acc,
                       r.log.size(), primary->ds.indices(Split::Train).size(),
                       primary->ds.indices(Split::Test).size(), secs)};
  });

  // 7: equal two-epoch budgets for the full model and each single ablation.
  std::vector<Trained> full_models;
  report(7, "ablation direction", [&] {
    const std::vector<std::pair<std::string, std::string>> variants{
        {"full", ""}, {"no_erla", "model.erla"}, {"no_mfifa", "model.mfifa"}, {"no_emsca", "model.emsca"}};
    std::map<std::string, double> mean;
    for (const auto& [name, key] : variants) {
      for (auto seed : seeds) {
        RunConfig c = base_config(seed);
        c.set("train.epochs", "2");
        if (!key.empty()) c.set(key, "false");
        Trained t = train_model(name + fmt("[seed %llu]", (unsigned long long)seed), c);
        mean[name] += t.test_acc / double(seeds.size());
        if (key.empty()) full_models.push_back(std::move(t));
      }
    }
    bool ok = true;
    std::string d;
    for (const auto& [name, key] : variants) {
      d += fmt("%s=%.4f ", name.c_str(), mean[name]);
      ok = ok && mean["full"] >= mean[name];
    }
    return Outcome{ok, d + "(mean test acc over 3 seeds)"};
  });

  // 8: PGD against the undefended model of criterion 6.
  report(8, "attack effectiveness", [&] {
    if (!primary) return Outcome{false, "no trained model"};
    AttackConfig a = primary->cfg.attack();
    const auto rows = sweep(*primary, a, {10, 20, 50, 100}, kAttackSamples);
    bool monotone = true;
    std::string d;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      d += fmt("k=%zu:%.3f ", rows[i].iters, rows[i].robust_acc);
      if (i > 0) monotone = monotone && rows[i].robust_acc <= rows[i - 1].robust_acc;
    }
    const double drop = rows[0].clean_acc - rows[0].robust_acc;
    AttackConfig zero = a;
    zero.epsilon = 0.0;
    const auto z = sweep(*primary, zero, {10}, kAttackSamples);
    const bool exact = z[0].robust_acc == z[0].clean_acc;
    return Outcome{drop >= 0.30 && monotone && exact,
                   fmt("clean %.3f, PGD-10 drop %.1f points, ", rows[0].clean_acc, 100.0 * drop) + d +
                       (monotone ? "non-increasing" : "INCREASING") + fmt(", eps=0 %.3f vs clean %.3f", z[0].robust_acc,
                                                                           z[0].clean_acc)};
  });

  // 9: adversarially trained Robust-MAIL against the undefended models of criterion 7.
  report(9, "defense direction", [&] {
    if (full_models.size() != seeds.size()) return Outcome{false, "undefended models missing"};
    double gain = 0.0;
    std::string d;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const AttackConfig a = full_models[i].cfg.attack();
      const double plain = sweep(full_models[i], a, {10}, kAttackSamples)[0].robust_acc;
      RunConfig c = base_config(seeds[i]);
      c.set("robust.enabled", "true");
      c.set("train.adversarial", "true");
      c.set("attack.train_iters", "2");
      c.set("train.epochs", "3");
      Trained r = train_model(fmt("robust[seed %llu]", (unsigned long long)seeds[i]), c);
      const auto row = sweep(r, r.cfg.attack(), {10}, kAttackSamples)[0];
      gain += (row.robust_acc - plain) / double(seeds.size());
      d += fmt("seed %llu: mail %.3f robust-mail %.3f (clean %.3f); ", (unsigned long long)seeds[i], plain,
               row.robust_acc, row.clean_acc);
    }
    // Degenerate stochasticity: no random filters, unit noise draws.
    NetworkConfig cfg = NetworkConfig::desk();
    MailNet plain(cfg, 5), robust(cfg, 5);
    RobustOptions o;
    o.rpf = false;
    robust.make_robust(o, 5);
    NoiseSource flat(1, 0.25, NoiseMode::Degenerate);
    ForwardContext ctx;
    ctx.noise = &flat;
    Rng rng(909, "x");
    std::vector<Tensor> xs;
    for (std::size_t m = 0; m < cfg.modalities; ++m) {
      Vec v(2 * cfg.in_channels * cfg.height * cfg.width);
      for (double& x : v) x = rng.uniform(0.0, 1.0);
      xs.push_back(Tensor::from({2, cfg.in_channels, cfg.height, cfg.width}, v));
    }
    const Tensor a = plain.forward(xs, ForwardContext{})[0];
    const Tensor b = robust.forward(xs, ctx)[0];
    const double diff = max_diff(a.data(), Vec(b.data().begin(), b.data().end()));
    return Outcome{gain >= 0.10 && diff <= 1e-12,
                   d + fmt("mean gain %.1f points; degenerate forward max |diff| %.3g", 100.0 * gain, diff)};
  });

  // 10: the whole pipeline twice from the same root seed.
  report(10, "reproducibility", [&] {
    auto run = [&](const std::string& dir) {
      RunConfig c = base_config(77);
      for (const char* kv : {"synth.train=64", "synth.test=32", "synth.size=32", "model.widths=8,16",
                             "model.depths=1,1", "train.epochs=1", "train.batch=16", "robust.enabled=true",
                             "train.adversarial=true", "attack.train_iters=2", "attack.iters=1,3"}) {
        c.assign(kv);
      }
      Trained t = train_model("repro", c);
      const fs::path out = work / dir;
      fs::create_directories(out);
      save_checkpoint(*t.model.net, (out / "model.mck").string());
      std::string metrics;
      const Evaluation ev = evaluate(*t.model.net, t.ds, Split::Test, eval_options(*t.model.net, t.model.rt(), true));
      for (const auto& task : ev.tasks) metrics += format_report(task);
      const std::string csv = sweep_csv(sweep(t, c.attack(), c.attack_iters(), 32));
      const auto bytes = read_file((out / "model.mck").string());
      return std::vector<std::string>{std::string(bytes.begin(), bytes.end()), metrics, csv};
    };
    const auto a = run("repro_a"), b = run("repro_b");
    const char* names[] = {"checkpoint", "metrics", "attack csv"};
    bool ok = true;
    std::string d;
    for (int i = 0; i < 3; ++i) {
      ok = ok && a[i] == b[i];
      d += fmt("%s %s (%zu bytes); ", names[i], a[i] == b[i] ? "identical" : "DIFFER", a[i].size());
    }
    return Outcome{ok, d};
  });

  int failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& [id, o] : outcomes) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << "\n";
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
