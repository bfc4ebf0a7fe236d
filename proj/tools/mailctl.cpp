// mailctl: train, evaluate, attack and inspect MAIL networks.
//
// Exit codes: 0 success, 1 numeric or assertion failure, 2 configuration
// error, 3 I/O or format error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mail/checkpoint.hpp"
#include "mail/cost.hpp"
#include "mail/errors.hpp"
#include "mail/experiment.hpp"
#include "mail/gradcheck.hpp"
#include "mail/synth.hpp"

namespace fs = std::filesystem;
using namespace mail;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "mail_out";
  bool adversarial = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

RunConfig resolve(const Options& o, const std::string& command) {
  RunConfig cfg;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw ConfigError("--config: no such file '" + o.config + "'");
    cfg.load(o.config);
  }
  for (const auto& s : o.sets) cfg.assign(s);
  if (o.adversarial) cfg.set("train.adversarial", "true");
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create output directory '" + o.out + "': " + ec.message());
  const std::string echo = cfg.echo();
  write_text(fs::path(o.out) / (command + ".config"), echo);
  std::cout << "# resolved configuration\n" << echo << std::flush;
  return cfg;
}

std::string checkpoint_path(const RunConfig& cfg) {
  const std::string& p = cfg.get("checkpoint.path");
  if (p.empty()) throw ConfigError("checkpoint.path: required by this command");
  if (!fs::exists(p)) throw ConfigError("checkpoint.path: no such file '" + p + "'");
  return p;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = resolve(o, "train");
  const Dataset ds = load_data(cfg);
  Model model = build_model(cfg, ds);
  std::string log;
  const TrainResult r = run_training(cfg, model, ds, [&](const EpochLog& e) {
    std::cout << e.line() << std::endl;
    log += e.line() + "\n";
  });
  const fs::path out(o.out);
  write_text(out / "train_log.txt", log);
  save_checkpoint(*model.net, (out / "model.mck").string());
  std::string summary = "monitored_split " + std::string(split_name(r.monitored)) + "\n";
  summary += "epochs_run " + std::to_string(r.log.size()) + "\n";
  summary += "target_epoch " + (r.target_epoch ? std::to_string(*r.target_epoch) : std::string("none")) + "\n";
  // Full precision so eval on the training split can be compared exactly.
  char buf[96];
  std::snprintf(buf, sizeof buf, "final_val_acc %.17g\nfinal_train_acc %.17g\n", r.log.back().val_acc,
                r.final_train_acc);
  summary += buf;
  write_text(out / "train_summary.txt", summary);
  std::cout << summary;
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve(o, "eval");
  const Dataset ds = load_data(cfg);
  Model model = build_model(cfg, ds);
  load_checkpoint(*model.net, checkpoint_path(cfg));
  const Split split = cfg.get_split("eval.split");
  const bool stochastic = model.net->robust() && cfg.robust().stochastic_inference;
  const std::size_t repeats = stochastic ? std::max<std::uint64_t>(1, cfg.get_uint("eval.repeats")) : 1;

  std::string report;
  for (std::size_t run = 0; run < repeats; ++run) {
    if (stochastic) model.net->resample(Phase::Inference, model.runtime->resample_rng);
    const Evaluation ev = evaluate(*model.net, ds, split, eval_options(*model.net, model.rt(), stochastic));
    report += "run " + std::to_string(run + 1) + " split " + split_name(split) + " loss " +
              std::to_string(ev.loss) + "\n";
    for (std::size_t t = 0; t < ev.tasks.size(); ++t) {
      report += "task " + std::to_string(t) + "\n" + format_report(ev.tasks[t]);
    }
  }
  if (stochastic && repeats >= 2) {
    report += "label_agreement " + std::to_string(prediction_agreement(*model.net, ds, split, *model.runtime)) + "\n";
  }
  write_text(fs::path(o.out) / "metrics.txt", report);
  std::cout << report;
  return 0;
}

int cmd_attack(const Options& o) {
  const RunConfig cfg = resolve(o, "attack");
  const Dataset ds = load_data(cfg);
  Model model = build_model(cfg, ds);
  load_checkpoint(*model.net, checkpoint_path(cfg));
  const auto rows = attack_sweep(*model.net, ds, cfg.get_split("attack.split"), cfg.attack(), cfg.attack_iters(),
                                 cfg.get_uint("attack.samples"), cfg.seed(), model.rt(),
                                 cfg.robust().stochastic_inference);
  const std::string csv = sweep_csv(rows);
  write_text(fs::path(o.out) / "attack.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_cost(const Options& o) {
  const RunConfig cfg = resolve(o, "cost");
  CostReport report;
  std::ostringstream os;
  if (cfg.get_bool("cost.toy")) {
    ConvSpec spec;
    spec.kernel_h = spec.kernel_w = 3;
    Rng rng(cfg.seed(), "init");
    Conv2d conv(spec, rng);
    CostRecorder rec;
    {
      CostScope scope(&rec, "toy.conv");
      ForwardContext ctx;
      ctx.cost = &rec;
      NoGradGuard guard;
      const std::size_t side = cfg.get_uint("synth.size");
      conv.forward(Tensor::zeros({1, 1, side, side}), ctx);
    }
    report.add("toy.conv", conv.weight().numel(), rec.total());
  } else {
    MailNet net(cfg.network(), cfg.seed());
    report = cost_report(net);
  }
  report.print(os);
  if (cfg.get("model.preset") == "full" && !cfg.get_bool("cost.toy")) {
    constexpr double ref_params = 11.7e6, ref_macs = 1.84e9;
    os << "reference params 11.7M, deviation " << 100.0 * (static_cast<double>(report.params) / ref_params - 1.0)
       << "%\n";
    os << "reference MACs 1.84G, deviation " << 100.0 * (static_cast<double>(report.macs) / ref_macs - 1.0) << "%\n";
  }
  write_text(fs::path(o.out) / "cost.txt", os.str());
  std::cout << os.str();
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const RunConfig cfg = resolve(o, "gradcheck");
  GradcheckOptions go;
  go.seed = cfg.seed();
  go.tolerance = cfg.get_real("gradcheck.tolerance");
  go.corrupt = cfg.get("gradcheck.corrupt");
  std::string report;
  bool ok = true;
  for (const auto& r : gradcheck_suite(go)) {
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %-6s max_rel_error=%.3e entries=%zu\n", r.passed ? "PASS" : "FAIL",
                  r.block.c_str(), r.max_rel_error, r.entries);
    report += line;
    ok = ok && r.passed;
  }
  write_text(fs::path(o.out) / "gradcheck.txt", report);
  std::cout << report;
  return ok ? 0 : 1;
}

int cmd_synth(const Options& o) {
  const RunConfig cfg = resolve(o, "synth");
  const Dataset ds = synth_generate(cfg.seed(), cfg.synth());
  const fs::path out(o.out);
  save_dataset(ds, (out / "synth.mic").string());
  write_manifest(ds, (out / "synth.manifest").string());
  std::cout << "wrote " << ds.size() << " samples to " << (out / "synth.mic").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAIL multimodal attention network toolkit"};
  app.require_subcommand(1);
  Options opts;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const std::vector<Command> commands = {
      {"train", "train a model and write a checkpoint plus epoch log", cmd_train},
      {"eval", "evaluate a checkpoint and write a metrics report", cmd_eval},
      {"attack", "run an attack sweep and write a robust-accuracy CSV", cmd_attack},
      {"cost", "report parameters and multiply-accumulates per block", cmd_cost},
      {"gradcheck", "finite-difference check of every block", cmd_gradcheck},
      {"synth", "write the synthetic task as a MIC1 container", cmd_synth},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opts.config, "key = value configuration file");
    sub->add_option("--set", opts.sets, "override, key=value (repeatable)");
    sub->add_option("--out", opts.out, "output directory")->capture_default_str();
    if (std::string(c.name) == "train") sub->add_flag("--adversarial", opts.adversarial, "adversarial training");
    sub->callback([&chosen, run = c.run] { chosen = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    return chosen(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
