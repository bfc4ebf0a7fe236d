#include "mail/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "mail/checkpoint.hpp"
#include "mail/errors.hpp"

namespace mail {

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", ValueKind::Uint, "7", "root seed for every random stream"},
      {"data.path", ValueKind::Text, "", "MIC1 container; empty generates the synthetic task"},
      {"data.modality_synthesis", ValueKind::Text, "none", "none | identity | blur for single-modality data"},
      {"checkpoint.path", ValueKind::Text, "", "checkpoint read by eval and attack"},
      {"synth.train", ValueKind::Uint, "2000", "synthetic training samples"},
      {"synth.val", ValueKind::Uint, "0", "synthetic validation samples"},
      {"synth.test", ValueKind::Uint, "500", "synthetic test samples"},
      {"synth.classes", ValueKind::Uint, "4", "synthetic classes"},
      {"synth.size", ValueKind::Uint, "64", "synthetic image side"},
      {"synth.modalities", ValueKind::Uint, "2", "synthetic modalities"},
      {"synth.channels", ValueKind::Uint, "3", "synthetic channels per modality"},
      {"synth.amplitude", ValueKind::Real, "0.1", "grating amplitude"},
      {"synth.noise", ValueKind::Real, "0.1", "pixel noise stddev"},
      {"model.preset", ValueKind::Text, "desk", "desk | full"},
      {"model.widths", ValueKind::UintList, "", "stage channels; empty keeps the preset"},
      {"model.depths", ValueKind::UintList, "", "blocks per stage; empty keeps the preset"},
      {"model.erla", ValueKind::Bool, "true", "ERLA blocks (false: plain residual blocks)"},
      {"model.mfifa", ValueKind::Bool, "true", "frequency attention in EMCAM"},
      {"model.emsca", ValueKind::Bool, "true", "spatial attention in EMCAM"},
      {"model.parallel", ValueKind::Bool, "true", "parallel (true) or cascaded EMCAM"},
      {"model.dct", ValueKind::Bool, "true", "DCT before the frequency decomposition"},
      {"model.expansion", ValueKind::Uint, "2", "MSGDC width multiplier"},
      {"model.restore_groups", ValueKind::Uint, "2", "groups of the restoring pointwise conv"},
      {"model.ca_reduction", ValueKind::Uint, "4", "channel attention reduction"},
      {"model.stem_pool", ValueKind::Bool, "false", "2x2 max pool after the stem"},
      {"train.epochs", ValueKind::Uint, "30", "epoch budget"},
      {"train.batch", ValueKind::Uint, "32", "batch size"},
      {"train.lr", ValueKind::Real, "0.001", "initial learning rate"},
      {"train.momentum", ValueKind::Real, "0.9", "SGD momentum"},
      {"train.target_acc", ValueKind::Real, "0", "stop once monitored accuracy reaches this; 0 disables"},
      {"train.adversarial", ValueKind::Bool, "false", "adversarial training with the attack.* settings"},
      {"train.augment", ValueKind::Bool, "false", "rotation / translation / blur augmentation"},
      {"train.plateau_factor", ValueKind::Real, "0.1", "plateau lr factor"},
      {"train.plateau_patience", ValueKind::Uint, "10", "plateau patience in epochs"},
      {"train.plateau_threshold", ValueKind::Real, "1e-4", "relative improvement threshold"},
      {"train.min_lr", ValueKind::Real, "1e-6", "learning-rate floor"},
      {"augment.rotation_deg", ValueKind::Real, "20", "maximum rotation"},
      {"augment.translation_px", ValueKind::Uint, "5", "maximum shift per axis"},
      {"augment.blur_sigma", ValueKind::Real, "0.8", "blur kernel sigma"},
      {"robust.enabled", ValueKind::Bool, "false", "random projection filters and attention noise"},
      {"robust.rpf_fraction", ValueKind::Real, "0.5", "share of MSGDC filters made random"},
      {"robust.rpf_sigma", ValueKind::Text, "auto", "RPF stddev; auto is 1/sqrt(fan_in)"},
      {"robust.man_std", ValueKind::Real, "0.25", "attention noise stddev around 1"},
      {"robust.weight_decay", ValueKind::Real, "1e-4", "norm penalty on trainable RPF rows and noise weights"},
      {"robust.stochastic_inference", ValueKind::Bool, "true", "draw attention noise at evaluation"},
      {"attack.family", ValueKind::Text, "pgd", "fgsm | pgd | bim | mim"},
      {"attack.epsilon", ValueKind::Real, "4/255", "L-infinity budget"},
      {"attack.step", ValueKind::Real, "10/255", "step size"},
      {"attack.iters", ValueKind::UintList, "10", "iteration counts to report (ascending)"},
      {"attack.train_iters", ValueKind::Uint, "10", "iterations used during adversarial training"},
      {"attack.momentum", ValueKind::Real, "1.0", "mim decay"},
      {"attack.random_init", ValueKind::Text, "auto", "auto | true | false"},
      {"attack.keep_first_success", ValueKind::Bool, "true", "keep the first misclassified iterate per sample"},
      {"attack.samples", ValueKind::Uint, "500", "samples attacked; 0 means the whole split"},
      {"attack.split", ValueKind::Text, "test", "train | val | test"},
      {"eval.split", ValueKind::Text, "test", "train | val | test"},
      {"eval.repeats", ValueKind::Uint, "2", "inference passes for robust models"},
      {"gradcheck.corrupt", ValueKind::Text, "", "block whose analytic gradient is deliberately scaled"},
      {"gradcheck.tolerance", ValueKind::Real, "1e-4", "maximum relative error"},
      {"cost.toy", ValueKind::Bool, "false", "report a single 1->1 3x3 convolution"},
  };
  return schema;
}

namespace {

const ConfigKey& lookup(const std::string& key) {
  for (const auto& k : config_schema()) {
    if (key == k.key) return k;
  }
  throw ConfigError(key + ": unknown configuration key");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(parse_uint(key, trim(item))));
  return out;
}

void check_value(const ConfigKey& k, const std::string& v) {
  switch (k.kind) {
    case ValueKind::Bool: parse_bool(k.key, v); break;
    case ValueKind::Uint: parse_uint(k.key, v); break;
    case ValueKind::Real: parse_real(k.key, v); break;
    case ValueKind::UintList: parse_list(k.key, v); break;
    case ValueKind::Text: break;
  }
}

Split parse_split(const std::string& key, const std::string& v) {
  if (v == "train") return Split::Train;
  if (v == "val") return Split::Val;
  if (v == "test") return Split::Test;
  throw ConfigError(key + ": expected train, val or test, got '" + v + "'");
}

}  // namespace

double parse_real(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  auto number = [&](const std::string& s) {
    double out = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (s.empty() || ec != std::errc() || ptr != end || !std::isfinite(out)) {
      throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
    return out;
  };
  const auto slash = v.find('/');
  if (slash == std::string::npos) return number(v);
  const double den = number(trim(v.substr(slash + 1)));
  if (den == 0.0) throw ConfigError(key + ": division by zero in '" + text + "'");
  return number(trim(v.substr(0, slash))) / den;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) values_[k.key] = k.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey& k = lookup(key);
  const std::string v = trim(value);
  check_value(k, v);
  values_[key] = v;
}

void RunConfig::assign(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key in " + origin);
    set(key, line.substr(eq + 1));
  }
}

void RunConfig::load(const std::string& path) {
  const auto bytes = read_file(path);
  parse(std::string(bytes.begin(), bytes.end()), path);
}

const std::string& RunConfig::get(const std::string& key) const {
  lookup(key);
  return values_.at(key);
}

bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, get(key)); }
std::uint64_t RunConfig::get_uint(const std::string& key) const { return parse_uint(key, get(key)); }
double RunConfig::get_real(const std::string& key) const { return parse_real(key, get(key)); }
std::vector<std::size_t> RunConfig::get_list(const std::string& key) const { return parse_list(key, get(key)); }

Split RunConfig::get_split(const std::string& key) const { return parse_split(key, get(key)); }

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& k : config_schema()) out += std::string(k.key) + " = " + values_.at(k.key) + "\n";
  return out;
}

SynthConfig RunConfig::synth() const {
  SynthConfig c;
  c.train = get_uint("synth.train");
  c.val = get_uint("synth.val");
  c.test = get_uint("synth.test");
  c.classes = get_uint("synth.classes");
  c.size = get_uint("synth.size");
  c.modalities = get_uint("synth.modalities");
  c.channels = get_uint("synth.channels");
  c.amplitude = get_real("synth.amplitude");
  c.noise = get_real("synth.noise");
  return c;
}

NetworkConfig RunConfig::network() const {
  const std::string& preset = get("model.preset");
  const NetworkConfig base = preset == "full" ? NetworkConfig::full() : NetworkConfig::desk();
  const SynthConfig s = synth();
  Dataset shape_only;
  shape_only.shapes.assign(s.modalities, ModalityShape{static_cast<std::uint32_t>(base.in_channels),
                                                       static_cast<std::uint32_t>(base.height),
                                                       static_cast<std::uint32_t>(base.width)});
  shape_only.task_classes = {static_cast<std::uint32_t>(s.classes)};
  return network(shape_only);
}

NetworkConfig RunConfig::network(const Dataset& ds) const {
  const std::string& preset = get("model.preset");
  NetworkConfig c;
  if (preset == "desk") {
    c = NetworkConfig::desk();
  } else if (preset == "full") {
    c = NetworkConfig::full();
  } else {
    throw ConfigError("model.preset: expected desk or full, got '" + preset + "'");
  }
  if (ds.shapes.empty()) throw ConfigError("data: dataset declares no modalities");
  for (const auto& s : ds.shapes) {
    if (!(s == ds.shapes[0])) throw ConfigError("data: every modality must share one shape");
  }
  c.modalities = ds.shapes.size();
  c.in_channels = ds.shapes[0].channels;
  c.height = ds.shapes[0].height;
  c.width = ds.shapes[0].width;
  c.tasks.clear();
  for (std::size_t t = 0; t < ds.task_classes.size(); ++t) {
    c.tasks.push_back({"task" + std::to_string(t), ds.task_classes[t]});
  }
  if (auto w = get_list("model.widths"); !w.empty()) c.stage_channels = w;
  if (auto d = get_list("model.depths"); !d.empty()) c.stage_depths = d;
  c.use_erla = get_bool("model.erla");
  c.use_mfifa = get_bool("model.mfifa");
  c.use_emsca = get_bool("model.emsca");
  c.parallel = get_bool("model.parallel");
  c.use_dct = get_bool("model.dct");
  c.stem_pool = get_bool("model.stem_pool");
  c.block.expansion = get_uint("model.expansion");
  c.block.restore_groups = get_uint("model.restore_groups");
  c.block.ca_reduction = get_uint("model.ca_reduction");
  c.validate();
  return c;
}

TrainConfig RunConfig::train() const {
  TrainConfig c;
  c.epochs = get_uint("train.epochs");
  c.batch = get_uint("train.batch");
  c.sgd.lr = get_real("train.lr");
  c.sgd.momentum = get_real("train.momentum");
  c.target_acc = get_real("train.target_acc");
  c.adversarial = get_bool("train.adversarial");
  c.augment = get_bool("train.augment");
  c.plateau.factor = get_real("train.plateau_factor");
  c.plateau.patience = get_uint("train.plateau_patience");
  c.plateau.threshold = get_real("train.plateau_threshold");
  c.plateau.min_lr = get_real("train.min_lr");
  c.augment_spec.rotation_deg = get_real("augment.rotation_deg");
  c.augment_spec.translation_px = static_cast<int>(get_uint("augment.translation_px"));
  c.augment_spec.blur_sigma = get_real("augment.blur_sigma");
  c.validate();
  return c;
}

RobustConfig RunConfig::robust() const {
  RobustConfig c;
  c.blocks.rpf_fraction = get_real("robust.rpf_fraction");
  if (const std::string& s = get("robust.rpf_sigma"); s != "auto") c.blocks.rpf_sigma = parse_real("robust.rpf_sigma", s);
  c.man_std = get_real("robust.man_std");
  c.weight_decay = get_real("robust.weight_decay");
  c.stochastic_inference = get_bool("robust.stochastic_inference");
  c.validate();
  return c;
}

AttackConfig RunConfig::attack() const {
  AttackConfig c;
  c.family = parse_attack_family(get("attack.family"));
  c.epsilon = get_real("attack.epsilon");
  c.step = get_real("attack.step");
  const auto iters = attack_iters();
  if (iters.empty()) throw ConfigError("attack.iters: at least one iteration count required");
  for (std::size_t i = 1; i < iters.size(); ++i) {
    if (iters[i] <= iters[i - 1]) throw ConfigError("attack.iters: counts must be strictly ascending");
  }
  c.iters = iters.back();
  c.momentum = get_real("attack.momentum");
  if (const std::string& r = get("attack.random_init"); r != "auto") c.random_init = parse_bool("attack.random_init", r);
  c.keep_first_success = get_bool("attack.keep_first_success");
  parse_split("attack.split", get("attack.split"));
  return c.normalized();
}

}  // namespace mail
