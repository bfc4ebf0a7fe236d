#include "mail/experiment.hpp"

#include <filesystem>

#include "mail/augment.hpp"
#include "mail/errors.hpp"
#include "mail/synth.hpp"

namespace mail {

Dataset load_data(const RunConfig& cfg) {
  const std::string& path = cfg.get("data.path");
  Dataset ds;
  if (path.empty()) {
    ds = synth_generate(cfg.seed(), cfg.synth());
  } else {
    if (!std::filesystem::exists(path)) throw ConfigError("data.path: no such file '" + path + "'");
    ds = load_dataset(path);
  }
  const std::string& mode = cfg.get("data.modality_synthesis");
  if (mode != "none") {
    const ModalityMode m = parse_modality_mode(mode);
    if (ds.modalities() == 1) ds = add_synthetic_modality(ds, m);
  }
  return ds;
}

Model build_model(const RunConfig& cfg, const Dataset& ds) {
  Model m;
  m.net = std::make_unique<MailNet>(cfg.network(ds), cfg.seed());
  const RobustConfig rc = cfg.robust();
  if (cfg.robust_enabled()) m.net->make_robust(rc.blocks, cfg.seed());
  if (cfg.robust_enabled() || cfg.get_bool("train.adversarial")) m.runtime.emplace(cfg.seed(), rc.man_std);
  return m;
}

TrainResult run_training(const RunConfig& cfg, Model& model, const Dataset& ds,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  const TrainConfig tc = cfg.train();
  const RobustConfig rc = cfg.robust();
  AttackConfig ac = cfg.attack();
  if (ac.family != AttackFamily::Fgsm) ac.iters = cfg.get_uint("attack.train_iters");
  ac.keep_first_success = false;
  ac = ac.normalized();
  return train(*model.net, ds, tc, cfg.seed(), model.rt(), &rc, &ac, on_epoch);
}

}  // namespace mail
