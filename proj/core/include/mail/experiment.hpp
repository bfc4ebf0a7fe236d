#pragma once

// Glue that turns a RunConfig into data, a model and its random streams.
// Shared by the command-line tool and the end-to-end tests.

#include <memory>
#include <optional>

#include "mail/dataset.hpp"
#include "mail/network.hpp"
#include "mail/robust.hpp"
#include "mail/run_config.hpp"
#include "mail/trainer.hpp"

namespace mail {

/// The configured container, or the synthetic task when data.path is empty.
/// A missing file is a configuration error.
Dataset load_data(const RunConfig& cfg);

struct Model {
  std::unique_ptr<MailNet> net;
  std::optional<RobustRuntime> runtime;  // present for robust models

  RobustRuntime* rt() { return runtime ? &*runtime : nullptr; }
};

/// Builds the network for the dataset and, when robust.enabled is set,
/// installs the random projection filters and noise sites.
Model build_model(const RunConfig& cfg, const Dataset& ds);

/// Trains per cfg; adversarial training uses attack.train_iters steps.
TrainResult run_training(const RunConfig& cfg, Model& model, const Dataset& ds,
                         const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace mail
