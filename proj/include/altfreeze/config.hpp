#pragma once

#include <string>
#include <vector>

#include "altfreeze/model.hpp"
#include "altfreeze/synth.hpp"
#include "altfreeze/trainer.hpp"

namespace altfreeze {

struct RunConfig {
  TrainConfig train;
  DatasetSpec data;
  ModelSpec model = ModelSpec::reference();

  /// Throws std::invalid_argument naming the first invalid setting.
  void validate() const;
};

/// Parses key=value lines; '#' starts a comment. Unknown keys and malformed
/// lines are errors that name the line number. Missing keys keep defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Every key with its effective value, one "key=value" per entry, in a
/// stable order. parse_config(join(lines)) reproduces the config.
std::vector<std::string> config_lines(const RunConfig& config);
std::string config_text(const RunConfig& config);

/// Model-only subset of the keys, used inside checkpoints.
std::vector<std::string> model_lines(const ModelSpec& spec);
ModelSpec parse_model(const std::string& text);

/// "I_s:I_t", e.g. "20:1".
std::pair<std::size_t, std::size_t> parse_ratio(const std::string& text);

}  // namespace altfreeze
