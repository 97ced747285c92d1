#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kbref/model.hpp"

namespace kbref {

// Checkpoint = KBRF container of every parameter tensor plus a JSON manifest
// at "<path>.json" holding the entry table (name -> shape -> offset), the
// model config, the vocabulary and the effective run config for provenance.
void save_checkpoint(const std::string& path, const GroundingModel& model,
                     const std::vector<std::pair<std::string, std::string>>& config_echo);

GroundingModel load_checkpoint(const std::string& path);

}  // namespace kbref
