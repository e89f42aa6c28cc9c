#pragma once

#include <cstddef>
#include <string>

#include "trinet/model.hpp"
#include "trinet/optimizer.hpp"

namespace trinet {

/// Complete training state at one step: all three branches, the student
/// optimizer's moments, and the resolved config text the run started from.
struct Checkpoint {
  std::string config_text;
  std::size_t step = 0;
  BranchSet branches;
  AdamState optimizer_state;
};

/// Binary format: magic "TRCK", u32 version, config echo, step, the three
/// parameter maps (shapes, gradient-tracking flags, little-endian f64 values),
/// then the Adam moments; exact layout documented in the repo. Round trips are
/// lossless, so a resumed run reproduces the unbroken loss sequence.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace trinet
