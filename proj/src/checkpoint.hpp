#ifndef BISEL_CHECKPOINT_HPP
#define BISEL_CHECKPOINT_HPP

#include <string>

#include "backbone.hpp"
#include "weights.hpp"

namespace bisel {

struct Checkpoint {
  BackboneSpec spec;
  Params params;
  WeightState weights;
};

// Versioned checkpoint, either JSON or raw little-endian binary. The format is
// detected on load.
void save_checkpoint(const std::string& path, const std::string& format, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bisel

#endif
