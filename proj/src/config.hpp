#ifndef BISEL_CONFIG_HPP
#define BISEL_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "instance.hpp"
#include "offline.hpp"
#include "online.hpp"

namespace bisel {

enum class RunMode {
  OfflineBds,
  OfflineMixing,
  OnlineStatic,
  OnlineDynamic,
  BmoStochastic,
  Verify,
};

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);

// Fully-defaulted experiment document. Every field has a documented default;
// unknown keys are rejected at parse time.
struct ExperimentConfig {
  RunMode mode = RunMode::OfflineBds;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::string output_dir = "out";
  std::string dataset_path;                // empty = generate the instance below
  std::string checkpoint_format = "json";  // "json" or "binary"
  bool dump_weights = true;
  bool dump_buffers = false;
  InstanceParams instance;
  TrainConfig train;
  OnlineConfig online;

  void validate() const;
};

ExperimentConfig parse_config_text(const std::string& json_text);
ExperimentConfig parse_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Sets one dotted key ("train.epochs", "online.gen.temperature", "mode") from
// its textual value; the result is revalidated.
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

}  // namespace bisel

#endif
