#include "config.hpp"

#include <fstream>
#include <sstream>

#include "error.hpp"
#include "json.hpp"

namespace bisel {

using nlohmann::json;

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::OfflineBds: return "offline-bds";
    case RunMode::OfflineMixing: return "offline-mixing";
    case RunMode::OnlineStatic: return "online-static";
    case RunMode::OnlineDynamic: return "online-dynamic";
    case RunMode::BmoStochastic: return "bmo-stochastic";
    case RunMode::Verify: return "verify";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "offline-bds") return RunMode::OfflineBds;
  if (s == "offline-mixing") return RunMode::OfflineMixing;
  if (s == "online-static") return RunMode::OnlineStatic;
  if (s == "online-dynamic") return RunMode::OnlineDynamic;
  if (s == "bmo-stochastic") return RunMode::BmoStochastic;
  if (s == "verify") return RunMode::Verify;
  throw_config("mode: unknown value '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw_config("seeds: at least one seed required");
  if (output_dir.empty()) throw_config("output_dir: must be nonempty");
  if (checkpoint_format != "json" && checkpoint_format != "binary")
    throw_config("checkpoint_format: must be 'json' or 'binary'");
  train.validate();
  online.validate();
  if (instance.vocab < 2) throw_config("instance.vocab: must be >= 2");
  if (instance.question_len < 1) throw_config("instance.question_len: must be >= 1");
  if (instance.response_len < 1) throw_config("instance.response_len: must be >= 1");
  if (instance.n_sft < 1 || instance.n_val < 1)
    throw_config("instance: n_sft and n_val must be >= 1");
  if (instance.useless_fraction < 0.0 || instance.useless_fraction >= 1.0)
    throw_config("instance.useless_fraction: must lie in [0, 1)");
  if (mode == RunMode::Verify && !dataset_path.empty())
    throw_config("dataset_path: verify mode regenerates its instance; remove dataset_path");
}

namespace {

template <typename T>
T field(const json& j, const std::string& scope, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw_config(scope + key + ": type mismatch");
  }
}

void reject_unknown(const json& j, const std::string& scope,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok |= (key == k);
    if (!ok) throw_config("unknown key '" + scope + key + "'");
    (void)value;
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["dataset_path"] = c.dataset_path;
  j["checkpoint_format"] = c.checkpoint_format;
  j["dump_weights"] = c.dump_weights;
  j["dump_buffers"] = c.dump_buffers;
  j["instance"] = {{"vocab", c.instance.vocab},
                   {"question_len", c.instance.question_len},
                   {"response_len", c.instance.response_len},
                   {"n_sft", c.instance.n_sft},
                   {"n_val", c.instance.n_val},
                   {"n_eval", c.instance.n_eval},
                   {"useless_fraction", c.instance.useless_fraction},
                   {"backbone", to_string(c.instance.kind)},
                   {"corrupt_offset", c.instance.corrupt_offset},
                   {"hidden", c.instance.hidden},
                   {"seed", c.instance.seed}};
  j["train"] = {{"alpha", c.train.alpha},
                {"beta", c.train.beta},
                {"rho0", c.train.rho0},
                {"drho", c.train.drho},
                {"epochs", c.train.epochs},
                {"rho_mix", c.train.rho_mix},
                {"tau", c.train.tau},
                {"eps_w", c.train.eps_w},
                {"eps_sep", c.train.eps_sep},
                {"log_interval", c.train.log_interval},
                {"seed", c.train.seed},
                {"optimizer", c.train.optimizer},
                {"divergence_limit", c.train.divergence_limit}};
  j["online"] = {{"ratio", c.online.ratio},
                 {"group_size", c.online.group_size},
                 {"refresh_every", c.online.refresh_every},
                 {"clip", c.online.clip},
                 {"scale_offline", c.online.scale_offline},
                 {"scale_masked", c.online.scale_masked}};
  j["generation"] = {{"max_tokens", c.online.gen.max_tokens},
                     {"temperature", c.online.gen.temperature},
                     {"seed", c.online.gen.seed}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw_config("config: top level must be a JSON object");
  reject_unknown(j, "", {"mode", "seeds", "output_dir", "dataset_path", "checkpoint_format",
                         "dump_weights", "dump_buffers", "instance", "train", "online",
                         "generation"});
  ExperimentConfig c;
  c.mode = run_mode_from_string(field<std::string>(j, "", "mode", to_string(c.mode)));
  c.seeds = field<std::vector<std::uint64_t>>(j, "", "seeds", c.seeds);
  c.output_dir = field<std::string>(j, "", "output_dir", c.output_dir);
  c.dataset_path = field<std::string>(j, "", "dataset_path", c.dataset_path);
  c.checkpoint_format = field<std::string>(j, "", "checkpoint_format", c.checkpoint_format);
  c.dump_weights = field<bool>(j, "", "dump_weights", c.dump_weights);
  c.dump_buffers = field<bool>(j, "", "dump_buffers", c.dump_buffers);

  if (j.contains("instance")) {
    const json& ji = j.at("instance");
    reject_unknown(ji, "instance.",
                   {"vocab", "question_len", "response_len", "n_sft", "n_val", "n_eval",
                    "useless_fraction", "backbone", "corrupt_offset", "hidden", "seed"});
    c.instance.vocab = field<int>(ji, "instance.", "vocab", c.instance.vocab);
    c.instance.question_len = field<int>(ji, "instance.", "question_len", c.instance.question_len);
    c.instance.response_len = field<int>(ji, "instance.", "response_len", c.instance.response_len);
    c.instance.n_sft = field<int>(ji, "instance.", "n_sft", c.instance.n_sft);
    c.instance.n_val = field<int>(ji, "instance.", "n_val", c.instance.n_val);
    c.instance.n_eval = field<int>(ji, "instance.", "n_eval", c.instance.n_eval);
    c.instance.useless_fraction =
        field<double>(ji, "instance.", "useless_fraction", c.instance.useless_fraction);
    c.instance.kind = backbone_kind_from_string(
        field<std::string>(ji, "instance.", "backbone", to_string(c.instance.kind)));
    c.instance.corrupt_offset =
        field<int>(ji, "instance.", "corrupt_offset", c.instance.corrupt_offset);
    c.instance.hidden = field<int>(ji, "instance.", "hidden", c.instance.hidden);
    c.instance.seed = field<std::uint64_t>(ji, "instance.", "seed", c.instance.seed);
  }
  if (j.contains("train")) {
    const json& jt = j.at("train");
    reject_unknown(jt, "train.",
                   {"alpha", "beta", "rho0", "drho", "epochs", "rho_mix", "tau", "eps_w",
                    "eps_sep", "log_interval", "seed", "optimizer", "divergence_limit"});
    c.train.alpha = field<double>(jt, "train.", "alpha", c.train.alpha);
    c.train.beta = field<double>(jt, "train.", "beta", c.train.beta);
    c.train.rho0 = field<double>(jt, "train.", "rho0", c.train.rho0);
    c.train.drho = field<double>(jt, "train.", "drho", c.train.drho);
    c.train.epochs = field<int>(jt, "train.", "epochs", c.train.epochs);
    c.train.rho_mix = field<double>(jt, "train.", "rho_mix", c.train.rho_mix);
    c.train.tau = field<double>(jt, "train.", "tau", c.train.tau);
    c.train.eps_w = field<double>(jt, "train.", "eps_w", c.train.eps_w);
    c.train.eps_sep = field<double>(jt, "train.", "eps_sep", c.train.eps_sep);
    c.train.log_interval = field<std::int64_t>(jt, "train.", "log_interval", c.train.log_interval);
    c.train.seed = field<std::uint64_t>(jt, "train.", "seed", c.train.seed);
    c.train.optimizer = field<std::string>(jt, "train.", "optimizer", c.train.optimizer);
    c.train.divergence_limit =
        field<double>(jt, "train.", "divergence_limit", c.train.divergence_limit);
  }
  if (j.contains("online")) {
    const json& jo = j.at("online");
    reject_unknown(jo, "online.",
                   {"ratio", "group_size", "refresh_every", "clip", "scale_offline",
                    "scale_masked"});
    c.online.ratio = field<double>(jo, "online.", "ratio", c.online.ratio);
    c.online.group_size = field<int>(jo, "online.", "group_size", c.online.group_size);
    c.online.refresh_every = field<int>(jo, "online.", "refresh_every", c.online.refresh_every);
    c.online.clip = field<double>(jo, "online.", "clip", c.online.clip);
    c.online.scale_offline = field<double>(jo, "online.", "scale_offline", c.online.scale_offline);
    c.online.scale_masked = field<double>(jo, "online.", "scale_masked", c.online.scale_masked);
  }
  if (j.contains("generation")) {
    const json& jg = j.at("generation");
    reject_unknown(jg, "generation.", {"max_tokens", "temperature", "seed"});
    c.online.gen.max_tokens = field<int>(jg, "generation.", "max_tokens", c.online.gen.max_tokens);
    c.online.gen.temperature =
        field<double>(jg, "generation.", "temperature", c.online.gen.temperature);
    c.online.gen.seed = field<std::uint64_t>(jg, "generation.", "seed", c.online.gen.seed);
  }
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::exception& e) {
    throw_config(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2); }

void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  if (dotted_key.empty()) throw_config("override: empty key");
  json j = config_to_json(cfg);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot - start);
    if (part.empty()) throw_config("override: malformed key '" + dotted_key + "'");
    if (!node->contains(part)) throw_config("unknown key '" + dotted_key + "'");
    node = &node->at(part);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings (e.g. mode names) pass through
  }
  *node = parsed;
  cfg = config_from_json(j);
}

}  // namespace bisel
