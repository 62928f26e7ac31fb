#include "runner.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "checkpoint.hpp"
#include "dataset_io.hpp"
#include "error.hpp"
#include "json.hpp"
#include "verify.hpp"

namespace bisel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       bool online) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "metrics: cannot write '" + path + "'");
  out << "step,epoch,val_loss,sft_loss,w_useless_mean,w_useful_mean,gamma";
  if (online) out << ",gen_match_rate";
  out << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << r.epoch << ',' << fmt(r.val_loss) << ',' << fmt(r.sft_loss) << ','
        << fmt(r.w_useless_mean) << ',' << fmt(r.w_useful_mean) << ',' << fmt(r.gamma);
    if (online) out << ',' << fmt(r.gen_match_rate);
    out << '\n';
  }
}

void write_weight_snapshot(const std::string& path, const WeightState& w, std::int64_t step) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "weights: cannot write '" + path + "'");
  out << "step,index,logit,weight\n";
  for (int i = 0; i < w.size(); ++i) {
    out << step << ',' << i << ',' << fmt(w.logits[i]) << ',' << fmt(w.weights[i]) << '\n';
  }
}

struct LoadedProblem {
  Datasets data;
  BackboneSpec spec;
  CleanRule rule;  // null for external datasets
  SyntheticInstance instance;
  bool is_synthetic = false;
};

LoadedProblem load_problem(const ExperimentConfig& cfg) {
  LoadedProblem p;
  if (!cfg.dataset_path.empty()) {
    p.data = load_dataset(cfg.dataset_path, cfg.instance.vocab);
    p.spec.kind = cfg.instance.kind;
    p.spec.vocab = cfg.instance.vocab;
    p.spec.question_len = cfg.instance.question_len;
    p.spec.max_context = cfg.instance.question_len + cfg.instance.response_len;
    p.spec.hidden = cfg.instance.hidden > 0
                        ? cfg.instance.hidden
                        : (cfg.instance.kind == BackboneKind::Linear ? 2 : 8);
    p.spec.validate();
    return p;
  }
  Rng rng(mix_seed(cfg.instance.seed));
  p.instance = gen_synthetic_instance(cfg.instance, rng);
  p.data = p.instance.data;
  p.spec = p.instance.spec;
  const SyntheticInstance inst = p.instance;
  p.rule = [inst](std::span<const int> x) { return inst.clean_response(x); };
  p.is_synthetic = true;
  return p;
}

json check_to_json(const CheckResult& c) {
  return {{"pass", c.pass}, {"value", c.value}, {"tolerance", c.tolerance}, {"detail", c.detail}};
}

int run_verify(const ExperimentConfig& cfg, const fs::path& dir) {
  const std::vector<CheckResult> checks =
      run_theorem_suite(cfg.instance, cfg.train, cfg.seeds);
  json report = json::object();
  bool all_pass = true;
  for (const auto& c : checks) {
    report[c.name] = check_to_json(c);
    all_pass = all_pass && c.pass;
  }
  std::ofstream out(dir / "report.json");
  if (!out) throw Error(ErrorCode::Io, "verify: cannot write report.json");
  out << report.dump(2) << '\n';
  return all_pass ? 0 : 1;
}

void run_training(const ExperimentConfig& cfg, const fs::path& dir) {
  const LoadedProblem problem = load_problem(cfg);
  if (problem.data.sft.empty()) throw_invalid("run: sft split is empty");
  if (problem.data.val.empty()) throw_invalid("run: val split is empty");

  for (std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    Rng rng(mix_seed(seed));
    const std::string tag = "_seed" + std::to_string(seed);

    TrainResult result;
    bool online = false;
    switch (cfg.mode) {
      case RunMode::OfflineBds:
        result = train_offline(tc, problem.data, problem.spec, OfflineMode::Bds, rng);
        break;
      case RunMode::OfflineMixing:
        result = train_offline(tc, problem.data, problem.spec, OfflineMode::Mixing, rng);
        break;
      case RunMode::BmoStochastic:
        result = train_bmo(tc, problem.data, problem.spec, rng);
        break;
      case RunMode::OnlineStatic:
      case RunMode::OnlineDynamic: {
        online = true;
        const MaskStrategy strategy = cfg.mode == RunMode::OnlineStatic ? MaskStrategy::Static
                                                                        : MaskStrategy::Dynamic;
        RefreshHook hook;
        std::shared_ptr<std::ofstream> buffer_out;
        if (cfg.dump_buffers) {
          buffer_out = std::make_shared<std::ofstream>(dir / ("buffers" + tag + ".jsonl"));
          hook = [buffer_out](const GenerationBuffer& buf) {
            for (const auto& [qi, entries] : buf.per_question) {
              for (std::size_t g = 0; g < entries.size(); ++g) {
                json j{{"question", qi},
                       {"g", g},
                       {"tokens", entries[g].tokens},
                       {"old_logprob", entries[g].old_logprob},
                       {"snapshot_step", buf.snapshot_step}};
                *buffer_out << j.dump() << '\n';
              }
            }
            buffer_out->flush();
          };
        }
        result = train_online(tc, cfg.online, problem.data, problem.spec, strategy, rng,
                              problem.rule, hook);
        break;
      }
      case RunMode::Verify:
        throw Error(ErrorCode::Internal, "verify mode dispatched as training");
    }

    write_metrics_csv((dir / ("metrics" + tag + ".csv")).string(), result.metrics, online);
    if (cfg.dump_weights && result.weights.size() > 0) {
      const std::int64_t final_step =
          result.metrics.empty() ? 0 : result.metrics.back().step;
      write_weight_snapshot((dir / ("weights" + tag + ".csv")).string(), result.weights,
                            final_step);
    }
    const std::string ext = cfg.checkpoint_format == "binary" ? ".bin" : ".json";
    save_checkpoint((dir / ("checkpoint" + tag + ext)).string(), cfg.checkpoint_format,
                    {problem.spec, result.params, result.weights});
  }
}

}  // namespace

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  fs::path out(cfg.output_dir);
  if (out.is_relative()) {
    if (const char* root = std::getenv("BISEL_OUTPUT_ROOT")) out = fs::path(root) / out;
  }
  return out.string();
}

void write_instance(const ExperimentConfig& cfg, const std::string& out_path) {
  Rng rng(mix_seed(cfg.instance.seed));
  const SyntheticInstance inst = gen_synthetic_instance(cfg.instance, rng);
  save_dataset(out_path, inst.data);
}

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome outcome;
  fs::path dir;
  try {
    cfg.validate();
    dir = resolve_output_dir(cfg);
    fs::create_directories(dir);
    std::ofstream eff(dir / "effective_config.json");
    if (!eff) throw Error(ErrorCode::Io, "run: cannot write effective_config.json");
    eff << serialize_config(cfg) << '\n';
    eff.close();

    if (cfg.mode == RunMode::Verify) {
      outcome.exit_code = run_verify(cfg, dir);
    } else {
      run_training(cfg, dir);
      outcome.exit_code = 0;
    }
  } catch (const Error& e) {
    json err{{"error", true},
             {"code", static_cast<int>(e.code())},
             {"message", e.what()},
             {"index", e.index()}};
    outcome.error_json = err.dump();
    outcome.exit_code = 2;
    if (!dir.empty()) {
      std::ofstream out(dir / "error.json");
      if (out) out << outcome.error_json << '\n';
    }
  } catch (const std::exception& e) {
    json err{{"error", true}, {"code", -1}, {"message", e.what()}};
    outcome.error_json = err.dump();
    outcome.exit_code = 2;
  }
  return outcome;
}

std::string report_summary(const std::string& run_dir) {
  const fs::path dir(run_dir);
  if (!fs::exists(dir / "effective_config.json"))
    throw Error(ErrorCode::Io, "report: no effective_config.json under '" + run_dir + "'");
  std::ostringstream out;
  {
    std::ifstream in(dir / "effective_config.json");
    json j;
    in >> j;
    out << "mode: " << j.value("mode", "?") << "\n";
    out << "seeds:";
    for (const auto& s : j.value("seeds", std::vector<std::uint64_t>{})) out << ' ' << s;
    out << "\n";
  }
  if (fs::exists(dir / "report.json")) {
    std::ifstream in(dir / "report.json");
    json j;
    in >> j;
    out << "checks:\n";
    for (const auto& [name, c] : j.items()) {
      out << "  " << (c.value("pass", false) ? "PASS" : "FAIL") << ' ' << name
          << " (value " << c.value("value", 0.0) << ", tolerance " << c.value("tolerance", 0.0)
          << ")\n";
    }
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("metrics", 0) != 0) continue;
    std::ifstream in(entry.path());
    std::string header, line, last;
    std::getline(in, header);
    while (std::getline(in, line)) {
      if (!line.empty()) last = line;
    }
    out << name << ": " << (last.empty() ? "(no rows)" : "final " + last) << "\n";
  }
  return out.str();
}

}  // namespace bisel
