// Command-line front end. Talks to the core exclusively through the C API.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bisel/bisel.h"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string mode;
  std::string output_dir;
  std::string seeds;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "Config JSON file");
  cmd->add_option("--set", opts.overrides,
                  "Override a config key, e.g. --set train.epochs=5 (repeatable)");
  cmd->add_option("--mode", opts.mode, "Run mode (overrides config)");
  cmd->add_option("--output-dir", opts.output_dir, "Output directory (overrides config)");
  cmd->add_option("--seeds", opts.seeds, "Seed list as JSON array, e.g. [1,2,3,4]");
}

int fail(bisel_status status) {
  const char* err = bisel_last_error();
  if (err && err[0]) std::fprintf(stderr, "%s\n", err);
  if (status == BISEL_CHECK_FAILED) return 1;
  return 2;
}

// Builds the config from file + flag overrides; flags win.
bisel_status build_config(const CommonOpts& opts, bisel_config** out) {
  bisel_status st = opts.config_path.empty() ? bisel_config_create(out)
                                             : bisel_config_load(opts.config_path.c_str(), out);
  if (st != BISEL_OK) return st;
  auto set = [&](const std::string& key, const std::string& value) {
    if (st == BISEL_OK && !value.empty()) st = bisel_config_set(*out, key.c_str(), value.c_str());
  };
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "--set expects key=value, got '%s'\n", kv.c_str());
      st = BISEL_ERR_INVALID_INPUT;
      break;
    }
    set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  set("mode", opts.mode);
  set("output_dir", opts.output_dir);
  set("seeds", opts.seeds);
  if (st != BISEL_OK && *out) {
    bisel_config_free(*out);
    *out = nullptr;
  }
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bilevel data selection and online self-refining generation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bisel_version());

  CommonOpts gen_opts, train_opts, verify_opts;
  std::string gen_out = "instance.jsonl";
  std::string report_dir;

  CLI::App* gen = app.add_subcommand("gen-instance", "Generate a synthetic instance as JSONL");
  add_common(gen, gen_opts);
  gen->add_option("-o,--out", gen_out, "Output JSONL path");

  CLI::App* train = app.add_subcommand("train", "Run a training experiment");
  add_common(train, train_opts);

  CLI::App* verify = app.add_subcommand("verify", "Run the verification suite");
  add_common(verify, verify_opts);

  CLI::App* report = app.add_subcommand("report", "Summarize a finished run directory");
  report->add_option("dir", report_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    bisel_config* cfg = nullptr;
    bisel_status st = build_config(gen_opts, &cfg);
    if (st == BISEL_OK) st = bisel_gen_instance(cfg, gen_out.c_str());
    bisel_config_free(cfg);
    if (st != BISEL_OK) return fail(st);
    std::printf("wrote %s\n", gen_out.c_str());
    return 0;
  }

  if (train->parsed() || verify->parsed()) {
    CommonOpts& opts = train->parsed() ? train_opts : verify_opts;
    bisel_config* cfg = nullptr;
    bisel_status st = build_config(opts, &cfg);
    if (st == BISEL_OK && verify->parsed()) st = bisel_config_set(cfg, "mode", "verify");
    if (st == BISEL_OK) st = bisel_run(cfg);
    if (st == BISEL_OK && cfg) {
      char* dump = nullptr;
      if (bisel_config_dump(cfg, &dump) == BISEL_OK) {
        std::printf("run complete; config echoed to the output directory\n");
        bisel_string_free(dump);
      }
    }
    bisel_config_free(cfg);
    return st == BISEL_OK ? 0 : fail(st);
  }

  if (report->parsed()) {
    char* text = nullptr;
    const bisel_status st = bisel_report(report_dir.c_str(), &text);
    if (st != BISEL_OK) return fail(st);
    std::printf("%s", text);
    bisel_string_free(text);
    return 0;
  }
  return 0;
}
