#include "bisel/bisel.h"

#include <cstring>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "json.hpp"
#include "runner.hpp"

struct bisel_config {
  bisel::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

bisel_status map_code(bisel::ErrorCode code) {
  using bisel::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidInput: return BISEL_ERR_INVALID_INPUT;
    case ErrorCode::InvalidConfig: return BISEL_ERR_INVALID_CONFIG;
    case ErrorCode::Io: return BISEL_ERR_IO;
    case ErrorCode::Diverged: return BISEL_ERR_DIVERGED;
    case ErrorCode::RatioOverflow: return BISEL_ERR_RATIO_OVERFLOW;
    case ErrorCode::ResourceLimit: return BISEL_ERR_RESOURCE_LIMIT;
    case ErrorCode::Internal: return BISEL_ERR_INTERNAL;
  }
  return BISEL_ERR_INTERNAL;
}

void set_error(bisel_status status, const std::string& message, long long index = -1) {
  nlohmann::json j{{"error", true},
                   {"status", static_cast<int>(status)},
                   {"message", message},
                   {"index", index}};
  g_last_error = j.dump();
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
bisel_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const bisel::Error& e) {
    const bisel_status s = map_code(e.code());
    set_error(s, e.what(), e.index());
    return s;
  } catch (const std::exception& e) {
    set_error(BISEL_ERR_INTERNAL, e.what());
    return BISEL_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* bisel_version(void) { return "0.1.0"; }

bisel_status bisel_config_create(bisel_config** out) {
  return guarded([&]() {
    *out = new bisel_config{};
    return BISEL_OK;
  });
}

bisel_status bisel_config_parse(const char* json_text, bisel_config** out) {
  return guarded([&]() {
    if (!json_text || !out) bisel::throw_invalid("bisel_config_parse: null argument");
    auto cfg = bisel::parse_config_text(json_text);
    *out = new bisel_config{std::move(cfg)};
    return BISEL_OK;
  });
}

bisel_status bisel_config_load(const char* path, bisel_config** out) {
  return guarded([&]() {
    if (!path || !out) bisel::throw_invalid("bisel_config_load: null argument");
    auto cfg = bisel::parse_config_file(path);
    *out = new bisel_config{std::move(cfg)};
    return BISEL_OK;
  });
}

bisel_status bisel_config_set(bisel_config* cfg, const char* dotted_key, const char* value) {
  return guarded([&]() {
    if (!cfg || !dotted_key || !value) bisel::throw_invalid("bisel_config_set: null argument");
    bisel::apply_override(cfg->cfg, dotted_key, value);
    return BISEL_OK;
  });
}

bisel_status bisel_config_dump(const bisel_config* cfg, char** out_json) {
  return guarded([&]() {
    if (!cfg || !out_json) bisel::throw_invalid("bisel_config_dump: null argument");
    *out_json = dup_string(bisel::serialize_config(cfg->cfg));
    return BISEL_OK;
  });
}

void bisel_config_free(bisel_config* cfg) { delete cfg; }

bisel_status bisel_gen_instance(const bisel_config* cfg, const char* out_path) {
  return guarded([&]() {
    if (!cfg || !out_path) bisel::throw_invalid("bisel_gen_instance: null argument");
    bisel::write_instance(cfg->cfg, out_path);
    return BISEL_OK;
  });
}

bisel_status bisel_run(const bisel_config* cfg) {
  return guarded([&]() {
    if (!cfg) bisel::throw_invalid("bisel_run: null argument");
    const bisel::RunOutcome outcome = bisel::run_experiment(cfg->cfg);
    if (outcome.exit_code == 0) return BISEL_OK;
    if (outcome.exit_code == 1) {
      set_error(BISEL_CHECK_FAILED, "one or more verification checks failed");
      return BISEL_CHECK_FAILED;
    }
    g_last_error = outcome.error_json;
    nlohmann::json j = nlohmann::json::parse(outcome.error_json, nullptr, false);
    const int code = j.is_object() ? j.value("code", -1) : -1;
    if (code >= 0) return map_code(static_cast<bisel::ErrorCode>(code));
    return BISEL_ERR_INTERNAL;
  });
}

bisel_status bisel_report(const char* run_dir, char** out_text) {
  return guarded([&]() {
    if (!run_dir || !out_text) bisel::throw_invalid("bisel_report: null argument");
    *out_text = dup_string(bisel::report_summary(run_dir));
    return BISEL_OK;
  });
}

const char* bisel_last_error(void) { return g_last_error.c_str(); }

void bisel_string_free(char* s) { delete[] s; }

}  // extern "C"
