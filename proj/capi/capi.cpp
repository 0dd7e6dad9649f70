#include "clusdiff/clusdiff.h"

#include <exception>
#include <new>
#include <string>

#include "config.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"

struct clusdiff_config {
  clusdiff::KeyValues kv;
};

struct clusdiff_report {
  clusdiff::StageReport rep;
};

namespace {

thread_local std::string g_last_error;

clusdiff_status status_of(clusdiff::ErrorKind kind) {
  using clusdiff::ErrorKind;
  switch (kind) {
    case ErrorKind::Config: return CLUSDIFF_E_CONFIG;
    case ErrorKind::Io: return CLUSDIFF_E_IO;
    case ErrorKind::MissingInput: return CLUSDIFF_E_MISSING_INPUT;
    case ErrorKind::Numeric: return CLUSDIFF_E_NUMERIC;
    default: return CLUSDIFF_E_INVALID;  // shape, data, vocabulary, state, range
  }
}

/// Every entry point funnels through here so exceptions never cross the
/// C boundary.
template <typename Fn>
clusdiff_status guarded(Fn&& fn) {
  try {
    fn();
    return CLUSDIFF_OK;
  } catch (const clusdiff::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CLUSDIFF_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CLUSDIFF_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return CLUSDIFF_E_INTERNAL;
  }
}

clusdiff_status bad_argument(const char* what) {
  g_last_error = what;
  return CLUSDIFF_E_INVALID;
}

}  // namespace

extern "C" {

const char* clusdiff_version(void) { return "0.1.0"; }

const char* clusdiff_status_name(clusdiff_status status) {
  switch (status) {
    case CLUSDIFF_OK: return "ok";
    case CLUSDIFF_E_CONFIG: return "config";
    case CLUSDIFF_E_IO: return "io";
    case CLUSDIFF_E_MISSING_INPUT: return "missing-input";
    case CLUSDIFF_E_NUMERIC: return "numeric";
    case CLUSDIFF_E_INVALID: return "invalid";
    case CLUSDIFF_E_INTERNAL: return "internal";
  }
  return "unknown";
}

int clusdiff_exit_code(clusdiff_status status) {
  if (status == CLUSDIFF_OK) return 0;
  if (status == CLUSDIFF_E_NUMERIC || status == CLUSDIFF_E_INTERNAL) return 1;
  return 2;
}

const char* clusdiff_last_error(void) { return g_last_error.c_str(); }

void clusdiff_set_threads(int n) { clusdiff::set_thread_override(n < 0 ? 0 : n); }

clusdiff_status clusdiff_config_parse_file(const char* path, clusdiff_config** out) {
  if (!path || !out) return bad_argument("parse_file needs a path and an out pointer");
  *out = nullptr;
  return guarded([&] {
    auto* cfg = new clusdiff_config{clusdiff::KeyValues::parse_file(path)};
    *out = cfg;
  });
}

clusdiff_status clusdiff_config_parse_text(const char* text, clusdiff_config** out) {
  if (!text || !out) return bad_argument("parse_text needs text and an out pointer");
  *out = nullptr;
  return guarded([&] {
    auto* cfg = new clusdiff_config{clusdiff::KeyValues::parse_text(text)};
    *out = cfg;
  });
}

clusdiff_status clusdiff_config_set(clusdiff_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return bad_argument("config_set needs a config, key, and value");
  return guarded([&] { cfg->kv.set(key, value); });
}

const char* clusdiff_config_get(const clusdiff_config* cfg, const char* key) {
  if (!cfg || !key || !cfg->kv.has(key)) return nullptr;
  for (const auto& [k, v] : cfg->kv.items())
    if (k == key) return v.c_str();
  return nullptr;
}

void clusdiff_config_free(clusdiff_config* cfg) { delete cfg; }

clusdiff_status clusdiff_run_stage(const char* stage, const clusdiff_config* cfg,
                                   const char* out_dir, int force, int has_seed,
                                   unsigned long long seed, clusdiff_report** out_report) {
  if (!stage || !cfg || !out_dir)
    return bad_argument("run_stage needs a stage name, config, and output directory");
  if (out_report) *out_report = nullptr;
  return guarded([&] {
    clusdiff::StageRequest req;
    req.config = cfg->kv;
    req.out_dir = out_dir;
    req.force = force != 0;
    req.has_seed_override = has_seed != 0;
    req.seed_override = seed;
    clusdiff::StageReport rep = clusdiff::run_stage(stage, req);
    if (out_report) *out_report = new clusdiff_report{std::move(rep)};
  });
}

const char* clusdiff_report_stage(const clusdiff_report* rep) {
  return rep ? rep->rep.stage.c_str() : nullptr;
}

unsigned long long clusdiff_report_seed(const clusdiff_report* rep) {
  return rep ? rep->rep.seed : 0;
}

unsigned int clusdiff_report_config_checksum(const clusdiff_report* rep) {
  return rep ? rep->rep.config_checksum : 0;
}

double clusdiff_report_wall_seconds(const clusdiff_report* rep) {
  return rep ? rep->rep.wall_seconds : 0.0;
}

size_t clusdiff_report_metric_count(const clusdiff_report* rep) {
  return rep ? rep->rep.metrics.size() : 0;
}

const char* clusdiff_report_metric_key(const clusdiff_report* rep, size_t i) {
  if (!rep || i >= rep->rep.metrics.size()) return nullptr;
  return rep->rep.metrics[i].first.c_str();
}

const char* clusdiff_report_metric_value(const clusdiff_report* rep, size_t i) {
  if (!rep || i >= rep->rep.metrics.size()) return nullptr;
  return rep->rep.metrics[i].second.c_str();
}

void clusdiff_report_free(clusdiff_report* rep) { delete rep; }

}  // extern "C"
