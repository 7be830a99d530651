// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace zsq {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    ZSQ_CHECK(pos == v.size(), "config: bad number for " + key + ": " + v);
    return d;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config: bad number for " + key + ": " + v);
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::int64_t i = std::stoll(v, &pos);
    ZSQ_CHECK(pos == v.size(), "config: bad integer for " + key + ": " + v);
    return i;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config: bad integer for " + key + ": " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t i = std::stoull(v, &pos);
    ZSQ_CHECK(pos == v.size(), "config: bad integer for " + key + ": " + v);
    return i;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config: bad integer for " + key + ": " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config: bad boolean for " + key + ": " + v);
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    ZSQ_CHECK(!item.empty(), "config: empty list element in " + key);
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  ZSQ_CHECK(!out.empty(), "config: empty list for " + key);
  return out;
}

void validate(const ExperimentConfig& c) {
  ZSQ_CHECK(c.dataset.classes >= 2, "config: dataset.classes must be >= 2");
  ZSQ_CHECK(c.dataset.dim >= 1, "config: dataset.dim must be >= 1");
  ZSQ_CHECK(c.dataset.train_per_class >= 1 && c.dataset.val_per_class >= 1,
            "config: per-class counts must be >= 1");
  ZSQ_CHECK(c.dataset.sigma > 0.0, "config: dataset.sigma must be > 0");
  for (int h : c.hidden) ZSQ_CHECK(h >= 1, "config: model widths must be >= 1");
  ZSQ_CHECK(c.w_bits >= 2 && c.w_bits <= 16, "config: quant.w_bits out of [2,16]");
  ZSQ_CHECK(c.a_bits >= 2 && c.a_bits <= 16, "config: quant.a_bits out of [2,16]");
  ZSQ_CHECK(c.loss.alpha >= 0.0 && c.loss.alpha <= 1.0, "config: loss.alpha out of [0,1]");
  ZSQ_CHECK(c.loss.delta >= 0.0 && c.loss.delta <= 1.0, "config: loss.delta out of [0,1]");
  ZSQ_CHECK(c.loss.smoothing >= 0.0 && c.loss.smoothing < 1.0,
            "config: loss.label_smoothing out of [0,1)");
  ZSQ_CHECK(c.loss.temperature > 0.0, "config: loss.temperature must be > 0");
  ZSQ_CHECK(c.opt.lr >= 0.0, "config: opt.lr must be >= 0");
  ZSQ_CHECK(c.opt.momentum >= 0.0 && c.opt.momentum < 1.0, "config: opt.momentum out of [0,1)");
  ZSQ_CHECK(c.gen.lr >= 0.0, "config: gen.lr must be >= 0");
  ZSQ_CHECK(c.gen.warmup_epochs >= 0, "config: gen.warmup_epochs must be >= 0");
  ZSQ_CHECK(c.gi.rho0 >= 0.0 && c.gi.rho0 <= 1.0, "config: gi.rho0 out of [0,1]");
  ZSQ_CHECK(c.gi.decay_factor > 0.0 && c.gi.decay_factor <= 1.0,
            "config: gi.decay_factor out of (0,1]");
  ZSQ_CHECK(c.gi.decay_interval >= 1, "config: gi.decay_interval must be >= 1");
  ZSQ_CHECK(c.gi.warmup_epochs >= 0, "config: gi.warmup_epochs must be >= 0");
  ZSQ_CHECK(c.gi.kappa_cap_warmup >= 1.0, "config: gi.kappa_cap_warmup must be >= 1");
  ZSQ_CHECK(c.gi.search_budget >= 0, "config: gi.search_budget must be >= 0");
  ZSQ_CHECK(c.gi.doubling_cap >= 1 && c.gi.doubling_cap <= 62,
            "config: gi.doubling_cap out of [1,62]");
  ZSQ_CHECK(c.train.epochs >= 1, "config: train.epochs must be >= 1");
  ZSQ_CHECK(c.train.batch >= 1, "config: train.batch must be >= 1");
  ZSQ_CHECK(c.train.steps_per_epoch >= 0, "config: train.steps_per_epoch must be >= 0");
  ZSQ_CHECK(c.train.teacher_epochs >= 1, "config: train.teacher_epochs must be >= 1");
  ZSQ_CHECK(c.train.teacher_lr > 0.0, "config: train.teacher_lr must be > 0");
  ZSQ_CHECK(c.diag.hessian_every >= 0, "config: diag.hessian_every must be >= 0");
  ZSQ_CHECK(c.diag.hessian_probes >= 1, "config: diag.hessian_probes must be >= 1");
  ZSQ_CHECK(c.diag.probe_batch >= 2, "config: diag.probe_batch must be >= 2");
  ZSQ_CHECK(c.diag.lanczos_m >= 1, "config: diag.lanczos_m must be >= 1");
  ZSQ_CHECK(c.diag.slice_points >= 3, "config: diag.slice_points must be >= 3");
  const auto arms = known_arms();
  ZSQ_CHECK(std::find(arms.begin(), arms.end(), c.arm) != arms.end(),
            "config: unknown arm " + c.arm);
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

std::vector<std::string> known_arms() {
  return {"baseline", "kl_only", "ait",            "baseline_gi",
          "ce_only_gi", "kl_only_high_lr", "kd"};
}

void apply_arm(ExperimentConfig& cfg) {
  const std::string& arm = cfg.arm;
  if (arm == "baseline") {
    cfg.gi.enabled = false;
  } else if (arm == "kl_only") {
    cfg.loss.delta = 1.0;
    cfg.gi.enabled = false;
  } else if (arm == "ait") {
    cfg.loss.delta = 1.0;
    cfg.gi.enabled = true;
  } else if (arm == "baseline_gi") {
    cfg.gi.enabled = true;
  } else if (arm == "ce_only_gi") {
    cfg.loss.delta = 0.0;
    cfg.gi.enabled = true;
  } else if (arm == "kl_only_high_lr") {
    cfg.loss.delta = 1.0;
    cfg.gi.enabled = false;
    cfg.opt.lr *= 100.0;
  } else if (arm == "kd") {
    cfg.gi.enabled = false;
  } else {
    fail("unknown arm " + arm);
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    ZSQ_CHECK(eq != std::string::npos,
              "config: line " + std::to_string(lineno) + " is not key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    ZSQ_CHECK(!key.empty(), "config: empty key at line " + std::to_string(lineno));
    ZSQ_CHECK(kv.find(key) == kv.end(), "config: duplicate key " + key);
    kv[key] = value;
  }

  ExperimentConfig c = default_config();
  for (const auto& [key, v] : kv) {
    if (key == "dataset.kind") c.dataset.kind = dataset_kind_from_string(v);
    else if (key == "dataset.classes") c.dataset.classes = static_cast<int>(parse_int(key, v));
    else if (key == "dataset.dim") c.dataset.dim = static_cast<int>(parse_int(key, v));
    else if (key == "dataset.train_per_class")
      c.dataset.train_per_class = static_cast<int>(parse_int(key, v));
    else if (key == "dataset.val_per_class")
      c.dataset.val_per_class = static_cast<int>(parse_int(key, v));
    else if (key == "dataset.sigma") c.dataset.sigma = parse_double(key, v);
    else if (key == "dataset.seed") c.dataset.seed = parse_u64(key, v);
    else if (key == "model.hidden") c.hidden = parse_ints(key, v);
    else if (key == "quant.w_bits") c.w_bits = static_cast<int>(parse_int(key, v));
    else if (key == "quant.a_bits") c.a_bits = static_cast<int>(parse_int(key, v));
    else if (key == "loss.alpha") c.loss.alpha = parse_double(key, v);
    else if (key == "loss.delta") c.loss.delta = parse_double(key, v);
    else if (key == "loss.label_smoothing") c.loss.smoothing = parse_double(key, v);
    else if (key == "loss.temperature") c.loss.temperature = parse_double(key, v);
    else if (key == "opt.kind") c.opt.kind = opt_kind_from_string(v);
    else if (key == "opt.lr") c.opt.lr = parse_double(key, v);
    else if (key == "opt.momentum") c.opt.momentum = parse_double(key, v);
    else if (key == "gen.noise_dim") c.gen.noise_dim = static_cast<int>(parse_int(key, v));
    else if (key == "gen.embed_dim") c.gen.embed_dim = static_cast<int>(parse_int(key, v));
    else if (key == "gen.hidden") c.gen.hidden = parse_ints(key, v);
    else if (key == "gen.lr") c.gen.lr = parse_double(key, v);
    else if (key == "gen.warmup_epochs") c.gen.warmup_epochs = static_cast<int>(parse_int(key, v));
    else if (key == "gi.enabled") c.gi.enabled = parse_bool(key, v);
    else if (key == "gi.rho0") c.gi.rho0 = parse_double(key, v);
    else if (key == "gi.decay_factor") c.gi.decay_factor = parse_double(key, v);
    else if (key == "gi.decay_interval") c.gi.decay_interval = static_cast<int>(parse_int(key, v));
    else if (key == "gi.warmup_epochs") c.gi.warmup_epochs = static_cast<int>(parse_int(key, v));
    else if (key == "gi.kappa_cap_warmup") c.gi.kappa_cap_warmup = parse_double(key, v);
    else if (key == "gi.search_budget") c.gi.search_budget = static_cast<int>(parse_int(key, v));
    else if (key == "gi.doubling_cap") c.gi.doubling_cap = static_cast<int>(parse_int(key, v));
    else if (key == "gi.constrained_argmin") c.gi.constrained_argmin = parse_bool(key, v);
    else if (key == "train.epochs") c.train.epochs = static_cast<int>(parse_int(key, v));
    else if (key == "train.batch") c.train.batch = static_cast<int>(parse_int(key, v));
    else if (key == "train.steps_per_epoch")
      c.train.steps_per_epoch = static_cast<int>(parse_int(key, v));
    else if (key == "train.teacher_epochs")
      c.train.teacher_epochs = static_cast<int>(parse_int(key, v));
    else if (key == "train.teacher_lr") c.train.teacher_lr = parse_double(key, v);
    else if (key == "diag.cosine") c.diag.cosine = parse_bool(key, v);
    else if (key == "diag.hessian_every") c.diag.hessian_every = static_cast<int>(parse_int(key, v));
    else if (key == "diag.hessian_probes")
      c.diag.hessian_probes = static_cast<int>(parse_int(key, v));
    else if (key == "diag.probe_batch") c.diag.probe_batch = static_cast<int>(parse_int(key, v));
    else if (key == "diag.lanczos_m") c.diag.lanczos_m = static_cast<int>(parse_int(key, v));
    else if (key == "diag.slice_points") c.diag.slice_points = static_cast<int>(parse_int(key, v));
    else if (key == "diag.gi_csv") c.diag.gi_csv = parse_bool(key, v);
    else if (key == "run.arm") c.arm = v;
    else if (key == "run.seed") c.seed = parse_u64(key, v);
    else fail("config: unknown key " + key);
  }
  validate(c);
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  ZSQ_CHECK(is.good(), "config: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string canonical_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["dataset.kind"] = dataset_kind_to_string(c.dataset.kind);
  kv["dataset.classes"] = std::to_string(c.dataset.classes);
  kv["dataset.dim"] = std::to_string(c.dataset.dim);
  kv["dataset.train_per_class"] = std::to_string(c.dataset.train_per_class);
  kv["dataset.val_per_class"] = std::to_string(c.dataset.val_per_class);
  kv["dataset.sigma"] = fmt_double(c.dataset.sigma);
  kv["dataset.seed"] = std::to_string(c.dataset.seed);
  kv["model.hidden"] = fmt_ints(c.hidden);
  kv["quant.w_bits"] = std::to_string(c.w_bits);
  kv["quant.a_bits"] = std::to_string(c.a_bits);
  kv["loss.alpha"] = fmt_double(c.loss.alpha);
  kv["loss.delta"] = fmt_double(c.loss.delta);
  kv["loss.label_smoothing"] = fmt_double(c.loss.smoothing);
  kv["loss.temperature"] = fmt_double(c.loss.temperature);
  kv["opt.kind"] = opt_kind_to_string(c.opt.kind);
  kv["opt.lr"] = fmt_double(c.opt.lr);
  kv["opt.momentum"] = fmt_double(c.opt.momentum);
  kv["gen.noise_dim"] = std::to_string(c.gen.noise_dim);
  kv["gen.embed_dim"] = std::to_string(c.gen.embed_dim);
  kv["gen.hidden"] = fmt_ints(c.gen.hidden);
  kv["gen.lr"] = fmt_double(c.gen.lr);
  kv["gen.warmup_epochs"] = std::to_string(c.gen.warmup_epochs);
  kv["gi.enabled"] = c.gi.enabled ? "true" : "false";
  kv["gi.rho0"] = fmt_double(c.gi.rho0);
  kv["gi.decay_factor"] = fmt_double(c.gi.decay_factor);
  kv["gi.decay_interval"] = std::to_string(c.gi.decay_interval);
  kv["gi.warmup_epochs"] = std::to_string(c.gi.warmup_epochs);
  kv["gi.kappa_cap_warmup"] = fmt_double(c.gi.kappa_cap_warmup);
  kv["gi.search_budget"] = std::to_string(c.gi.search_budget);
  kv["gi.doubling_cap"] = std::to_string(c.gi.doubling_cap);
  kv["gi.constrained_argmin"] = c.gi.constrained_argmin ? "true" : "false";
  kv["train.epochs"] = std::to_string(c.train.epochs);
  kv["train.batch"] = std::to_string(c.train.batch);
  kv["train.steps_per_epoch"] = std::to_string(c.train.steps_per_epoch);
  kv["train.teacher_epochs"] = std::to_string(c.train.teacher_epochs);
  kv["train.teacher_lr"] = fmt_double(c.train.teacher_lr);
  kv["diag.cosine"] = c.diag.cosine ? "true" : "false";
  kv["diag.hessian_every"] = std::to_string(c.diag.hessian_every);
  kv["diag.hessian_probes"] = std::to_string(c.diag.hessian_probes);
  kv["diag.probe_batch"] = std::to_string(c.diag.probe_batch);
  kv["diag.lanczos_m"] = std::to_string(c.diag.lanczos_m);
  kv["diag.slice_points"] = std::to_string(c.diag.slice_points);
  kv["diag.gi_csv"] = c.diag.gi_csv ? "true" : "false";
  kv["run.arm"] = c.arm;
  kv["run.seed"] = std::to_string(c.seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  const std::string text = canonical_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace zsq
