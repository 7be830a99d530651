// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0
//
// zsqlab: desk-scale zero-shot-quantization laboratory.
//   dataset   inspect/export the synthetic task
//   pretrain  train the full-precision teacher and save its checkpoint
//   run       execute one experiment arm end to end
//   sweep     grid sweep with repeated seeds
//   report    aggregate run directories into ablation.csv / summary.json
//   selftest  run the built-in oracle suites

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "zsq/checkpoint.hpp"
#include "zsq/experiment.hpp"
#include "zsq/selftest.hpp"

namespace fs = std::filesystem;
using namespace zsq;

namespace {

ExperimentConfig load_cfg(const std::string& path, std::uint64_t seed, bool seed_set,
                          const std::string& arm) {
  ExperimentConfig cfg = path.empty() ? default_config() : load_config_file(path);
  if (seed_set) cfg.seed = seed;
  if (!arm.empty()) cfg.arm = arm;
  return cfg;
}

std::string teacher_path(const std::string& out) {
  return (fs::path(out) / "checkpoints" / "teacher.zsq").string();
}

ClassifierNet load_teacher(const ExperimentConfig& cfg, const std::string& path) {
  Rng init(cfg.dataset.seed);
  Rng fork = init.fork(101);
  ClassifierNet teacher = build_teacher(cfg.model_spec(), fork);
  load_checkpoint(path, teacher.g);
  return teacher;
}

int cmd_dataset(const ExperimentConfig& cfg, const std::string& out) {
  const Dataset ds = make_dataset(cfg.dataset);
  fs::create_directories(out);
  const std::string path = (fs::path(out) / "dataset.csv").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) {
    std::fprintf(stderr, "cannot write %s\n", path.c_str());
    return 1;
  }
  std::fprintf(f, "split,label");
  for (int d = 0; d < cfg.dataset.dim; ++d) std::fprintf(f, ",x%d", d);
  std::fprintf(f, "\n");
  auto dump = [&](const char* split, const Tensor& x, const std::vector<int>& y) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      std::fprintf(f, "%s,%d", split, y[r]);
      for (std::size_t c = 0; c < x.cols(); ++c) std::fprintf(f, ",%.17g", x.at(r, c));
      std::fprintf(f, "\n");
    }
  };
  dump("train", ds.train_x, ds.train_y);
  dump("val", ds.val_x, ds.val_y);
  std::fclose(f);
  std::printf("wrote %s (%zu train, %zu val)\n", path.c_str(), ds.train_x.rows(),
              ds.val_x.rows());
  return 0;
}

int cmd_pretrain(const ExperimentConfig& cfg, const std::string& out) {
  const Dataset ds = make_dataset(cfg.dataset);
  PretrainResult pre = pretrain_teacher(cfg, ds);
  fs::create_directories(fs::path(out) / "checkpoints");
  save_checkpoint(teacher_path(out), pre.teacher.g);
  std::printf("teacher: train acc %.4f, val acc %.4f -> %s\n", pre.train_acc, pre.val_acc,
              teacher_path(out).c_str());
  return 0;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& out, const std::string& teacher_ckpt) {
  const Dataset ds = make_dataset(cfg.dataset);
  std::string tpath = teacher_ckpt.empty() ? teacher_path(out) : teacher_ckpt;
  if (!fs::exists(tpath)) {
    std::fprintf(stderr, "no teacher checkpoint at %s (run `zsqlab pretrain` first)\n",
                 tpath.c_str());
    return 1;
  }
  ClassifierNet teacher = load_teacher(cfg, tpath);
  const std::string run_dir =
      (fs::path(out) / ("run_" + cfg.arm + "_seed" + std::to_string(cfg.seed))).string();
  fs::create_directories(run_dir);
  RunRecord rec = run_experiment(cfg, teacher, ds, run_dir);
  if (rec.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", rec.abort_reason.c_str());
    return 1;
  }
  std::printf("arm=%s seed=%llu final val acc %.4f, final kl %.6g (%s)\n", rec.arm.c_str(),
              static_cast<unsigned long long>(rec.seed), rec.final_val_acc, rec.final_kl,
              run_dir.c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out,
              const std::vector<std::string>& grid_args, int repeat) {
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  for (const std::string& item : grid_args) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "bad --grid entry (want key=v1,v2,...): %s\n", item.c_str());
      return 1;
    }
    std::vector<std::string> values;
    std::string v = item.substr(eq + 1);
    std::size_t pos = 0;
    while (pos != std::string::npos) {
      const std::size_t comma = v.find(',', pos);
      values.push_back(v.substr(pos, comma == std::string::npos ? comma : comma - pos));
      pos = comma == std::string::npos ? comma : comma + 1;
    }
    grid.emplace_back(item.substr(0, eq), values);
  }
  fs::create_directories(out);
  const auto runs = sweep(cfg, grid, repeat, out);
  int failures = 0;
  for (const auto& r : runs) {
    if (r.record.aborted) ++failures;
    std::printf("seed=%llu", static_cast<unsigned long long>(r.seed));
    for (const auto& [k, v] : r.overrides) std::printf(" %s=%s", k.c_str(), v.c_str());
    std::printf(" -> val acc %.4f%s\n", r.record.final_val_acc,
                r.record.aborted ? " (aborted)" : "");
  }
  return failures == 0 ? 0 : 1;
}

int cmd_report(const std::string& runs_dir, const std::string& out) {
  std::vector<RunRecord> records;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(runs_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::ifstream is(dir / "summary.json");
    nlohmann::json j;
    is >> j;
    RunRecord r;
    r.arm = j.value("arm", "?");
    r.seed = j.value("seed", 0ULL);
    r.config_hash = j.value("config_hash", "");
    r.final_val_acc = j.value("final_val_acc", 0.0);
    r.final_train_acc = j.value("final_train_acc", 0.0);
    r.final_kl = j.value("final_kl", 0.0);
    r.aborted = j.value("aborted", false);
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    std::fprintf(stderr, "no run directories with summary.json under %s\n", runs_dir.c_str());
    return 1;
  }
  export_report(records, out.empty() ? runs_dir : out);
  std::printf("aggregated %zu runs\n", records.size());
  return 0;
}

int cmd_selftest() {
  const auto results = run_selftests();
  int failures = 0;
  for (const auto& r : results) {
    std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.empty() ? "" : ": ", r.detail.c_str());
    if (!r.pass) ++failures;
  }
  std::printf("%zu checks, %d failures\n", results.size(), failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zsqlab: zero-shot quantization laboratory"};
  app.require_subcommand(1);

  std::string config_path, out = "out", arm, teacher_ckpt, runs_dir, report_out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int repeat = 1;
  std::vector<std::string> grid_args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (key=value lines)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "run seed")->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--arm", arm, "experiment arm");
  };

  CLI::App* ds = app.add_subcommand("dataset", "export the synthetic dataset");
  add_common(ds);
  CLI::App* pre = app.add_subcommand("pretrain", "pretrain the teacher");
  add_common(pre);
  CLI::App* run = app.add_subcommand("run", "run one experiment arm");
  add_common(run);
  run->add_option("--teacher", teacher_ckpt, "teacher checkpoint path");
  CLI::App* sw = app.add_subcommand("sweep", "grid sweep");
  add_common(sw);
  sw->add_option("--grid", grid_args, "key=v1,v2,... (repeatable)");
  sw->add_option("--repeat", repeat, "seeds per grid point");
  CLI::App* rep = app.add_subcommand("report", "aggregate run directories");
  rep->add_option("--runs", runs_dir, "directory containing run subdirectories")->required();
  rep->add_option("--out", report_out, "output directory (default: --runs)");
  CLI::App* st = app.add_subcommand("selftest", "run built-in oracle suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(st)) return cmd_selftest();
    if (app.got_subcommand(rep)) return cmd_report(runs_dir, report_out);
    const ExperimentConfig cfg = load_cfg(config_path, seed, seed_set, arm);
    if (app.got_subcommand(ds)) return cmd_dataset(cfg, out);
    if (app.got_subcommand(pre)) return cmd_pretrain(cfg, out);
    if (app.got_subcommand(run)) return cmd_run(cfg, out, teacher_ckpt);
    if (app.got_subcommand(sw)) return cmd_sweep(cfg, out, grid_args, repeat);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
