// Copyright 2026 The zsqlab Authors
// Licensed under the Apache License, Version 2.0

#include "zsq/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "zsq/checkpoint.hpp"

namespace zsq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvFile {
 public:
  explicit CsvFile(const std::string& path) : f_(std::fopen(path.c_str(), "wb")) {
    ZSQ_CHECK(f_ != nullptr, "cannot open " + path + " for writing");
  }
  ~CsvFile() {
    if (f_) std::fclose(f_);
  }
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;
  void line(const std::string& s) { std::fprintf(f_, "%s\n", s.c_str()); }

 private:
  std::FILE* f_;
};

int env_threads() {
  const char* v = std::getenv("ZSQ_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

}  // namespace

LabContext make_context(const ExperimentConfig& cfg) {
  LabContext ctx{make_dataset(cfg.dataset), {}, 0.0, 0.0};
  PretrainResult pre = pretrain_teacher(cfg, ctx.data);
  ctx.teacher = std::move(pre.teacher);
  ctx.teacher_train_acc = pre.train_acc;
  ctx.teacher_val_acc = pre.val_acc;
  return ctx;
}

RunRecord run_experiment(const ExperimentConfig& cfg_in, const ClassifierNet& teacher,
                         const Dataset& data, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.arm = cfg_in.arm;
  rec.seed = cfg_in.seed;
  rec.config_hash = config_hash_hex(cfg_in);
  rec.canonical_cfg = canonical_config(cfg_in);

  ExperimentConfig cfg = cfg_in;
  apply_arm(cfg);

  try {
    if (cfg.arm == "kd") {
      KdTrainer trainer(cfg, teacher, data);
      for (int epoch = 0; epoch < cfg.train.epochs; ++epoch)
        rec.metrics.push_back(trainer.run_epoch(epoch));
      rec.final_train_acc =
          evaluate_accuracy(trainer.student(), data.train_x, data.train_y);
      rec.final_val_acc = evaluate_accuracy(trainer.student(), data.val_x, data.val_y);
      rec.diag = trainer.diag();
      rec.val_overlap_count = trainer.guard().overlap_count;
      if (!out_dir.empty()) {
        fs::create_directories(fs::path(out_dir) / "checkpoints");
        save_checkpoint((fs::path(out_dir) / "checkpoints" / "student.zsq").string(),
                        trainer.student().g);
      }
    } else {
      ZsqTrainer trainer(cfg, teacher, data);
      for (int epoch = 0; epoch < cfg.train.epochs; ++epoch)
        rec.metrics.push_back(trainer.run_epoch(epoch));
      rec.final_train_acc =
          evaluate_accuracy(trainer.student(), data.train_x, data.train_y);
      rec.final_val_acc = evaluate_accuracy(trainer.student(), data.val_x, data.val_y);
      rec.diag = trainer.diag();
      rec.gi_reports = trainer.gi_reports();
      rec.gi_report_epochs = trainer.gi_report_epochs();
      rec.gi_warmup_end = trainer.gi_warmup_end();
      rec.val_overlap_count = trainer.guard().overlap_count;
      if (!out_dir.empty()) {
        fs::create_directories(fs::path(out_dir) / "checkpoints");
        save_checkpoint((fs::path(out_dir) / "checkpoints" / "student.zsq").string(),
                        trainer.student().g);
        save_checkpoint((fs::path(out_dir) / "checkpoints" / "generator.zsq").string(),
                        trainer.generator().g);
      }
    }
  } catch (const Error& e) {
    rec.aborted = true;
    rec.abort_reason = e.what();
  }

  if (!rec.metrics.empty()) {
    rec.final_ce = rec.metrics.back().ce;
    rec.final_kl = rec.metrics.back().kl;
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    fs::create_directories(fs::path(out_dir) / "reports");
    write_metrics_csv((fs::path(out_dir) / "reports" / "metrics.csv").string(), rec.metrics);
    write_summary_json((fs::path(out_dir) / "summary.json").string(), rec);
    fs::create_directories(fs::path(out_dir) / "diag");
    write_diag_files((fs::path(out_dir) / "diag").string(), rec);
    if (cfg.diag.gi_csv)
      write_gi_csv((fs::path(out_dir) / "reports" / "gi.csv").string(), rec);
  }
  return rec;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics) {
  CsvFile csv(path);
  csv.line("epoch,loss_g,loss_q,ce,kl,acc,crossings_total,crossings_gini");
  for (const EpochMetrics& m : metrics) {
    std::string row = std::to_string(m.epoch);
    row += "," + fmt(m.loss_g) + "," + fmt(m.loss_q) + "," + fmt(m.ce) + "," + fmt(m.kl) + "," +
           fmt(m.acc) + "," + std::to_string(m.crossings_total) + "," + fmt(m.crossings_gini);
    csv.line(row);
  }
}

void write_summary_json(const std::string& path, const RunRecord& rec) {
  json j;
  j["arm"] = rec.arm;
  j["seed"] = rec.seed;
  j["config_hash"] = rec.config_hash;
  j["config"] = rec.canonical_cfg;
  j["epochs_run"] = rec.metrics.size();
  j["teacher_train_acc"] = rec.teacher_train_acc;
  j["teacher_val_acc"] = rec.teacher_val_acc;
  j["final_train_acc"] = rec.final_train_acc;
  j["final_val_acc"] = rec.final_val_acc;
  j["final_ce"] = rec.final_ce;
  j["final_kl"] = rec.final_kl;
  j["aborted"] = rec.aborted;
  j["abort_reason"] = rec.abort_reason;
  j["val_overlap_count"] = rec.val_overlap_count;
  j["wall_seconds"] = rec.wall_seconds;
  json val_acc = json::array();
  for (const EpochMetrics& m : rec.metrics) val_acc.push_back(m.val_acc);
  j["val_acc_series"] = val_acc;
  std::FILE* f = std::fopen(path.c_str(), "wb");
  ZSQ_CHECK(f != nullptr, "cannot open " + path);
  const std::string text = j.dump(2);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

void write_diag_files(const std::string& dir, const RunRecord& rec) {
  const DiagSeries& d = rec.diag;
  json j;
  j["cosine_ce_kl"] = {{"epochs", d.cos_epochs}, {"values", d.cosine_ce_kl}};
  j["inter_epoch_cosine"] = {{"epochs", d.inter_epochs},
                             {"ce", d.inter_cos_ce},
                             {"kl", d.inter_cos_kl}};
  j["hessian_trace"] = {{"epochs", d.trace_epochs},
                        {"ce", d.trace_ce},
                        {"ce_stderr", d.trace_ce_se},
                        {"kl", d.trace_kl},
                        {"kl_stderr", d.trace_kl_se}};
  {
    std::FILE* f = std::fopen((fs::path(dir) / "diagnostics.json").string().c_str(), "wb");
    ZSQ_CHECK(f != nullptr, "cannot open diagnostics.json");
    const std::string text = j.dump(2);
    std::fwrite(text.data(), 1, text.size(), f);
    std::fputc('\n', f);
    std::fclose(f);
  }

  if (!d.cos_epochs.empty()) {
    CsvFile csv((fs::path(dir) / "cosine.csv").string());
    csv.line("epoch,cos_ce_kl");
    for (std::size_t i = 0; i < d.cos_epochs.size(); ++i)
      csv.line(std::to_string(d.cos_epochs[i]) + "," + fmt(d.cosine_ce_kl[i]));
  }
  if (!d.inter_epochs.empty()) {
    CsvFile csv((fs::path(dir) / "inter_epoch_cosine.csv").string());
    csv.line("epoch,cos_ce,cos_kl");
    for (std::size_t i = 0; i < d.inter_epochs.size(); ++i)
      csv.line(std::to_string(d.inter_epochs[i]) + "," + fmt(d.inter_cos_ce[i]) + "," +
               fmt(d.inter_cos_kl[i]));
  }
  if (!d.trace_epochs.empty()) {
    CsvFile csv((fs::path(dir) / "hessian_trace.csv").string());
    csv.line("epoch,trace_ce,stderr_ce,trace_kl,stderr_kl");
    for (std::size_t i = 0; i < d.trace_epochs.size(); ++i)
      csv.line(std::to_string(d.trace_epochs[i]) + "," + fmt(d.trace_ce[i]) + "," +
               fmt(d.trace_ce_se[i]) + "," + fmt(d.trace_kl[i]) + "," + fmt(d.trace_kl_se[i]));
  }
  if (d.spectrum_epoch >= 0) {
    CsvFile csv((fs::path(dir) / "spectrum.csv").string());
    csv.line("loss,index,ritz_value");
    for (std::size_t i = 0; i < d.spectrum_ce.ritz.size(); ++i)
      csv.line("ce," + std::to_string(i) + "," + fmt(d.spectrum_ce.ritz[i]));
    for (std::size_t i = 0; i < d.spectrum_kl.ritz.size(); ++i)
      csv.line("kl," + std::to_string(i) + "," + fmt(d.spectrum_kl.ritz[i]));
  }
  if (d.slice_epoch >= 0) {
    CsvFile csv((fs::path(dir) / ("slice_epoch" + std::to_string(d.slice_epoch) + ".csv")).string());
    csv.line("k,loss_ce,loss_kl,ok_ce,ok_kl");
    for (std::size_t i = 0; i < d.slice_ce.size(); ++i)
      csv.line(fmt(d.slice_ce[i].k) + "," + fmt(d.slice_ce[i].loss) + "," +
               fmt(d.slice_kl[i].loss) + "," + std::to_string(d.slice_ce[i].ok ? 1 : 0) + "," +
               std::to_string(d.slice_kl[i].ok ? 1 : 0));
  }
  for (const auto& [epoch, hist] : d.crossings) {
    CsvFile csv((fs::path(dir) / ("crossings_epoch" + std::to_string(epoch) + ".csv")).string());
    csv.line("layer,mean_crossings_per_step");
    for (std::size_t i = 0; i < hist.layer.size(); ++i)
      csv.line(std::to_string(hist.layer[i]) + "," + fmt(hist.mean_crossings[i]));
    csv.line("# top3_fraction=" + fmt(hist.top3_fraction));
  }
}

void write_gi_csv(const std::string& path, const RunRecord& rec) {
  CsvFile csv(path);
  csv.line("epoch,step,layer,kappa,target_T,crossings,search_steps,capped");
  int step_in_epoch = 0;
  int prev_epoch = -1;
  for (std::size_t s = 0; s < rec.gi_reports.size(); ++s) {
    const int epoch = rec.gi_report_epochs[s];
    step_in_epoch = (epoch == prev_epoch) ? step_in_epoch + 1 : 0;
    prev_epoch = epoch;
    for (const LayerUpdateReport& r : rec.gi_reports[s]) {
      csv.line(std::to_string(epoch) + "," + std::to_string(step_in_epoch) + "," +
               std::to_string(r.layer) + "," + fmt(r.kappa) + "," + fmt(r.target) + "," +
               std::to_string(r.crossings) + "," + std::to_string(r.search_steps) + "," +
               std::to_string(r.capped ? 1 : 0));
    }
  }
}

ExperimentConfig with_overrides(const ExperimentConfig& base,
                                const std::vector<std::pair<std::string, std::string>>& kv) {
  std::map<std::string, std::string> merged;
  std::stringstream ss(canonical_config(base));
  std::string line;
  while (std::getline(ss, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) merged[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const auto& [k, v] : kv) merged[k] = v;
  std::string text;
  for (const auto& [k, v] : merged) text += k + "=" + v + "\n";
  return parse_config_text(text);
}

std::vector<SweepPoint> sweep(
    const ExperimentConfig& base,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& grid, int repeat,
    const std::string& out_dir) {
  ZSQ_CHECK(!grid.empty() || repeat >= 1, "sweep: empty grid");
  ZSQ_CHECK(repeat >= 1, "sweep: repeat must be >= 1");

  // Cartesian expansion in grid order.
  std::vector<std::vector<std::pair<std::string, std::string>>> points;
  points.push_back({});
  for (const auto& [key, values] : grid) {
    ZSQ_CHECK(!values.empty(), "sweep: empty value list for " + key);
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& p : points)
      for (const auto& v : values) {
        auto q = p;
        q.emplace_back(key, v);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }

  std::vector<SweepPoint> runs;
  for (const auto& p : points)
    for (int r = 0; r < repeat; ++r) {
      SweepPoint sp;
      sp.overrides = p;
      sp.seed = base.seed + static_cast<std::uint64_t>(r);
      runs.push_back(std::move(sp));
    }

  // Shared contexts: one teacher per distinct (dataset, model, teacher) setup.
  std::map<std::string, std::shared_ptr<LabContext>> contexts;
  std::vector<ExperimentConfig> cfgs;
  std::vector<std::shared_ptr<LabContext>> ctx_of;
  for (auto& sp : runs) {
    ExperimentConfig cfg = with_overrides(base, sp.overrides);
    cfg.seed = sp.seed;
    ExperimentConfig ctx_key = cfg;
    ctx_key.seed = 0;
    ctx_key.arm = "baseline";
    ctx_key.gi = GIConfig{};
    ctx_key.loss = LossWeights{};
    ctx_key.opt = OptSpec{};
    ctx_key.diag = DiagCfg{};
    ctx_key.gen = GenCfg{};
    const std::string key = config_hash_hex(ctx_key);
    auto it = contexts.find(key);
    if (it == contexts.end())
      it = contexts.emplace(key, std::make_shared<LabContext>(make_context(cfg))).first;
    cfgs.push_back(std::move(cfg));
    ctx_of.push_back(it->second);
  }

  const int threads = std::min<int>(env_threads(), static_cast<int>(runs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= runs.size()) break;
      std::string dir;
      if (!out_dir.empty()) {
        std::string tag = "run" + std::to_string(i);
        for (const auto& [k, v] : runs[i].overrides) {
          std::string kv = k + "=" + v;
          for (char& ch : kv)
            if (ch == '/' || ch == ' ') ch = '_';
          tag += "_" + kv;
        }
        tag += "_seed" + std::to_string(runs[i].seed);
        dir = (fs::path(out_dir) / tag).string();
        fs::create_directories(dir);
      }
      RunRecord rec = run_experiment(cfgs[i], ctx_of[i]->teacher, ctx_of[i]->data, dir);
      rec.teacher_train_acc = ctx_of[i]->teacher_train_acc;
      rec.teacher_val_acc = ctx_of[i]->teacher_val_acc;
      runs[i].record = std::move(rec);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (!out_dir.empty()) {
    CsvFile csv((fs::path(out_dir) / "sweep.csv").string());
    std::string header = "index";
    for (const auto& [k, values] : grid) header += "," + k;
    header += ",seed,arm,final_val_acc,final_kl,aborted";
    csv.line(header);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      std::string row = std::to_string(i);
      for (const auto& [k, v] : runs[i].overrides) row += "," + v;
      row += "," + std::to_string(runs[i].seed) + "," + runs[i].record.arm + "," +
             fmt(runs[i].record.final_val_acc) + "," + fmt(runs[i].record.final_kl) + "," +
             std::to_string(runs[i].record.aborted ? 1 : 0);
      csv.line(row);
    }
    std::vector<RunRecord> records;
    for (const auto& r : runs) records.push_back(r.record);
    export_report(records, out_dir);
  }
  return runs;
}

void export_report(const std::vector<RunRecord>& records, const std::string& out_dir) {
  ZSQ_CHECK(!records.empty(), "export_report: no records");
  fs::create_directories(out_dir);

  // Aggregate per arm, first-seen order.
  std::vector<std::string> arm_order;
  std::map<std::string, std::vector<const RunRecord*>> by_arm;
  for (const RunRecord& r : records) {
    if (by_arm.find(r.arm) == by_arm.end()) arm_order.push_back(r.arm);
    by_arm[r.arm].push_back(&r);
  }

  CsvFile csv((fs::path(out_dir) / "ablation.csv").string());
  csv.line("arm,runs,val_acc_mean,val_acc_min,val_acc_max,train_acc_mean,final_kl_mean");
  for (const std::string& arm : arm_order) {
    const auto& rs = by_arm[arm];
    double vsum = 0, vmin = rs[0]->final_val_acc, vmax = rs[0]->final_val_acc, tsum = 0,
           ksum = 0;
    for (const RunRecord* r : rs) {
      vsum += r->final_val_acc;
      vmin = std::min(vmin, r->final_val_acc);
      vmax = std::max(vmax, r->final_val_acc);
      tsum += r->final_train_acc;
      ksum += r->final_kl;
    }
    const double n = static_cast<double>(rs.size());
    csv.line(arm + "," + std::to_string(rs.size()) + "," + fmt(vsum / n) + "," + fmt(vmin) +
             "," + fmt(vmax) + "," + fmt(tsum / n) + "," + fmt(ksum / n));
  }

  json j = json::array();
  for (const RunRecord& r : records) {
    json e;
    e["arm"] = r.arm;
    e["seed"] = r.seed;
    e["config_hash"] = r.config_hash;
    e["final_val_acc"] = r.final_val_acc;
    e["final_train_acc"] = r.final_train_acc;
    e["final_kl"] = r.final_kl;
    e["aborted"] = r.aborted;
    j.push_back(e);
  }
  std::FILE* f = std::fopen((fs::path(out_dir) / "summary.json").string().c_str(), "wb");
  ZSQ_CHECK(f != nullptr, "export_report: cannot write summary.json");
  const std::string text = j.dump(2);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fputc('\n', f);
  std::fclose(f);
}

}  // namespace zsq
