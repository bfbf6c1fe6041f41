#include <cstdio>
#include <fstream>
#include <sstream>

#include "dypro/crossval.hpp"
#include "dypro/error.hpp"

namespace dypro {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json row_json(const MetricRow& row) {
  json j = json::object();
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) j[kMetricNames[m]] = optional_json(row[m]);
  return j;
}

MetricRow row_from(const json& j) {
  MetricRow row;
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) row[m] = optional_from(j.at(kMetricNames[m]));
  return row;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

json to_json(const CvReport& r) {
  json j;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["config"] = r.config;
  j["runtime_seconds"] = r.runtime_seconds;
  j["failed_folds"] = r.failed_folds;
  j["os_grad_wrt_dfs_context"] = r.os_grad_wrt_dfs_context;

  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"repeat", f.repeat},
                     {"fold", f.fold},
                     {"seed", f.seed},
                     {"failed", f.failed},
                     {"error", f.error},
                     {"epochs", f.epochs},
                     {"best_epoch", f.best_epoch},
                     {"best_val_loss", f.best_val_loss},
                     {"capped_weights", f.capped_weights},
                     {"metrics", {{task_name(Task::Os), row_json(f.os)},
                                  {task_name(Task::Dfs), row_json(f.dfs)}}}});
  }
  j["folds"] = std::move(folds);

  json agg = json::object();
  for (const auto& [task, table] : r.aggregate) {
    for (const auto& [metric, a] : table) {
      agg[task][metric] = {
          {"mean", optional_json(a.mean)}, {"std", optional_json(a.std)}, {"count", a.count}};
    }
  }
  j["aggregate"] = std::move(agg);

  json ci = json::object();
  for (const auto& [task, c] : r.cindex_ci) {
    ci[task] = {{"estimate", c.estimate}, {"lo", c.lo},
                {"hi", c.hi},             {"level", c.level},
                {"resamples", c.resamples}, {"discarded", c.discarded},
                {"text", c.text}};
  }
  j["cindex_ci"] = std::move(ci);
  return j;
}

CvReport report_from_json(const json& j) {
  try {
    CvReport r;
    r.variant = j.at("variant").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    r.runtime_seconds = j.at("runtime_seconds").get<double>();
    r.failed_folds = j.at("failed_folds").get<std::size_t>();
    r.os_grad_wrt_dfs_context = j.at("os_grad_wrt_dfs_context").get<double>();
    for (const auto& f : j.at("folds")) {
      FoldRecord rec;
      rec.repeat = f.at("repeat").get<std::size_t>();
      rec.fold = f.at("fold").get<std::size_t>();
      rec.seed = f.at("seed").get<std::uint64_t>();
      rec.failed = f.at("failed").get<bool>();
      rec.error = f.at("error").get<std::string>();
      rec.epochs = f.at("epochs").get<std::size_t>();
      rec.best_epoch = f.at("best_epoch").get<std::size_t>();
      rec.best_val_loss = f.at("best_val_loss").get<double>();
      rec.capped_weights = f.at("capped_weights").get<std::size_t>();
      rec.os = row_from(f.at("metrics").at(task_name(Task::Os)));
      rec.dfs = row_from(f.at("metrics").at(task_name(Task::Dfs)));
      r.folds.push_back(std::move(rec));
    }
    for (const auto& [task, table] : j.at("aggregate").items()) {
      for (const auto& [metric, a] : table.items()) {
        r.aggregate[task][metric] = Aggregate{optional_from(a.at("mean")),
                                              optional_from(a.at("std")),
                                              a.at("count").get<std::size_t>()};
      }
    }
    for (const auto& [task, c] : j.at("cindex_ci").items()) {
      r.cindex_ci[task] = CiRecord{c.at("estimate").get<double>(),
                                   c.at("lo").get<double>(),
                                   c.at("hi").get<double>(),
                                   c.at("level").get<double>(),
                                   c.at("resamples").get<std::size_t>(),
                                   c.at("discarded").get<std::size_t>(),
                                   c.at("text").get<std::string>()};
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

std::string format_number(std::optional<double> v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

std::string metrics_csv(const CvReport& report) {
  std::ostringstream out;
  out << "repeat,fold,task";
  for (const char* m : kMetricNames) out << ',' << m;
  out << '\n';
  for (const auto& f : report.folds) {
    for (Task task : kReportTasks) {
      out << f.repeat << ',' << f.fold << ',' << task_name(task);
      for (const auto& v : f.row(task)) out << ',' << format_number(f.failed ? std::nullopt : v);
      out << '\n';
    }
  }
  return out.str();
}

std::string curves_csv(const OutOfFold& p, const TimeBins& bins) {
  std::ostringstream out;
  out << "patient_id,task,bin,hazard,survival\n";
  for (std::size_t i = 0; i < p.patient_ids.size(); ++i) {
    if (!p.predicted[i]) continue;
    const auto row = static_cast<Eigen::Index>(i);
    for (Task task : kReportTasks) {
      const ad::Matrix& hz = task == Task::Os ? p.os_hazards : p.dfs_hazards;
      const SurvivalCurve s = survival_from_hazards(hz.row(row).transpose());
      for (std::size_t k = 0; k < bins.size(); ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        out << csv_field(p.patient_ids[i]) << ',' << task_name(task) << ',' << k << ','
            << format_number(hz(row, col)) << ',' << format_number(s(col)) << '\n';
      }
    }
  }
  return out.str();
}

void emit_report(const CrossvalRun& run, const TimeBins& bins, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_file(dir / "report.json", to_json(run.report).dump(2) + "\n");
  write_file(dir / "metrics.csv", metrics_csv(run.report));
  write_file(dir / "curves.csv", curves_csv(run.out_of_fold, bins));
}

}  // namespace dypro
