#include "dypro/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "dypro/error.hpp"

namespace dypro {

using nlohmann::json;

double RunConfig::tau() const { return eval.tau.value_or(std::min(5.0, model.bins.last_edge())); }

namespace {

class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) {
      node_ = &doc.at(name_);
      if (!node_->is_object()) throw ConfigError(name_ + ": expected an object");
    }
  }

  void count(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "a nonnegative integer");
      out = v->get<std::size_t>();
    }
  }
  std::optional<std::size_t> maybe_count(const char* key) {
    std::optional<std::size_t> out;
    if (node_ && node_->contains(key)) {
      std::size_t tmp = 0;
      count(key, tmp);
      out = tmp;
    }
    seen_.insert(key);
    return out;
  }
  void count(const char* key, Eigen::Index& out) {
    std::size_t tmp = static_cast<std::size_t>(out);
    count(key, tmp);
    out = static_cast<Eigen::Index>(tmp);
  }
  void seed(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number() || !std::isfinite(v->get<double>())) fail(key, "a finite number");
      out = v->get<double>();
    }
  }
  std::optional<double> maybe_real(const char* key) {
    std::optional<double> out;
    if (node_ && node_->contains(key)) {
      double tmp = 0.0;
      real(key, tmp);
      out = tmp;
    }
    seen_.insert(key);
    return out;
  }
  void flag(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> text(const char* key) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "a string");
      return v->get<std::string>();
    }
    return std::nullopt;
  }
  std::optional<std::vector<double>> reals(const char* key) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      std::vector<double> out;
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key, "an array of numbers");
        out.push_back(x.get<double>());
      }
      return out;
    }
    return std::nullopt;
  }

  /// Rejects keys that were never read.
  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError(name_ + "." + key + ": expected " + expected);
  }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections = {"model", "train", "eval",
                                                  "cv",    "simulate", "paths"};
  for (const auto& [key, value] : doc.items()) {
    if (!kSections.contains(key)) throw ConfigError("unknown config section '" + key + "'");
  }

  RunConfig c;
  {
    Section s(doc, "model");
    if (auto name = s.text("backbone")) {
      const auto b = backbone_from_name(*name);
      if (!b) throw ConfigError("model.backbone: unknown backbone '" + *name + "'");
      c.model.backbone = *b;
    }
    s.count("d", c.model.latent);
    s.count("d_t", c.model.time_embed);
    // d_h defaults to d and d_c to d_h / 2.
    const auto d_h = s.maybe_count("d_h");
    const auto d_c = s.maybe_count("d_c");
    c.model.lstm_hidden = d_h ? static_cast<Eigen::Index>(*d_h) : c.model.latent;
    c.model.context = d_c ? static_cast<Eigen::Index>(*d_c) : std::max<Eigen::Index>(c.model.lstm_hidden / 2, 1);
    s.count("T", c.model.horizon);
    std::size_t k = 0;
    s.count("K", k);
    if (auto edges = s.reals("bin_edges")) {
      try {
        c.model.bins = TimeBins(*edges);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("model.bin_edges: ") + e.what());
      }
      if (k != 0 && k != c.model.bins.size()) {
        throw ConfigError("model.K disagrees with the number of bin_edges intervals");
      }
    } else if (k != 0) {
      c.model.bins = TimeBins::annual(k);
    }
    s.flag("cascade", c.model.cascade);
    if (auto name = s.text("integrator")) {
      const auto i = integrator_from_name(*name);
      if (!i) throw ConfigError("model.integrator: expected 'lstm' or 'mean'");
      c.model.integrator = *i;
    }
    s.flag("static_zero_update", c.model.zero_update);
    s.finish();
  }
  {
    Section s(doc, "train");
    s.real("lr", c.train.optimizer.lr);
    s.real("beta1", c.train.optimizer.beta1);
    s.real("beta2", c.train.optimizer.beta2);
    s.real("eps", c.train.optimizer.eps);
    s.real("weight_decay", c.train.optimizer.weight_decay);
    s.count("batch", c.train.batch_size);
    s.real("alpha", c.train.weights.alpha);
    s.real("beta", c.train.weights.beta);
    s.count("max_epochs", c.train.max_epochs);
    s.count("patience", c.train.patience);
    s.real("scheduler_factor", c.train.plateau_factor);
    s.count("scheduler_patience", c.train.plateau_patience);
    s.seed("seed", c.seed);
    s.flag("augment", c.train.augment);
    s.real("dropout", c.train.augmentation.dropout);
    s.real("noise", c.train.augmentation.noise);
    s.finish();
  }
  {
    Section s(doc, "eval");
    if (auto h = s.reals("horizons")) {
      if (h->size() != 3) throw ConfigError("eval.horizons: expected exactly three horizons");
      std::copy(h->begin(), h->end(), c.eval.horizons.begin());
    }
    if (auto tau = s.maybe_real("tau")) c.eval.tau = *tau;
    s.count("bootstrap", c.eval.bootstrap);
    s.real("level", c.eval.level);
    s.real("weight_cap", c.eval.weight_cap);
    s.finish();
  }
  {
    Section s(doc, "cv");
    s.count("k", c.cv.k);
    s.count("repeats", c.cv.repeats);
    s.finish();
  }
  {
    Section s(doc, "simulate");
    auto& sc = c.simulate.scenario;
    s.count("n", c.simulate.n);
    s.real("signal", sc.signal);
    s.real("censoring", sc.censoring);
    s.real("hazard_ratio", sc.hazard_ratio);
    s.real("os_hazard", sc.os_hazard);
    s.real("dfs_hazard", sc.dfs_hazard);
    s.real("region_absent", sc.region_absent);
    s.count("region_len", sc.schema.region_len);
    s.count("clinical_len", sc.schema.clinical_len);
    s.finish();
  }
  {
    Section s(doc, "paths");
    if (auto p = s.text("cohort")) c.cohort_path = resolve(*p, base_dir);
    if (auto p = s.text("output")) c.output_dir = resolve(*p, base_dir);
    s.finish();
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " does not parse: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

void validate(const RunConfig& c) {
  validate(c.model);
  validate(c.train);
  for (std::size_t i = 0; i < c.eval.horizons.size(); ++i) {
    if (!(c.eval.horizons[i] > 0.0)) throw ConfigError("eval.horizons must be positive");
    if (i > 0 && !(c.eval.horizons[i] > c.eval.horizons[i - 1])) {
      throw ConfigError("eval.horizons must increase");
    }
  }
  const double tau = c.tau();
  if (!(tau > 0.0) || tau > c.model.bins.last_edge()) {
    throw ConfigError("eval.tau must lie in (0, last bin edge]");
  }
  if (c.eval.bootstrap < 100) throw ConfigError("eval.bootstrap must be >= 100");
  if (!(c.eval.level > 0.0 && c.eval.level < 1.0)) throw ConfigError("eval.level must be in (0, 1)");
  if (!(c.eval.weight_cap >= 1.0)) throw ConfigError("eval.weight_cap must be >= 1");
  if (c.cv.k < 2) throw ConfigError("cv.k must be >= 2");
  if (c.cv.repeats < 1) throw ConfigError("cv.repeats must be >= 1");
  if (c.simulate.n < 10) throw ConfigError("simulate.n must be >= 10");
  if (c.train.augmentation.dropout < 0.0 || c.train.augmentation.dropout > 1.0) {
    throw ConfigError("train.dropout must be in [0, 1]");
  }
  if (c.train.augmentation.noise < 0.0) throw ConfigError("train.noise must be >= 0");
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"backbone", backbone_name(c.model.backbone)},
                {"d", c.model.latent},
                {"d_t", c.model.time_embed},
                {"d_h", c.model.lstm_hidden},
                {"d_c", c.model.context},
                {"T", c.model.horizon},
                {"K", c.model.bins.size()},
                {"bin_edges", c.model.bins.edges()},
                {"cascade", c.model.cascade},
                {"integrator", integrator_name(c.model.integrator)},
                {"static_zero_update", c.model.zero_update}};
  j["train"] = {{"lr", c.train.optimizer.lr},
                {"beta1", c.train.optimizer.beta1},
                {"beta2", c.train.optimizer.beta2},
                {"eps", c.train.optimizer.eps},
                {"weight_decay", c.train.optimizer.weight_decay},
                {"batch", c.train.batch_size},
                {"alpha", c.train.weights.alpha},
                {"beta", c.train.weights.beta},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"scheduler_factor", c.train.plateau_factor},
                {"scheduler_patience", c.train.plateau_patience},
                {"seed", c.seed},
                {"augment", c.train.augment},
                {"dropout", c.train.augmentation.dropout},
                {"noise", c.train.augmentation.noise}};
  j["eval"] = {{"horizons", c.eval.horizons},
               {"tau", c.tau()},
               {"bootstrap", c.eval.bootstrap},
               {"level", c.eval.level},
               {"weight_cap", c.eval.weight_cap}};
  j["cv"] = {{"k", c.cv.k}, {"repeats", c.cv.repeats}};
  const auto& sc = c.simulate.scenario;
  j["simulate"] = {{"n", c.simulate.n},
                   {"signal", sc.signal},
                   {"censoring", sc.censoring},
                   {"hazard_ratio", sc.hazard_ratio},
                   {"os_hazard", sc.os_hazard},
                   {"dfs_hazard", sc.dfs_hazard},
                   {"region_absent", sc.region_absent},
                   {"region_len", sc.schema.region_len},
                   {"clinical_len", sc.schema.clinical_len}};
  j["paths"] = {{"cohort", c.cohort_path.string()}, {"output", c.output_dir.string()}};
  return j;
}

}  // namespace dypro
