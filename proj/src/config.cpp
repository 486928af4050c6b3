#include "dmtl/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "dmtl/errors.hpp"

namespace dmtl {

using json = nlohmann::ordered_json;

std::vector<TaskSpec> default_tasks() {
  return {{"verification", TaskKind::verification, ModalitySelection::both},
          {"identify_a", TaskKind::identification, ModalitySelection::A},
          {"identify_b", TaskKind::identification, ModalitySelection::B}};
}

std::string to_string(TaskKind k) { return k == TaskKind::verification ? "verification" : "identification"; }

std::string to_string(ModalitySelection m) {
  switch (m) {
    case ModalitySelection::A: return "A";
    case ModalitySelection::B: return "B";
    case ModalitySelection::both: return "both";
  }
  return "both";
}

std::string to_string(ThetaUpdate t) { return t == ThetaUpdate::weighted ? "weighted" : "unweighted_sum"; }

namespace {

// Walks one JSON object; every key must be consumed, so unknown keys are
// reported by their full dotted path.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, where("") + ": expected an object");
  }

  void mark(const std::string& key) { seen_.insert(key); }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  Section section(const std::string& key) {
    seen_.insert(key);
    return Section(node_.at(key), where(key));
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key), where(key) + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void read_enum(const std::string& key, T& out, Parse parse) {
    std::string s;
    read(key, s);
    if (!node_.contains(key)) return;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      throw ConfigError(where(key), where(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(where(key), "unknown key '" + where(key) + "'");
    }
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

ModalityParams parse_modality(Section s) {
  ModalityParams m;
  s.read("noise_sigma", m.noise_sigma);
  s.read("samples_per_class", m.samples_per_class);
  s.finish();
  return m;
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "verification") return TaskKind::verification;
  if (s == "identification") return TaskKind::identification;
  throw ArgumentError("unknown task kind '" + s + "'");
}

ModalitySelection parse_modality_selection(const std::string& s) {
  if (s == "A") return ModalitySelection::A;
  if (s == "B") return ModalitySelection::B;
  if (s == "both") return ModalitySelection::both;
  throw ArgumentError("unknown modality '" + s + "'");
}

ThetaUpdate parse_theta_update(const std::string& s) {
  if (s == "weighted") return ThetaUpdate::weighted;
  if (s == "unweighted_sum") return ThetaUpdate::unweighted_sum;
  throw ArgumentError("unknown theta_update '" + s + "'");
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, field + ": " + message);
}

}  // namespace

void TrainConfig::finalize() {
  require(dataset.synthetic.has_value() || dataset.csv.has_value(), "dataset",
          "a synthetic or csv dataset is required");
  require(!(dataset.synthetic && dataset.csv), "dataset", "give either synthetic or csv, not both");
  if (dataset.synthetic) {
    try {
      dataset.synthetic->validate();
    } catch (const ArgumentError& e) {
      throw ConfigError("dataset.synthetic", e.what());
    }
    require(dataset.test_samples_per_class >= 1, "dataset.test_samples_per_class", "must be at least 1");
  }
  require(batch_size >= 2, "batch_size", "must be at least 2");
  if (tasks.empty()) tasks = default_tasks();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    require(!tasks[i].name.empty(), "tasks[" + std::to_string(i) + "].name", "must not be empty");
  }
  require(losses.alpha >= 0.0, "losses.alpha", "must be non-negative");
  require(losses.beta > 0.0 && losses.beta <= 1.0, "losses.beta", "must lie in (0,1]");
  require(model.bottleneck >= 1, "model.bottleneck", "must be at least 1");
  for (auto w : model.trunk_widths) require(w >= 1, "model.trunk", "widths must be positive");
  for (auto w : model.branch_hidden) require(w >= 1, "model.branch_hidden", "widths must be positive");
  require(model.dropout_rate >= 0.0 && model.dropout_rate < 1.0, "model.dropout", "must lie in [0,1)");
  require(optimizer.base_lr > 0.0, "optimizer.base_lr", "must be positive");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum", "must lie in [0,1)");
  require(optimizer.rho >= 0.0 && optimizer.rho < 1.0, "optimizer.rho", "must lie in [0,1)");
  require(optimizer.weight_decay >= 0.0, "optimizer.weight_decay", "must be non-negative");
  require(optimizer.epsilon > 0.0, "optimizer.epsilon", "must be positive");
  if (optimizer.milestones.empty()) optimizer.milestones = default_milestones(iterations);
  for (std::size_t i = 1; i < optimizer.milestones.size(); ++i) {
    require(optimizer.milestones[i] > optimizer.milestones[i - 1], "optimizer.milestones",
            "must be strictly increasing");
  }
  if (scheduler.lr) require(*scheduler.lr > 0.0, "scheduler.lr", "must be positive");
  if (scheduler.kind == SchedulerKind::static_weights) {
    require(scheduler.static_weights.size() == tasks.size(), "scheduler.static_weights",
            "needs one weight per task");
    try {
      validate_static_weights(scheduler.static_weights);
    } catch (const ArgumentError& e) {
      throw ConfigError("scheduler.static_weights", std::string("scheduler.static_weights: ") + e.what());
    }
  }
}

TrainConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("config is not valid JSON: ") + e.what());
  }
  TrainConfig c;
  Section top(root, "");
  top.read("seed", c.seed);
  top.read("iterations", c.iterations);
  top.read("batch_size", c.batch_size);
  top.read_enum("theta_update", c.theta_update, parse_theta_update);

  if (top.has("dataset")) {
    Section ds = top.section("dataset");
    if (ds.has("synthetic")) {
      Section syn = ds.section("synthetic");
      ModalitySpec spec;
      syn.read("num_classes", spec.num_classes);
      syn.read("dim", spec.dim);
      syn.read("prototype_scale", spec.prototype_scale);
      syn.read("gap", spec.gap);
      syn.read("seed", spec.seed);
      if (syn.has("a")) spec.a = parse_modality(syn.section("a"));
      if (syn.has("b")) spec.b = parse_modality(syn.section("b"));
      syn.finish();
      c.dataset.synthetic = spec;
    }
    ds.read("test_samples_per_class", c.dataset.test_samples_per_class);
    if (ds.has("csv")) {
      Section cs = ds.section("csv");
      CsvSource src;
      std::string train, test;
      cs.read("train", train);
      cs.read("test", test);
      require(!train.empty(), "dataset.csv.train", "path is required");
      require(!test.empty(), "dataset.csv.test", "path is required");
      src.train = train;
      src.test = test;
      cs.read("features", src.schema.feature_columns);
      cs.read("label", src.schema.label_column);
      cs.read("modality", src.schema.modality_column);
      require(!src.schema.feature_columns.empty(), "dataset.csv.features", "at least one column is required");
      cs.finish();
      c.dataset.csv = src;
    }
    ds.finish();
  }

  if (top.has("model")) {
    Section m = top.section("model");
    m.read("trunk", c.model.trunk_widths);
    m.read("branch_hidden", c.model.branch_hidden);
    m.read("bottleneck", c.model.bottleneck);
    m.read_enum("activation", c.model.activation, [](const std::string& s) { return parse_activation(s); });
    m.read("dropout", c.model.dropout_rate);
    m.finish();
  }

  if (top.has("tasks")) {
    const json& arr = top.raw("tasks");
    require(arr.is_array(), "tasks", "must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section t(arr[i], "tasks[" + std::to_string(i) + "]");
      TaskSpec spec;
      t.read("name", spec.name);
      t.read_enum("kind", spec.kind, parse_task_kind);
      t.read_enum("modality", spec.modality, parse_modality_selection);
      t.finish();
      c.tasks.push_back(spec);
    }
  }

  if (top.has("losses")) {
    Section l = top.section("losses");
    l.read("alpha", c.losses.alpha);
    l.read("beta", c.losses.beta);
    l.read_enum("center_form", c.losses.center_form, [](const std::string& s) { return parse_center_form(s); });
    l.finish();
  }

  if (top.has("optimizer")) {
    Section o = top.section("optimizer");
    o.read("base_lr", c.optimizer.base_lr);
    o.read("momentum", c.optimizer.momentum);
    o.read("rho", c.optimizer.rho);
    o.read("weight_decay", c.optimizer.weight_decay);
    o.read("epsilon", c.optimizer.epsilon);
    o.read("milestones", c.optimizer.milestones);
    o.finish();
  }

  if (top.has("scheduler")) {
    Section s = top.section("scheduler");
    s.read_enum("kind", c.scheduler.kind, [](const std::string& v) { return parse_scheduler_kind(v); });
    s.read_enum("gradient", c.scheduler.gradient, [](const std::string& v) { return parse_gradient_form(v); });
    s.read("static_weights", c.scheduler.static_weights);
    if (s.has("lr")) {
      double lr = 0.0;
      s.read("lr", lr);
      c.scheduler.lr = lr;
    } else {
      s.mark("lr");
    }
    s.read("train_bias", c.scheduler.train_bias);
    s.finish();
  }

  if (top.has("output")) {
    Section o = top.section("output");
    std::string dir = c.output.dir.string();
    o.read("dir", dir);
    c.output.dir = dir;
    o.read("log_every", c.output.log_every);
    o.read("checkpoint_every", c.output.checkpoint_every);
    o.read("eval_every", c.output.eval_every);
    o.finish();
  }

  if (top.has("sweep")) {
    Section s = top.section("sweep");
    std::string remainder = "equal";
    s.read("remainder", remainder);
    require(remainder == "equal" || remainder == "proportional", "sweep.remainder",
            "must be 'equal' or 'proportional'");
    c.sweep.equal_remainder = remainder == "equal";
    s.finish();
  }
  top.finish();
  c.finalize();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const TrainConfig& c) {
  json root;
  root["seed"] = c.seed;
  root["iterations"] = c.iterations;
  root["batch_size"] = c.batch_size;
  root["theta_update"] = to_string(c.theta_update);

  json ds = json::object();
  if (c.dataset.synthetic) {
    const auto& s = *c.dataset.synthetic;
    ds["synthetic"] = {{"num_classes", s.num_classes},
                       {"dim", s.dim},
                       {"prototype_scale", s.prototype_scale},
                       {"gap", s.gap},
                       {"seed", s.seed},
                       {"a", {{"noise_sigma", s.a.noise_sigma}, {"samples_per_class", s.a.samples_per_class}}},
                       {"b", {{"noise_sigma", s.b.noise_sigma}, {"samples_per_class", s.b.samples_per_class}}}};
  }
  ds["test_samples_per_class"] = c.dataset.test_samples_per_class;
  if (c.dataset.csv) {
    const auto& s = *c.dataset.csv;
    ds["csv"] = {{"train", s.train.string()},
                 {"test", s.test.string()},
                 {"features", s.schema.feature_columns},
                 {"label", s.schema.label_column},
                 {"modality", s.schema.modality_column}};
  }
  root["dataset"] = ds;

  root["model"] = {{"trunk", c.model.trunk_widths},
                   {"branch_hidden", c.model.branch_hidden},
                   {"bottleneck", c.model.bottleneck},
                   {"activation", std::string(to_string(c.model.activation))},
                   {"dropout", c.model.dropout_rate}};

  json tasks = json::array();
  for (const auto& t : c.tasks) {
    tasks.push_back({{"name", t.name}, {"kind", to_string(t.kind)}, {"modality", to_string(t.modality)}});
  }
  root["tasks"] = tasks;

  root["losses"] = {{"alpha", c.losses.alpha},
                    {"beta", c.losses.beta},
                    {"center_form", std::string(to_string(c.losses.center_form))}};
  root["optimizer"] = {{"base_lr", c.optimizer.base_lr},
                       {"momentum", c.optimizer.momentum},
                       {"rho", c.optimizer.rho},
                       {"weight_decay", c.optimizer.weight_decay},
                       {"epsilon", c.optimizer.epsilon},
                       {"milestones", c.optimizer.milestones}};
  json sched = {{"kind", std::string(to_string(c.scheduler.kind))},
                {"gradient", std::string(to_string(c.scheduler.gradient))},
                {"static_weights", c.scheduler.static_weights}};
  sched["lr"] = c.scheduler.lr ? json(*c.scheduler.lr) : json(nullptr);
  sched["train_bias"] = c.scheduler.train_bias;
  root["scheduler"] = sched;
  root["output"] = {{"dir", c.output.dir.string()},
                    {"log_every", c.output.log_every},
                    {"checkpoint_every", c.output.checkpoint_every},
                    {"eval_every", c.output.eval_every}};
  root["sweep"] = {{"remainder", c.sweep.equal_remainder ? "equal" : "proportional"}};
  return root.dump(2) + "\n";
}

}  // namespace dmtl
