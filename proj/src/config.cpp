#include "safesparse/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace safesparse {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, _] : node_.items())
      if (!known.count(k)) throw ConfigError(where(k) + ": unknown field");
  }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!node_.contains(key)) return;
    const json& v = node_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where(key) + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.get<long long>() < 0) throw ConfigError(where(key) + ": must be non-negative");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <typename Enum, typename Parse>
  void get_enum(const char* key, Enum& out, Parse parse) const {
    if (!node_.contains(key)) return;
    std::string s;
    get(key, s);
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  std::optional<Reader> section(const char* key) const {
    if (!node_.contains(key)) return std::nullopt;
    return Reader(node_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  const json& node() const { return node_; }
  std::string where(const std::string& key = {}) const {
    std::string p = path_;
    if (!key.empty()) p = p.empty() ? key : p + "." + key;
    return "field '" + (p.empty() ? std::string("<root>") : p) + "'";
  }

 private:
  const json& node_;
  std::string path_;
};

void read_experiment(const Reader& r, ExperimentConfig& c) {
  r.get("n_clients", c.n_clients);
  r.get("rounds", c.rounds);
  r.get("seed", c.seed);
  if (auto t = r.section("task")) {
    t->allow({"kind", "dim", "mu", "L", "heterogeneity", "grad_noise", "steps_per_epoch",
              "client_samples", "num_classes", "features", "hidden", "train_samples",
              "test_samples", "separation", "seed"});
    t->get_enum("kind", c.task.kind, parse_task);
    t->get("dim", c.task.dim);
    t->get("mu", c.task.mu);
    t->get("L", c.task.L);
    t->get("heterogeneity", c.task.heterogeneity);
    t->get("grad_noise", c.task.grad_noise);
    t->get("steps_per_epoch", c.task.steps_per_epoch);
    t->get("client_samples", c.task.client_samples);
    t->get("num_classes", c.task.num_classes);
    t->get("features", c.task.features);
    t->get("hidden", c.task.hidden);
    t->get("train_samples", c.task.train_samples);
    t->get("test_samples", c.task.test_samples);
    t->get("separation", c.task.separation);
    t->get("seed", c.task.seed);
  }
  if (auto p = r.section("partition")) {
    p->allow({"mode", "alpha"});
    p->get_enum("mode", c.partition, parse_partition);
    p->get("alpha", c.alpha);
  }
  if (auto a = r.section("attack")) {
    a->allow({"kind", "attacker_ratio", "start_round", "scale_factor", "ipm_epsilon", "mask_mode",
              "collude"});
    a->get_enum("kind", c.attack.kind, parse_attack);
    a->get("attacker_ratio", c.attack.attacker_ratio);
    a->get("start_round", c.attack.start_round);
    a->get("scale_factor", c.attack.scale_factor);
    a->get("ipm_epsilon", c.attack.ipm_epsilon);
    a->get_enum("mask_mode", c.attack.mask_mode, parse_mask_mode);
    a->get("collude", c.attack.collude);
  }
  if (auto g = r.section("aggregator")) {
    g->allow({"kind", "beta", "gamma", "trim_pct", "krum_neighbor_count", "krum_n_attackers",
              "krum_k_select", "rfa_tol", "rfa_max_iters"});
    g->get_enum("kind", c.aggregator, parse_aggregator);
    g->get("beta", c.agg.beta);
    g->get("gamma", c.agg.gamma);
    g->get("trim_pct", c.agg.trim_pct);
    g->get_enum("krum_neighbor_count", c.agg.krum_neighbors, parse_krum_neighbors);
    if (g->node().contains("krum_n_attackers") && !g->node().at("krum_n_attackers").is_null()) {
      std::size_t n = 0;
      g->get("krum_n_attackers", n);
      c.agg.krum_n_attackers = n;
    }
    if (g->node().contains("krum_k_select") && !g->node().at("krum_k_select").is_null()) {
      std::size_t k = 0;
      g->get("krum_k_select", k);
      c.agg.krum_k_select = k;
    }
    g->get("rfa_tol", c.agg.rfa_tol);
    g->get("rfa_max_iters", c.agg.rfa_max_iters);
  }
  if (auto s = r.section("sparsify")) {
    s->allow({"pack_size", "topk_ratio", "enabled"});
    s->get("pack_size", c.pack_size);
    s->get("topk_ratio", c.topk_ratio);
    s->get("enabled", c.sparse);
  }
  if (auto l = r.section("local")) {
    l->allow({"epochs", "batch_size", "optimizer", "lr", "beta1", "beta2", "eps", "schedule",
              "schedule_mu", "schedule_a"});
    l->get("epochs", c.local_epochs);
    l->get("batch_size", c.optimizer.batch_size);
    l->get_enum("optimizer", c.optimizer.kind, parse_optimizer);
    l->get("lr", c.optimizer.lr);
    l->get("beta1", c.optimizer.beta1);
    l->get("beta2", c.optimizer.beta2);
    l->get("eps", c.optimizer.eps);
    l->get_enum("schedule", c.optimizer.schedule, parse_schedule);
    l->get("schedule_mu", c.optimizer.schedule_mu);
    l->get("schedule_a", c.optimizer.schedule_a);
  }
}

template <typename T, typename Parse>
std::vector<T> read_enum_list(const Reader& r, const char* key, Parse parse) {
  std::vector<T> out;
  if (!r.node().contains(key)) return out;
  const json& arr = r.node().at(key);
  if (!arr.is_array()) throw ConfigError(r.where(key) + ": expected an array");
  for (const auto& v : arr) {
    if (!v.is_string()) throw ConfigError(r.where(key) + ": expected strings");
    try {
      out.push_back(parse(v.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(r.where(key) + ": " + e.what());
    }
  }
  return out;
}

std::vector<double> read_number_list(const Reader& r, const char* key) {
  std::vector<double> out;
  if (!r.node().contains(key)) return out;
  const json& arr = r.node().at(key);
  if (!arr.is_array()) throw ConfigError(r.where(key) + ": expected an array");
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(r.where(key) + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

json experiment_json(const ExperimentConfig& c) {
  json j;
  j["n_clients"] = c.n_clients;
  j["rounds"] = c.rounds;
  j["seed"] = c.seed;
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"dim", c.task.dim},
               {"mu", c.task.mu},
               {"L", c.task.L},
               {"heterogeneity", c.task.heterogeneity},
               {"grad_noise", c.task.grad_noise},
               {"steps_per_epoch", c.task.steps_per_epoch},
               {"client_samples", c.task.client_samples},
               {"num_classes", c.task.num_classes},
               {"features", c.task.features},
               {"hidden", c.task.hidden},
               {"train_samples", c.task.train_samples},
               {"test_samples", c.task.test_samples},
               {"separation", c.task.separation},
               {"seed", c.task.seed}};
  j["partition"] = {{"mode", to_string(c.partition)}, {"alpha", c.alpha}};
  j["attack"] = {{"kind", to_string(c.attack.kind)},
                 {"attacker_ratio", c.attack.attacker_ratio},
                 {"start_round", c.attack.start_round},
                 {"scale_factor", c.attack.scale_factor},
                 {"ipm_epsilon", c.attack.ipm_epsilon},
                 {"mask_mode", to_string(c.attack.mask_mode)},
                 {"collude", c.attack.collude}};
  json g = {{"kind", to_string(c.aggregator)},
            {"beta", c.agg.beta},
            {"gamma", c.agg.gamma},
            {"trim_pct", c.agg.trim_pct},
            {"krum_neighbor_count", to_string(c.agg.krum_neighbors)},
            {"rfa_tol", c.agg.rfa_tol},
            {"rfa_max_iters", c.agg.rfa_max_iters}};
  g["krum_n_attackers"] = c.agg.krum_n_attackers ? json(*c.agg.krum_n_attackers) : json(nullptr);
  g["krum_k_select"] = c.agg.krum_k_select ? json(*c.agg.krum_k_select) : json(nullptr);
  j["aggregator"] = g;
  j["sparsify"] = {{"pack_size", c.pack_size}, {"topk_ratio", c.topk_ratio}, {"enabled", c.sparse}};
  j["local"] = {{"epochs", c.local_epochs},
                {"batch_size", c.optimizer.batch_size},
                {"optimizer", to_string(c.optimizer.kind)},
                {"lr", c.optimizer.lr},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps", c.optimizer.eps},
                {"schedule", to_string(c.optimizer.schedule)},
                {"schedule_mu", c.optimizer.schedule_mu},
                {"schedule_a", c.optimizer.schedule_a}};
  return j;
}

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

ConfigFile parse_config_text(const std::string& text) {
  json root;
  bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
  if (blank) {
    root = json::object();
  } else {
    try {
      root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw ConfigError("parse error at " + line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": " +
                        e.what());
    }
  }
  Reader r(root, "");
  r.allow({"n_clients", "rounds", "seed", "task", "partition", "attack", "aggregator", "sparsify",
           "local", "sweep", "export", "verify_bound"});
  ConfigFile cf;
  read_experiment(r, cf.experiment);
  if (auto s = r.section("sweep")) {
    s->allow({"beta", "gamma", "attacker_ratio", "topk_ratio", "attack", "aggregator"});
    SweepGrid g;
    g.beta = read_number_list(*s, "beta");
    g.gamma = read_number_list(*s, "gamma");
    g.attacker_ratio = read_number_list(*s, "attacker_ratio");
    g.topk_ratio = read_number_list(*s, "topk_ratio");
    g.attack = read_enum_list<AttackKind>(*s, "attack", parse_attack);
    g.aggregator = read_enum_list<AggregatorKind>(*s, "aggregator", parse_aggregator);
    cf.sweep = g;
  }
  if (auto e = r.section("export")) {
    e->allow({"round"});
    e->get("round", cf.export_round);
  }
  if (auto v = r.section("verify_bound")) {
    v->allow({"trials"});
    v->get("trials", cf.bound_trials);
  }
  try {
    validate(cf.experiment);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("validation failed: ") + e.what());
  }
  return cf;
}

ConfigFile parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig parse_experiment_text(const std::string& text) {
  return parse_config_text(text).experiment;
}

std::string serialize_experiment(const ExperimentConfig& cfg) {
  return experiment_json(cfg).dump(2) + "\n";
}

std::string serialize_config(const ConfigFile& cf) {
  json j = experiment_json(cf.experiment);
  if (cf.sweep) {
    json s = json::object();
    auto names = [](const auto& v) {
      json a = json::array();
      for (auto k : v) a.push_back(std::string(to_string(k)));
      return a;
    };
    if (!cf.sweep->beta.empty()) s["beta"] = cf.sweep->beta;
    if (!cf.sweep->gamma.empty()) s["gamma"] = cf.sweep->gamma;
    if (!cf.sweep->attacker_ratio.empty()) s["attacker_ratio"] = cf.sweep->attacker_ratio;
    if (!cf.sweep->topk_ratio.empty()) s["topk_ratio"] = cf.sweep->topk_ratio;
    if (!cf.sweep->attack.empty()) s["attack"] = names(cf.sweep->attack);
    if (!cf.sweep->aggregator.empty()) s["aggregator"] = names(cf.sweep->aggregator);
    j["sweep"] = s;
  }
  j["export"] = {{"round", cf.export_round}};
  j["verify_bound"] = {{"trials", cf.bound_trials}};
  return j.dump(2) + "\n";
}

}  // namespace safesparse
