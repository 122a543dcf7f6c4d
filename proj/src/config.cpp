#include <fstream>
#include <set>
#include <sstream>

#include "arks/cli.hpp"
#include "arks/errors.hpp"
#include "json.hpp"

namespace arks {

using json = nlohmann::ordered_json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::attack_sweep: return "attack-sweep";
    case ExperimentKind::shift_sweep: return "shift-sweep";
    case ExperimentKind::certify: return "certify";
    case ExperimentKind::rls: return "rls";
    case ExperimentKind::selftest: return "selftest";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::train, ExperimentKind::attack_sweep, ExperimentKind::shift_sweep,
                 ExperimentKind::certify, ExperimentKind::rls, ExperimentKind::selftest}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

namespace {

std::string to_string(SupremumMode m) { return m == SupremumMode::grid_oracle ? "grid-oracle" : "ascent"; }

SupremumMode parse_supremum_mode(const std::string& s) {
  if (s == "grid-oracle") return SupremumMode::grid_oracle;
  if (s == "ascent") return SupremumMode::ascent;
  throw ConfigError("unknown supremum mode '" + s + "'");
}

// Reads the keys of one JSON object and complains about anything left over.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <class T, class Parse>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    bool present = has(key);
    get(key, s);
    if (!present) return;
    try {
      out = parse(s);
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  // Nested object or null; `fn(Reader&)` fills it.
  template <class Fn>
  bool nested(const char* key, Fn fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return false;
    Reader r(*it, where(key));
    fn(r);
    r.finish();
    return true;
  }

  bool has(const char* key) const { return j_.contains(key); }
  bool is_null(const char* key) const { return j_.contains(key) && j_.at(key).is_null(); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key().c_str()));
    }
  }

  std::string where(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_box(Reader& r, Box& b) {
  r.get("lo", b.lo);
  r.get("hi", b.hi);
}

json box_json(const std::optional<Box>& b) {
  if (!b) return nullptr;
  return json{{"lo", b->lo}, {"hi", b->hi}};
}

void read_inner(Reader& r, InnerSolverConfig& c) {
  r.get("steps", c.steps);
  r.get("step_size", c.step_size);
  r.get("restarts", c.restarts);
  r.get("restart_radius", c.restart_radius);
  c.box.reset();
  r.nested("box", [&](Reader& b) { read_box(b, c.box.emplace()); });
  r.get("log_scale", c.log_scale);
  r.get("seed", c.seed);
  r.get("grad_tol", c.grad_tol);
  r.get("ceiling", c.ceiling);
  r.get("grid_points", c.grid_points);
}

json inner_json(const InnerSolverConfig& c) {
  return json{{"steps", c.steps},         {"step_size", c.step_size}, {"restarts", c.restarts},
              {"restart_radius", c.restart_radius}, {"box", box_json(c.box)},     {"log_scale", c.log_scale},
              {"seed", c.seed},           {"grad_tol", c.grad_tol},   {"ceiling", c.ceiling},
              {"grid_points", c.grid_points}};
}

void read_attack(Reader& r, AttackConfig& a) {
  r.get_enum("kind", a.kind, parse_attack_kind);
  r.get("delta", a.delta);
  r.get("steps", a.steps);
  r.get("step_size", a.step_size);
  a.clip.reset();
  r.nested("clip", [&](Reader& c) {
    ClipRange& cr = a.clip.emplace();
    c.get("lo", cr.lo);
    c.get("hi", cr.hi);
  });
  r.get_enum("mode", a.mode, parse_attack_mode);
  r.get("random_start", a.random_start);
  r.get("seed", a.seed);
}

json attack_json(const AttackConfig& a) {
  return json{{"kind", to_string(a.kind)},
              {"delta", a.delta},
              {"steps", a.steps},
              {"step_size", a.step_size},
              {"clip", a.clip ? json{{"lo", a.clip->lo}, {"hi", a.clip->hi}} : json(nullptr)},
              {"mode", to_string(a.mode)},
              {"random_start", a.random_start},
              {"seed", a.seed}};
}

void read_train(Reader& r, TrainConfig& t) {
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("lr", t.lr);
  r.get("lr_decay_epochs", t.lr_decay_epochs);
  r.get("lr_decay_factor", t.lr_decay_factor);
  r.get("weight_decay", t.weight_decay);
  r.get_enum("method", t.method, parse_method);
  r.get("sigma", t.kernel.sigma);
  r.get_enum("cost", t.kernel.cost.family, parse_cost_family);
  r.get("scale_grad_by_kernel", t.scale_grad_by_kernel);
  r.get("wrm_y", t.wrm_y);
  r.get_enum("wrm_cost", t.wrm_cost.family, parse_cost_family);
  r.nested("pgd", [&](Reader& p) { read_attack(p, t.pgd); });
  t.ro_domain.reset();
  r.nested("ro_domain", [&](Reader& b) { read_box(b, t.ro_domain.emplace()); });
  r.nested("inner", [&](Reader& i) { read_inner(i, t.inner); });
  r.get("swa", t.swa);
  r.get("swa_start", t.swa_start);
}

json train_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"lr", t.lr},
              {"lr_decay_epochs", t.lr_decay_epochs},
              {"lr_decay_factor", t.lr_decay_factor},
              {"weight_decay", t.weight_decay},
              {"method", to_string(t.method)},
              {"sigma", t.kernel.sigma},
              {"cost", to_string(t.kernel.cost.family)},
              {"scale_grad_by_kernel", t.scale_grad_by_kernel},
              {"wrm_y", t.wrm_y},
              {"wrm_cost", to_string(t.wrm_cost.family)},
              {"pgd", attack_json(t.pgd)},
              {"ro_domain", box_json(t.ro_domain)},
              {"inner", inner_json(t.inner)},
              {"swa", t.swa},
              {"swa_start", t.swa_start}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seed list is empty");
  if (kind == ExperimentKind::selftest) return;
  if (csv.has_value() == synthetic.has_value()) throw ConfigError("exactly one data source (csv or synthetic) is required");
  if (csv) {
    if (csv->train.empty()) throw ConfigError("data.csv.train is empty");
    for (const std::string& p : {csv->train, csv->test}) {
      if (!p.empty() && !std::filesystem::exists(p)) throw IoError("data file not found: " + p);
    }
  }
  if (synthetic) synthetic->validate();
  const bool rls = kind == ExperimentKind::rls;
  if (rls && (!synthetic || synthetic->kind != SyntheticKind::rls)) throw ConfigError("rls experiments need rls data");
  if (!rls && synthetic && synthetic->kind == SyntheticKind::rls) throw ConfigError("rls data needs an rls experiment");
  if (!rls) {
    model.validate();
    validate_compatible(model, loss);
  }
  if (!(xi_lo < xi_hi)) throw ConfigError("xi range is empty");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("sigmas must be positive");
  }
  if (kind == ExperimentKind::attack_sweep) {
    if (deltas.empty()) throw ConfigError("attack-sweep needs attack.deltas");
    attack.validate();
    for (double d : deltas) {
      if (!(d >= 0.0)) throw ConfigError("attack deltas must be >= 0");
    }
  }
  if ((kind == ExperimentKind::shift_sweep || rls) && shifts.empty()) throw ConfigError("shift.amounts is empty");
  if (tuning) {
    if (tuning->sigmas.empty()) throw ConfigError("attack.tune.sigmas is empty");
    if (!(tuning->validation_fraction > 0.0 && tuning->validation_fraction < 1.0)) {
      throw ConfigError("attack.tune.validation_fraction must lie in (0, 1)");
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(j, "");
  r.get_enum("experiment", c.kind, parse_experiment_kind);
  if (!r.has("experiment")) throw ConfigError("missing key experiment");
  r.get("seeds", c.seeds);

  r.nested("data", [&](Reader& d) {
    d.nested("csv", [&](Reader& s) {
      CsvSource& cs = c.csv.emplace();
      s.get("train", cs.train);
      s.get("test", cs.test);
      s.get("standardize", cs.standardize);
    });
    d.nested("synthetic", [&](Reader& s) {
      SyntheticSpec& sp = c.synthetic.emplace();
      s.get_enum("kind", sp.kind, parse_synthetic_kind);
      s.get("n_train", sp.n_train);
      s.get("n_test", sp.n_test);
      s.get("noise", sp.noise);
      s.get("seed", sp.seed);
      s.get("dim", sp.dim);
      s.get("rls_rows", sp.rls_rows);
      s.get("rls_a1_scale", sp.rls_a1_scale);
    });
  });
  r.nested("model", [&](Reader& m) {
    m.get_enum("family", c.model.family, parse_model_family);
    m.get("widths", c.model.widths);
    m.get_enum("activation", c.model.activation, parse_activation);
    m.get("input_dim", c.model.input_dim);
    m.get("output_dim", c.model.output_dim);
  });
  r.nested("loss", [&](Reader& l) {
    l.get_enum("family", c.loss.family, parse_loss_family);
    l.get("eps_pos", c.loss.eps_pos);
  });
  r.nested("train", [&](Reader& t) { read_train(t, c.train); });
  std::vector<std::string> methods;
  r.get("methods", methods);
  for (const auto& m : methods) c.methods.push_back(parse_method(m));
  r.get("sigmas", c.sigmas);
  r.nested("attack", [&](Reader& a) {
    read_attack(a, c.attack);
    a.get("deltas", c.deltas);
    a.nested("tune", [&](Reader& t) {
      SigmaTuning& st = c.tuning.emplace();
      t.get("sigmas", st.sigmas);
      t.get("validation_fraction", st.validation_fraction);
      t.get("max_clean_gap", st.max_clean_gap);
      t.get("delta", st.delta);
    });
  });
  r.nested("shift", [&](Reader& s) {
    s.get_enum("kind", c.shift, parse_shift_kind);
    s.get("amounts", c.shifts);
  });
  r.nested("certify", [&](Reader& s) {
    s.get("displacement", c.certify.displacement);
    s.get_enum("mode", c.certify.check.mode, parse_supremum_mode);
    s.get("grid_lo", c.certify.check.grid_lo);
    s.get("grid_hi", c.certify.check.grid_hi);
    s.get("grid_step", c.certify.check.grid_step);
    s.nested("inner", [&](Reader& i) { read_inner(i, c.certify.check.inner); });
  });
  r.nested("rls", [&](Reader& s) {
    s.get("xi_lo", c.xi_lo);
    s.get("xi_hi", c.xi_hi);
  });
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json data = json::object();
  if (c.csv) data["csv"] = json{{"train", c.csv->train}, {"test", c.csv->test}, {"standardize", c.csv->standardize}};
  if (c.synthetic) {
    const SyntheticSpec& s = *c.synthetic;
    data["synthetic"] = json{{"kind", to_string(s.kind)}, {"n_train", s.n_train}, {"n_test", s.n_test},
                             {"noise", s.noise},          {"seed", s.seed},       {"dim", s.dim},
                             {"rls_rows", s.rls_rows},    {"rls_a1_scale", s.rls_a1_scale}};
  }
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.push_back(to_string(m));
  json attack = attack_json(c.attack);
  attack["deltas"] = c.deltas;
  attack["tune"] = c.tuning ? json{{"sigmas", c.tuning->sigmas},
                                   {"validation_fraction", c.tuning->validation_fraction},
                                   {"max_clean_gap", c.tuning->max_clean_gap},
                                   {"delta", c.tuning->delta}}
                            : json(nullptr);
  const CertificateCheckConfig& cc = c.certify.check;
  json j{{"experiment", to_string(c.kind)},
         {"seeds", c.seeds},
         {"data", data},
         {"model",
          {{"family", to_string(c.model.family)},
           {"widths", c.model.widths},
           {"activation", to_string(c.model.activation)},
           {"input_dim", c.model.input_dim},
           {"output_dim", c.model.output_dim}}},
         {"loss", {{"family", to_string(c.loss.family)}, {"eps_pos", c.loss.eps_pos}}},
         {"train", train_json(c.train)},
         {"methods", methods},
         {"sigmas", c.sigmas},
         {"attack", attack},
         {"shift", {{"kind", to_string(c.shift)}, {"amounts", c.shifts}}},
         {"certify",
          {{"displacement", c.certify.displacement},
           {"mode", to_string(cc.mode)},
           {"grid_lo", cc.grid_lo},
           {"grid_hi", cc.grid_hi},
           {"grid_step", cc.grid_step},
           {"inner", inner_json(cc.inner)}}},
         {"rls", {{"xi_lo", c.xi_lo}, {"xi_hi", c.xi_hi}}}};
  return j.dump(2) + "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 1;
  return 2;
}

}  // namespace arks
