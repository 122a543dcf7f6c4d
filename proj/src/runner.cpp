#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>

#include "arks/cli.hpp"
#include "arks/errors.hpp"
#include "arks/random.hpp"
#include "json.hpp"

namespace arks {

namespace {

using json = nlohmann::ordered_json;

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed for " + p.string());
}

// Result tables kept in memory and rewritten after every seed, so a failure
// leaves everything finished so far on disk.
struct Outputs {
  std::filesystem::path dir;
  std::string train = "method,seed,epoch,objective\n";
  std::string params = "method,seed,index,value\n";
  std::string sweep = "method,seed,protocol,mode,param,error,mean_loss,n\n";
  std::string tuning = "method,seed,sigma,val_clean_error,val_attack_error,selected\n";
  json certificates = json::array();
  bool has_sweep = false, has_tuning = false, has_cert = false, has_train = false;

  void add_report(const std::string& label, const TrainReport& rep) {
    has_train = true;
    for (std::size_t e = 0; e < rep.objective.size(); ++e) {
      train += label + "," + std::to_string(rep.seed) + "," + std::to_string(e) + "," + num(rep.objective[e]) + "\n";
    }
    add_params(label, rep.seed, rep.params);
    if (rep.swa_params) add_params(label + "/swa", rep.seed, *rep.swa_params);
  }

  void add_params(const std::string& label, std::uint64_t seed, const Vector& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      params += label + "," + std::to_string(seed) + "," + std::to_string(i) + "," + num(p[i]) + "\n";
    }
  }

  void add_sweep(const SweepResult& r) {
    has_sweep = true;
    for (const SweepRow& row : r.rows) {
      sweep += row.method + "," + std::to_string(row.seed) + "," + row.protocol + "," + row.mode + "," +
               num(row.param) + "," + num(row.error) + "," + num(row.mean_loss) + "," + std::to_string(row.n) + "\n";
    }
  }

  void flush() const {
    if (has_train) {
      write_file(dir / "train.csv", train);
      write_file(dir / "params.csv", params);
    }
    if (has_sweep) write_file(dir / "sweep.csv", sweep);
    if (has_tuning) write_file(dir / "tuning.csv", tuning);
    if (has_cert) write_file(dir / "certificate.json", certificates.dump(2) + "\n");
  }
};

struct Variant {
  std::string label;
  TrainConfig cfg;
};

std::string arks_label(double sigma) { return "arks(sigma=" + num(sigma) + ")"; }

std::vector<Variant> variants(const ExperimentConfig& c, std::uint64_t seed) {
  std::vector<Method> ms = c.methods.empty() ? std::vector<Method>{c.train.method} : c.methods;
  std::vector<Variant> out;
  for (Method m : ms) {
    TrainConfig t = c.train;
    t.method = m;
    t.seed = seed;
    if (m == Method::arks && !c.sigmas.empty()) {
      for (double s : c.sigmas) {
        t.kernel.sigma = s;
        out.push_back({arks_label(s), t});
      }
    } else {
      out.push_back({to_string(m), t});
    }
  }
  return out;
}

Dataset load_data(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.csv) {
    Dataset d;
    d.train = load_csv(c.csv->train);
    if (!c.csv->test.empty()) d.test = load_csv(c.csv->test);
    if (c.csv->standardize) {
      const Standardizer st = Standardizer::fit(d.train);
      d.train = st.apply(d.train);
      if (!d.test.empty()) d.test = st.apply(d.test);
    }
    return d;
  }
  SyntheticSpec s = *c.synthetic;
  s.seed = derive_seed(c.synthetic->seed, seed);
  return make_dataset(s);
}

const std::vector<Sample>& need_test(const Dataset& d) {
  if (d.test.empty()) throw ConfigError("this experiment needs a test split");
  return d.test;
}

TrainReport fit(const ExperimentConfig& c, const std::vector<Sample>& data, const Variant& v, std::ostream& log) {
  TrainReport rep = train(c.model, c.loss, data, v.cfg);
  log << "[seed " << v.cfg.seed << "] " << v.label << ": " << rep.objective.size() << " epochs";
  if (!rep.objective.empty()) log << ", final objective " << num(rep.objective.back());
  log << "\n";
  return rep;
}

const Vector& final_params(const TrainReport& rep) { return rep.swa_params ? *rep.swa_params : rep.params; }

void run_train(const ExperimentConfig& c, Outputs& out, std::ostream& log) {
  for (std::uint64_t seed : c.seeds) {
    const Dataset d = load_data(c, seed);
    for (const Variant& v : variants(c, seed)) out.add_report(v.label, fit(c, d.train, v, log));
    out.flush();
  }
}

void run_attack(const ExperimentConfig& c, Outputs& out, std::ostream& log) {
  const bool black = c.attack.mode == AttackMode::black_box;
  for (std::uint64_t seed : c.seeds) {
    const Dataset d = load_data(c, seed);
    const auto& test = need_test(d);
    std::vector<Sample> fit_set = d.train, val;
    if (c.tuning) {
      const auto n_val = static_cast<std::size_t>(c.tuning->validation_fraction * static_cast<double>(d.train.size()));
      if (n_val < 1 || n_val >= d.train.size()) throw ConfigError("validation split is empty or covers all data");
      val.assign(d.train.end() - static_cast<std::ptrdiff_t>(n_val), d.train.end());
      fit_set.resize(d.train.size() - n_val);
    }

    // Black-box source: an erm model trained from an independent seed.
    ModelLoss src_model(c.model, c.loss);
    AttackSource source{&src_model, {}};
    if (black) {
      TrainConfig t = c.train;
      t.method = Method::erm;
      t.seed = derive_seed(seed, 1);
      source.params = final_params(fit(c, fit_set, {"source", t}, log));
    }

    // Within a seed a label fixes the whole training config.
    std::map<std::string, TrainReport> cache;
    auto trained = [&](const Variant& v) -> const TrainReport& {
      auto it = cache.find(v.label);
      if (it == cache.end()) it = cache.emplace(v.label, fit(c, fit_set, v, log)).first;
      return it->second;
    };

    std::vector<Variant> vs = variants(c, seed);
    if (c.tuning) {
      out.has_tuning = true;
      TrainConfig base = c.train;
      base.seed = seed;
      base.method = Method::erm;
      ModelLoss m(c.model, c.loss);
      const Vector erm_p = final_params(trained({"erm", base}));
      const double erm_clean = evaluate(m, erm_p, val).error;
      AttackConfig ac = c.attack;
      ac.delta = c.tuning->delta;
      double best_sigma = c.tuning->sigmas[0], best_err = 2.0, best_clean = 2.0;
      bool any_ok = false;
      for (double s : c.tuning->sigmas) {
        TrainConfig t = base;
        t.method = Method::arks;
        t.kernel.sigma = s;
        const Vector p = final_params(trained({arks_label(s), t}));
        const double clean = evaluate(m, p, val).error;
        const auto attacked = black ? perturb_dataset(src_model, source.params, val, ac) : perturb_dataset(m, p, val, ac);
        const double err = evaluate(m, p, attacked).error;
        const bool ok = clean <= erm_clean + c.tuning->max_clean_gap;
        out.tuning += "arks," + std::to_string(seed) + "," + num(s) + "," + num(clean) + "," + num(err) + ",";
        if ((ok && (!any_ok || err < best_err)) || (!ok && !any_ok && clean < best_clean)) {
          best_sigma = s;
          best_err = err;
          best_clean = clean;
        }
        any_ok = any_ok || ok;
        out.tuning += std::string(ok ? "eligible" : "rejected") + "\n";
      }
      out.tuning += "arks," + std::to_string(seed) + "," + num(best_sigma) + ",,,selected\n";
      for (Variant& v : vs) {
        if (v.cfg.method == Method::arks) {
          v.cfg.kernel.sigma = best_sigma;
          v.label = arks_label(best_sigma);
        }
      }
      // one arks entry is enough once sigma is fixed
      auto dup = [&](const Variant& v) { return v.cfg.method == Method::arks; };
      auto first = std::find_if(vs.begin(), vs.end(), dup);
      if (first != vs.end()) vs.erase(std::remove_if(std::next(first), vs.end(), dup), vs.end());
    }

    for (const Variant& v : vs) {
      const TrainReport& rep = trained(v);
      out.add_report(v.label, rep);
      ModelLoss victim(c.model, c.loss);
      out.add_sweep(sweep(victim, final_params(rep), test, c.deltas, c.attack, black ? &source : nullptr, v.label, seed));
    }
    out.flush();
  }
}

void run_shift(const ExperimentConfig& c, Outputs& out, std::ostream& log) {
  for (std::uint64_t seed : c.seeds) {
    const Dataset d = load_data(c, seed);
    const auto& test = need_test(d);
    for (const Variant& v : variants(c, seed)) {
      const TrainReport rep = fit(c, d.train, v, log);
      out.add_report(v.label, rep);
      ModelLoss m(c.model, c.loss);
      out.add_sweep(shift_sweep(m, final_params(rep), test, c.shifts, c.shift, v.label, seed));
    }
    out.flush();
  }
}

void run_certify(const ExperimentConfig& c, Outputs& out, std::ostream& log) {
  out.has_cert = true;
  for (std::uint64_t seed : c.seeds) {
    const Dataset d = load_data(c, seed);
    for (const Variant& v : variants(c, seed)) {
      const TrainReport rep = fit(c, d.train, v, log);
      out.add_report(v.label, rep);
      ModelLoss m(c.model, c.loss);
      const std::vector<Vector> shifts(d.train.size(), Vector(c.model.input_dim, c.certify.displacement));
      const CertificateCheck chk = certificate_check(m, final_params(rep), d.train, v.cfg.kernel, shifts, c.certify.check);
      const CertificateReport cr = certificate(chk.objective, chk.rho, v.cfg.kernel.sigma, c.loss.eps_pos);
      out.certificates.push_back(json{{"method", v.label},
                                      {"seed", seed},
                                      {"objective", cr.objective},
                                      {"rho", cr.rho},
                                      {"sigma", cr.sigma},
                                      {"eps_pos", cr.eps_pos},
                                      {"bound", cr.bound},
                                      {"lhs", chk.lhs},
                                      {"rhs", chk.rhs},
                                      {"pass", chk.pass},
                                      {"mode", chk.mode == SupremumMode::grid_oracle ? "grid-oracle" : "ascent"}});
      log << "[seed " << seed << "] " << v.label << ": bound " << num(cr.bound) << (chk.pass ? " (pass)\n" : " (FAIL)\n");
    }
    out.flush();
  }
}

void run_rls(const ExperimentConfig& c, Outputs& out, std::ostream& log) {
  const SyntheticSpec& s = *c.synthetic;
  const RlsProblem prob = make_rls_problem(s.rls_rows, s.dim, s.rls_a1_scale, s.seed);
  for (std::uint64_t seed : c.seeds) {
    const Dataset d = load_data(c, seed);
    std::vector<double> xi;
    for (const Sample& smp : d.train) xi.push_back(smp.x[0]);
    for (Variant v : variants(c, seed)) {
      if (!v.cfg.inner.box) v.cfg.inner.box = Box::uniform(1, c.xi_lo, c.xi_hi);
      if (!v.cfg.ro_domain) v.cfg.ro_domain = Box::uniform(1, c.xi_lo, c.xi_hi);
      const TrainReport rep = train_rls(prob, xi, v.cfg, c.loss);
      log << "[seed " << seed << "] " << v.label << ": " << rep.objective.size() << " epochs\n";
      out.add_report(v.label, rep);
      SweepResult sr;
      for (double delta : c.shifts) {
        double total = 0.0;
        for (double x : xi) total += rls_loss(rep.params, (1.0 + delta) * x, prob.a0, prob.a1, prob.b);
        const double mean = total / static_cast<double>(xi.size());
        sr.rows.push_back({v.label, seed, "scale", "shift", delta, mean, mean + c.loss.eps_pos, xi.size()});
      }
      out.add_sweep(sr);
    }
    out.flush();
  }
}

}  // namespace

void run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "config-echo.json", config_to_json(cfg));

  if (cfg.kind == ExperimentKind::selftest) {
    const SelftestReport r = run_selftest();
    for (const auto& l : r.lines) log << l << "\n";
    log << "selftest: " << r.passed << " passed, " << r.failed << " failed\n";
    write_file(out_dir / "selftest.txt", "passed " + std::to_string(r.passed) + "\nfailed " + std::to_string(r.failed) + "\n");
    if (r.failed > 0) throw NumericalError(std::to_string(r.failed) + " selftest checks failed");
    return;
  }

  Outputs out;
  out.dir = out_dir;
  try {
    switch (cfg.kind) {
      case ExperimentKind::train: run_train(cfg, out, log); break;
      case ExperimentKind::attack_sweep: run_attack(cfg, out, log); break;
      case ExperimentKind::shift_sweep: run_shift(cfg, out, log); break;
      case ExperimentKind::certify: run_certify(cfg, out, log); break;
      case ExperimentKind::rls: run_rls(cfg, out, log); break;
      case ExperimentKind::selftest: break;
    }
  } catch (...) {
    try {
      out.flush();
    } catch (...) {
    }
    throw;
  }
  out.flush();
}

}  // namespace arks
