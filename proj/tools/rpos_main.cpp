#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rpos/classify.hpp"
#include "rpos/core.hpp"
#include "rpos/errors.hpp"
#include "rpos/htransform.hpp"
#include "rpos/models.hpp"
#include "rpos/parallel.hpp"
#include "rpos/report.hpp"
#include "rpos/spectral.hpp"

namespace {

using nlohmann::json;
using rpos::report::JsonWriter;

constexpr const char* kToolVersion = "rpos 0.1.0";

struct Input {
  bool is_model = false;
  std::string path;
  rpos::models::ModelSpec spec;
  rpos::models::BuiltModel built;
  std::optional<rpos::SparseNonnegMatrix> matrix;  // when a TSV was given
};

rpos::models::ModelSpec parse_model_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw rpos::ParseError(std::string("model spec: ") + e.what());
  }
  if (!j.is_object()) throw rpos::ParseError("model spec must be a JSON object");
  if (!j.contains("family") || !j["family"].is_string())
    throw rpos::ParseError("model spec needs a \"family\" string");
  std::string fam = j["family"];

  rpos::models::ModelSpec s;
  std::set<std::string> allowed{"family"};
  auto num = [&](const char* k, double& dst) {
    allowed.insert(k);
    if (j.contains(k)) {
      if (!j[k].is_number()) throw rpos::ParseError(std::string(k) + " must be a number");
      dst = j[k].get<double>();
    }
  };
  if (fam == "srw") {
    s.family = rpos::models::ModelSpec::Family::Srw;
    num("p", s.p);
    allowed.insert("htransform");
    if (j.contains("htransform")) s.htransformed = j["htransform"].get<bool>();
  } else if (fam == "pinning") {
    s.family = rpos::models::ModelSpec::Family::Pinning;
    num("alpha", s.alpha);
    num("gamma", s.gamma);
    allowed.insert("beta");
    allowed.insert("beta_over_bc");
    allowed.insert("htransform");
    if (j.contains("beta")) s.beta = j["beta"].get<double>();
    if (j.contains("beta_over_bc")) s.beta_over_bc = j["beta_over_bc"].get<double>();
    if (j.contains("htransform")) s.htransformed = j["htransform"].get<bool>();
  } else if (fam == "finite_random") {
    s.family = rpos::models::ModelSpec::Family::FiniteRandom;
    allowed.insert("seed");
    allowed.insert("size");
    allowed.insert("density");
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("size")) s.size = j["size"].get<int>();
    if (j.contains("density")) s.density = j["density"].get<double>();
  } else if (fam == "birth_death") {
    s.family = rpos::models::ModelSpec::Family::BirthDeath;
    num("p", s.p);
  } else {
    throw rpos::ParseError("unknown model family: " + fam);
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw rpos::ParseError("unknown model key: " + it.key());
  return s;
}

void write_spec_json(JsonWriter& w, const rpos::models::ModelSpec& s) {
  using Fam = rpos::models::ModelSpec::Family;
  w.begin_object();
  switch (s.family) {
    case Fam::Srw:
      w.kv("family", "srw").kv("p", s.p);
      if (s.htransformed) w.kv("htransform", true);
      break;
    case Fam::Pinning:
      w.kv("family", "pinning").kv("alpha", s.alpha).kv("gamma", s.gamma);
      if (s.beta) w.kv("beta", *s.beta);
      if (s.beta_over_bc) w.kv("beta_over_bc", *s.beta_over_bc);
      if (s.htransformed) w.kv("htransform", true);
      break;
    case Fam::FiniteRandom:
      w.kv("family", "finite_random").kv("seed", s.seed).kv("size", s.size);
      w.kv("density", s.density);
      break;
    case Fam::BirthDeath:
      w.kv("family", "birth_death").kv("p", s.p);
      break;
  }
  w.end_object();
}

Input resolve_input(const std::string& path, const std::string& model) {
  Input in;
  if (!model.empty() && !path.empty())
    throw rpos::ParseError("give either a matrix file or --model, not both");
  if (model.empty() && path.empty())
    throw rpos::ParseError("an input is required: matrix file or --model");
  if (!model.empty()) {
    in.is_model = true;
    in.spec = parse_model_spec(model);
    in.built = rpos::models::build(in.spec);
  } else {
    in.path = path;
    in.matrix = rpos::read_matrix_tsv(path);
  }
  return in;
}

rpos::SpectralInput spectral_input(const Input& in) {
  if (!in.is_model) return *in.matrix;
  if (std::holds_alternative<rpos::SparseNonnegMatrix>(in.built.object))
    return std::get<rpos::SparseNonnegMatrix>(in.built.object);
  if (std::holds_alternative<rpos::StateGenerator>(in.built.object))
    return std::get<rpos::StateGenerator>(in.built.object);
  return std::get<rpos::htransform::ProbKernel>(in.built.object).base;
}

rpos::htransform::ProbKernel kernel_input(const Input& in) {
  if (in.is_model) {
    if (std::holds_alternative<rpos::htransform::ProbKernel>(in.built.object))
      return std::get<rpos::htransform::ProbKernel>(in.built.object);
    throw rpos::PreconditionError(
        "this command needs a probability kernel; pass \"htransform\": true in the model spec");
  }
  return rpos::htransform::wrap_stochastic(*in.matrix);
}

std::string default_z(const Input& in) {
  rpos::SpectralInput si = spectral_input(in);
  if (std::holds_alternative<rpos::SparseNonnegMatrix>(si))
    return std::get<rpos::SparseNonnegMatrix>(si).labels()[0];
  return std::get<rpos::StateGenerator>(si).root;
}

void write_input_block(JsonWriter& w, const Input& in) {
  w.begin_object();
  if (in.is_model) {
    w.kv("kind", "model");
    w.kv("describe", in.built.describe);
    w.key("model");
    write_spec_json(w, in.spec);
  } else {
    w.kv("kind", "matrix");
    w.kv("path", in.path);
    w.kv("states", std::int64_t(in.matrix->size()));
    w.kv("entries", std::int64_t(in.matrix->entry_count()));
  }
  w.end_object();
}

void write_maybe_bracket(JsonWriter& w, const rpos::excursion::MaybeBracket& b) {
  using Kind = rpos::excursion::MaybeBracket::Kind;
  if (b.kind == Kind::Infinite)
    w.value("inf");
  else if (b.kind == Kind::Unknown)
    w.value("unknown");
  else
    w.bracket(b.bracket.lo, b.bracket.hi);
}

void write_value_bracket(JsonWriter& w, const rpos::logmgf::ValueBracket& b) {
  w.begin_object();
  w.key("bracket").bracket(b.lo, b.hi);
  w.kv("certified", b.certified);
  w.end_object();
}

struct Common {
  std::string path;
  std::string model;
  std::string json_out;
  std::string z;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("input", c.path, "matrix TSV file (x<TAB>y<TAB>weight per line)");
  cmd->add_option("--model", c.model, "inline model spec JSON");
  cmd->add_option("--tol", c.tol, "bracket tolerance");
  cmd->add_option("--z", c.z, "reference state (default: root / first state)");
  cmd->add_option("--seed", c.seed, "master seed for randomized diagnostics");
  cmd->add_option("--threads", c.threads, "cap on worker threads (default: RPOS_THREADS or all)");
  cmd->add_option("--json", c.json_out, "also write the report to this file");
}

int emit(const std::string& text, const Common& c,
         std::chrono::steady_clock::time_point t0) {
  std::cout << text << "\n";
  if (!c.json_out.empty()) {
    std::ofstream f(c.json_out, std::ios::binary);
    f << text << "\n";
  }
  auto dt = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  std::cerr << "wall-clock: " << dt << " ms\n";
  return 0;
}

template <typename Fn>
std::string make_report(const char* command, const Input& in, const Common& c, Fn&& result_fn) {
  JsonWriter w;
  w.begin_object();
  w.kv("schema", 1);
  w.kv("tool", kToolVersion);
  w.kv("command", command);
  w.key("input");
  write_input_block(w, in);
  w.key("params");
  w.begin_object();
  w.kv("tol", c.tol);
  w.kv("z", c.z);
  w.end_object();
  w.kv("seed", c.seed);
  w.key("result");
  result_fn(w);
  w.end_object();
  return w.str();
}

// ---- subcommand bodies ----

void run_rho(JsonWriter& w, const Input& in, const Common& c) {
  rpos::spectral::SpectralEstimate est =
      rpos::spectral::rho_bisect(spectral_input(in), c.z, c.tol);
  w.begin_object();
  w.key("rho").bracket(est.rho.lo, est.rho.hi);
  w.kv("point", est.point());
  w.kv("lower_method", est.lower_method);
  w.kv("upper_method", est.upper_method);
  w.kv("certified", est.certified);
  w.end_object();
}

void run_classify(JsonWriter& w, const Input& in, const Common& c) {
  rpos::classify::Classification cl =
      rpos::classify::classify(spectral_input(in), c.z, c.tol);
  w.begin_object();
  w.kv("verdict", rpos::classify::to_string(cl.verdict));
  w.kv("certified", cl.certified);
  w.kv("undecided", cl.verdict == rpos::classify::Verdict::Undecided);
  w.key("evidence");
  w.begin_object();
  w.key("rho").bracket(cl.evidence.rho.lo, cl.evidence.rho.hi);
  w.key("lambda_star").bracket(cl.evidence.lambda_star.lo, cl.evidence.lambda_star.hi);
  w.key("lambda_plus");
  write_maybe_bracket(w, cl.evidence.lambda_plus);
  w.key("psi_at_lambda_star");
  write_value_bracket(w, cl.evidence.psi_at_lambda_star);
  w.key("left_derivative");
  write_value_bracket(w, cl.evidence.left_derivative);
  w.key("lambda_gap");
  if (cl.evidence.lambda_gap)
    w.bracket(cl.evidence.lambda_gap->lo, cl.evidence.lambda_gap->hi);
  else
    w.value_null();
  w.end_object();
  w.end_object();
}

void run_psi(JsonWriter& w, const Input& in, const Common& c, const std::string& grid_spec) {
  double lo = 0, hi = 0;
  int n = 0;
  if (std::sscanf(grid_spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 2 || !(hi > lo))
    throw rpos::ParseError("--grid must be lo:hi:n with n >= 2");
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = lo + (hi - lo) * double(i) / double(n - 1);
  rpos::excursion::PsiProfile prof =
      rpos::excursion::psi_profile(spectral_input(in), c.z, grid, c.tol);
  w.begin_object();
  w.kv("z", prof.z);
  w.key("rows");
  w.begin_array();
  for (const auto& s : prof.samples) {
    w.begin_object();
    w.kv("lambda", s.lambda);
    w.kv("psi_lo", s.psi.lo);
    w.kv("psi_hi", s.psi.hi);
    w.kv("certified", s.psi.certified);
    w.kv("divergent", s.divergent);
    w.kv("boundary", s.boundary);
    w.end_object();
  }
  w.end_array();
  w.key("lambda_star").bracket(prof.lambda_star.lo, prof.lambda_star.hi);
  w.kv("lambda_star_certified", prof.lambda_star_certified);
  w.key("lambda_plus");
  write_maybe_bracket(w, prof.lambda_plus);
  w.end_object();
}

void run_htransform(JsonWriter& w, const Input& in, const Common& c) {
  if (!in.is_model || std::holds_alternative<rpos::SparseNonnegMatrix>(in.built.object)) {
    rpos::SparseNonnegMatrix a = in.is_model
                                     ? std::get<rpos::SparseNonnegMatrix>(in.built.object)
                                     : *in.matrix;
    double eig_tol = std::min(c.tol, 1e-11);
    rpos::htransform::Eigenpair e = rpos::htransform::pf_eigenpair(a, eig_tol);
    rpos::htransform::ProbKernel k =
        rpos::htransform::doob_transform(a, e.h, e.c, std::max(100.0 * eig_tol, 1e-10));
    w.begin_object();
    w.kv("eigenvalue", e.c);
    w.key("collatz_wielandt").bracket(e.cw.lo, e.cw.hi);
    w.kv("residual", e.residual);
    w.key("h");
    w.begin_object();
    for (const auto& [s, v] : e.h) w.kv(s, v);
    w.end_object();
    w.key("pi");
    w.begin_object();
    for (const auto& [s, v] : *k.pi) w.kv(s, v);
    w.end_object();
    w.kv("rowsum_dev", k.validation.max_rowsum_dev);
    w.kv("power_identity_dev", k.validation.power_identity_dev);
    w.end_object();
    return;
  }
  rpos::htransform::ProbKernel k = kernel_input(in);
  w.begin_object();
  w.kv("kernel", std::get<rpos::StateGenerator>(k.base).describe);
  w.key("pi_root");
  if (k.pi_root)
    w.bracket(k.pi_root->lo, k.pi_root->hi);
  else
    w.value_null();
  w.kv("rowsum_dev", k.validation.max_rowsum_dev);
  w.kv("power_identity_dev", k.validation.power_identity_dev);
  w.end_object();
}

void run_certify(JsonWriter& w, const Input& in, const std::string& sprime_csv,
                 std::int64_t window) {
  rpos::htransform::ProbKernel k = kernel_input(in);
  std::set<std::string> sprime;
  if (sprime_csv.empty()) {
    sprime.insert(k.root);
  } else {
    std::string cur;
    for (char ch : sprime_csv + ",") {
      if (ch == ',') {
        if (!cur.empty()) sprime.insert(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
  }
  w.begin_object();
  try {
    rpos::htransform::LyapunovCertificate cert =
        rpos::htransform::lyapunov_certificate(k, sprime, window);
    rpos::htransform::CertificateCheck chk = rpos::htransform::verify_certificate(k, cert);
    w.kv("found", true);
    w.kv("epsilon", cert.epsilon);
    w.key("rho_q").bracket(cert.rho_q.lo, cert.rho_q.hi);
    w.key("halved_entry");
    w.begin_array().value(cert.halved_entry.first).value(cert.halved_entry.second).end_array();
    w.key("sprime");
    w.begin_array();
    for (const auto& s : cert.sprime) w.value(s);
    w.end_array();
    w.kv("verified", chk.ok);
    w.kv("min_margin", chk.min_margin);
    w.key("f");
    w.begin_object();
    std::size_t emitted = 0;
    for (const auto& [s, v] : cert.f) {
      if (emitted++ >= 64) break;
      w.kv(s, v);
    }
    w.end_object();
  } catch (const rpos::NotStronglyPositiveRecurrent& e) {
    w.kv("found", false);
    w.kv("reason", std::string(e.what()));
  }
  w.end_object();
}

void run_perturb(JsonWriter& w, const Input& in, const Common& c, const std::string& lower,
                 const std::string& raise) {
  if (!in.matrix)
    throw rpos::PreconditionError("perturb works on explicit matrix inputs");
  if (lower.empty() == raise.empty())
    throw rpos::ParseError("give exactly one of --lower x,y,factor or --raise x,y,delta");
  auto split3 = [](const std::string& s) {
    auto c1 = s.find(','), c2 = s.rfind(',');
    if (c1 == std::string::npos || c2 == c1)
      throw rpos::ParseError("expected x,y,value");
    return std::tuple<std::string, std::string, double>(
        s.substr(0, c1), s.substr(c1 + 1, c2 - c1 - 1), std::stod(s.substr(c2 + 1)));
  };
  const rpos::SparseNonnegMatrix& a = *in.matrix;
  rpos::classify::PerturbationReport rep;
  std::string mode;
  if (!lower.empty()) {
    auto [x, y, f] = split3(lower);
    if (!(f > 0 && f < 1)) throw rpos::PreconditionError("--lower factor must lie in (0,1)");
    rep = rpos::classify::strong_rpos_test(a, a.with_entry_scaled(x, y, f), c.tol);
    mode = "lower";
  } else {
    auto [x, y, d] = split3(raise);
    if (!(d > 0)) throw rpos::PreconditionError("--raise delta must be positive");
    double w0 = a.entry(a.index_of(x), a.index_of(y));
    rep = rpos::classify::rtrans_test(a, a.with_entry_scaled(x, y, (w0 + d) / w0), c.tol);
    mode = "raise";
  }
  w.begin_object();
  w.kv("mode", mode);
  w.key("rho_a").bracket(rep.rho_a.lo, rep.rho_a.hi);
  w.key("rho_b").bracket(rep.rho_b.lo, rep.rho_b.hi);
  w.key("changed");
  w.begin_array();
  for (auto& [x, y] : rep.changed)
    w.begin_array().value(x).value(y).end_array();
  w.end_array();
  w.kv("conclusion", rep.conclusion);
  w.kv("certified_drop", rep.certified_drop);
  w.kv("certified_equal", rep.certified_equal);
  w.kv("drop_lower_bound", rep.drop_lower_bound);
  w.key("epsilon");
  if (rep.epsilon)
    w.value(*rep.epsilon);
  else
    w.value_null();
  w.end_object();
}

void run_simulate(JsonWriter& w, const Input& in, const Common& c, std::int64_t samples,
                  std::int64_t horizon, const std::string& eps_csv, const std::string& from) {
  rpos::htransform::ProbKernel k = kernel_input(in);
  std::string x = from.empty() ? k.root : from;
  std::vector<double> eps;
  if (!eps_csv.empty()) {
    std::string cur;
    for (char ch : eps_csv + ",") {
      if (ch == ',') {
        if (!cur.empty()) eps.push_back(std::stod(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
  } else if (!k.finite() && k.generator().analytic_excursion_law) {
    double lp = k.generator().analytic_excursion_law->lambda_plus();
    if (std::isfinite(lp) && lp > 0) eps.push_back(lp / 2);
  }
  rpos::htransform::ErgodicityFit fit = rpos::htransform::simulate_returns(
      k, x, c.seed, std::size_t(samples), horizon, eps);
  w.begin_object();
  w.kv("x", x);
  w.kv("samples", std::int64_t(fit.n_samples));
  w.kv("horizon", fit.horizon);
  w.kv("censored", std::int64_t(fit.censored));
  w.kv("censor_fraction", fit.censor_fraction);
  w.kv("censor_fraction_half", fit.censor_fraction_half);
  w.kv("heavy_tail", fit.heavy_tail);
  w.kv("mean_return", fit.mean_return);
  w.key("moments");
  w.begin_array();
  for (const auto& m : fit.moments) {
    w.begin_object();
    w.kv("eps", m.eps);
    w.kv("estimate", m.estimate);
    w.kv("censored_excluded", std::int64_t(m.censored_excluded));
    w.end_object();
  }
  w.end_array();
  w.key("fit");
  if (fit.fit) {
    w.begin_object();
    w.kv("rate", fit.fit->rate);
    w.kv("rate_stderr", fit.fit->rate_stderr);
    w.kv("log_m", fit.fit->log_m);
    w.kv("r2", fit.fit->r2);
    w.kv("period", fit.fit->period);
    w.end_object();
  } else {
    w.value_null();
  }
  w.key("flags");
  w.begin_array();
  for (const auto& f : fit.flags) w.value(f);
  w.end_array();
  w.end_object();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"classification of irreducible nonnegative matrices by R-positivity"};
  app.require_subcommand(1);

  Common c_rho, c_cls, c_psi, c_ht, c_cert, c_pert, c_sim;
  std::string grid_spec, sprime_csv, lower_spec, raise_spec, eps_csv, from_state;
  std::int64_t window = 64, samples = 10000, horizon = 1000000;

  auto* cmd_rho = app.add_subcommand("rho", "spectral radius bracket");
  add_common(cmd_rho, c_rho);
  auto* cmd_cls = app.add_subcommand("classify", "four-way R-classification");
  add_common(cmd_cls, c_cls);
  auto* cmd_psi = app.add_subcommand("psi", "psi_z table over a lambda grid");
  add_common(cmd_psi, c_psi);
  cmd_psi->add_option("--grid", grid_spec, "lambda grid lo:hi:n")->required();
  auto* cmd_ht = app.add_subcommand("htransform", "Perron eigenpair and Doob transform");
  add_common(cmd_ht, c_ht);
  auto* cmd_cert = app.add_subcommand("certify", "Lyapunov drift certificate");
  add_common(cmd_cert, c_cert);
  cmd_cert->add_option("--sprime", sprime_csv, "comma-separated exception set (default: root)");
  cmd_cert->add_option("--window", window, "verification window");
  auto* cmd_pert = app.add_subcommand("perturb", "perturbation tests");
  add_common(cmd_pert, c_pert);
  cmd_pert->add_option("--lower", lower_spec, "x,y,factor: scale one entry down");
  cmd_pert->add_option("--raise", raise_spec, "x,y,delta: add delta to one entry");
  auto* cmd_sim = app.add_subcommand("simulate", "return-time simulation diagnostics");
  add_common(cmd_sim, c_sim);
  cmd_sim->add_option("--samples", samples, "number of return-time samples");
  cmd_sim->add_option("--horizon", horizon, "censoring horizon in steps");
  cmd_sim->add_option("--eps", eps_csv, "comma-separated exponential-moment orders");
  cmd_sim->add_option("--x", from_state, "return state (default: root)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto t0 = std::chrono::steady_clock::now();
  try {
    Common* c = nullptr;
    const char* name = nullptr;
    if (cmd_rho->parsed()) {
      c = &c_rho;
      name = "rho";
    } else if (cmd_cls->parsed()) {
      c = &c_cls;
      name = "classify";
    } else if (cmd_psi->parsed()) {
      c = &c_psi;
      name = "psi";
    } else if (cmd_ht->parsed()) {
      c = &c_ht;
      name = "htransform";
    } else if (cmd_cert->parsed()) {
      c = &c_cert;
      name = "certify";
    } else if (cmd_pert->parsed()) {
      c = &c_pert;
      name = "perturb";
    } else {
      c = &c_sim;
      name = "simulate";
    }
    if (c->threads > 0) rpos::parallel::set_max_threads(c->threads);
    Input in = resolve_input(c->path, c->model);
    if (c->z.empty()) c->z = default_z(in);

    std::string text;
    if (cmd_rho->parsed())
      text = make_report("rho", in, *c, [&](JsonWriter& w) { run_rho(w, in, *c); });
    else if (cmd_cls->parsed())
      text = make_report("classify", in, *c, [&](JsonWriter& w) { run_classify(w, in, *c); });
    else if (cmd_psi->parsed())
      text = make_report("psi", in, *c,
                         [&](JsonWriter& w) { run_psi(w, in, *c, grid_spec); });
    else if (cmd_ht->parsed())
      text = make_report("htransform", in, *c, [&](JsonWriter& w) { run_htransform(w, in, *c); });
    else if (cmd_cert->parsed())
      text = make_report("certify", in, *c,
                         [&](JsonWriter& w) { run_certify(w, in, sprime_csv, window); });
    else if (cmd_pert->parsed())
      text = make_report("perturb", in, *c,
                         [&](JsonWriter& w) { run_perturb(w, in, *c, lower_spec, raise_spec); });
    else
      text = make_report("simulate", in, *c, [&](JsonWriter& w) {
        run_simulate(w, in, *c, samples, horizon, eps_csv, from_state);
      });
    (void)name;
    return emit(text, *c, t0);
  } catch (const rpos::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const rpos::PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
}
