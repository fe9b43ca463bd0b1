#pragma once

// Command-line front end: ingest, bounds, curve, verify.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "motbounds/motbounds.hpp"

namespace motbounds::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kNumerical = 3 };

// --- helpers ------------------------------------------------------------------------

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + p.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + p.string() + "' for writing");
  return out;
}

/// Prefixes parse errors with the file they came from.
template <class F>
auto with_file(const fs::path& p, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.what(), e.line);
  }
}

inline DiscreteMeasure load_measure(const fs::path& p, const Config& cfg) {
  auto in = open_in(p);
  return with_file(p, [&] { return io::read_measure(in, cfg); });
}

inline std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = io::detail::trim(item);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(v)) {
      throw ParseError(std::string(what) + ": '" + item + "' is not a number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ParseError(std::string(what) + ": empty list");
  return out;
}

inline std::vector<int> parse_ints(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_doubles(text, what)) {
    if (v != std::floor(v)) throw ParseError(std::string(what) + ": expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline CostSpec builtin_cost(const std::string& name) {
  if (name == "third_moment_cross") {
    return CostSpec{[](double x, double y) { return 9 * x * y * y; },
                    [](double y, double z) { return 3 * y * z * z; },
                    [](double x, double z) { return 3 * x * z * z; }, 0.0};
  }
  if (name == "straddle_basket") {
    return CostSpec{[](double x, double y) { return std::abs(y - x); },
                    [](double y, double z) { return std::abs(z - y); },
                    [](double x, double z) { return std::abs(z - x); }, 0.0};
  }
  throw ParseError("unknown built-in cost '" + name + "' (expected third_moment_cross or straddle_basket)");
}

// --- run configuration --------------------------------------------------------------

struct RunConfig {
  std::optional<DiscreteMeasure> x, y, z;
  CostSpec cost;
  std::string cost_name = "custom";
  double epsilon = 1.0;
  std::vector<double> eps_grid;
  std::string method = "both";
  std::vector<int> tree_p;
  bool probe_uniqueness = false;
  bool lexicographic = false;
  Config cfg;
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"measures", "cost",  "epsilon",          "eps_grid",
                                             "method",   "tree_p", "probe_uniqueness", "lexicographic",
                                             "seed",     "tol"};
  return keys;
}

/// Loads a JSON run configuration. Every problem found is listed in a single
/// ParseError.
inline RunConfig load_config(const fs::path& path) {
  auto in = open_in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
  RunConfig rc;
  std::vector<std::string> errors;
  if (!doc.is_object()) throw ParseError(path.string() + ": top level must be an object");
  for (const auto& [k, v] : doc.items()) {
    if (std::find(config_keys().begin(), config_keys().end(), k) == config_keys().end()) {
      errors.push_back("unknown key '" + k + "'");
    }
  }
  auto number = [&](const char* key, auto& target) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number()) {
      errors.push_back(std::string("'") + key + "' must be a number");
      return;
    }
    target = doc[key].get<std::remove_reference_t<decltype(target)>>();
  };
  auto flag = [&](const char* key, bool& target) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_boolean()) {
      errors.push_back(std::string("'") + key + "' must be true or false");
      return;
    }
    target = doc[key].get<bool>();
  };
  number("epsilon", rc.epsilon);
  number("seed", rc.cfg.seed);
  number("tol", rc.cfg.tol);
  flag("probe_uniqueness", rc.probe_uniqueness);
  flag("lexicographic", rc.lexicographic);
  if (doc.contains("method")) {
    if (!doc["method"].is_string()) {
      errors.push_back("'method' must be a string");
    } else {
      rc.method = doc["method"].get<std::string>();
    }
  }
  if (doc.contains("eps_grid")) {
    const auto& g = doc["eps_grid"];
    if (!g.is_array() || std::any_of(g.begin(), g.end(), [](const json& v) { return !v.is_number(); })) {
      errors.push_back("'eps_grid' must be an array of numbers");
    } else {
      rc.eps_grid = g.get<std::vector<double>>();
    }
  }
  if (doc.contains("tree_p")) {
    const auto& g = doc["tree_p"];
    if (!g.is_array() ||
        std::any_of(g.begin(), g.end(), [](const json& v) { return !v.is_number_integer(); })) {
      errors.push_back("'tree_p' must be an array of integers");
    } else {
      rc.tree_p = g.get<std::vector<int>>();
    }
  }

  // Measures: file paths relative to the config, or inline atoms/weights.
  const fs::path base = path.parent_path();
  if (!doc.contains("measures") || !doc["measures"].is_object()) {
    errors.push_back("'measures' must be an object with keys x, y, z");
  } else {
    for (const char* key : {"x", "y", "z"}) {
      const auto& m = doc["measures"];
      if (!m.contains(key)) {
        errors.push_back(std::string("measures.") + key + " is missing");
        continue;
      }
      std::optional<DiscreteMeasure>& slot = key[0] == 'x' ? rc.x : key[0] == 'y' ? rc.y : rc.z;
      try {
        if (m[key].is_string()) {
          slot = load_measure(base / m[key].get<std::string>(), rc.cfg);
        } else if (m[key].is_object() && m[key].contains("atoms") && m[key].contains("weights")) {
          slot = DiscreteMeasure(m[key]["atoms"].get<std::vector<double>>(),
                                 m[key]["weights"].get<std::vector<double>>(), rc.cfg);
        } else {
          errors.push_back(std::string("measures.") + key + " must be a path or {atoms, weights}");
        }
      } catch (const json::exception& e) {
        errors.push_back(std::string("measures.") + key + ": " + e.what());
      } catch (const Error& e) {
        errors.push_back(std::string("measures.") + key + ": " + e.what());
      }
    }
  }

  // Cost: a built-in name, or {"c1": expr, "c2": expr, "c3": expr}.
  if (!doc.contains("cost")) {
    errors.push_back("'cost' is missing");
  } else if (doc["cost"].is_string()) {
    try {
      rc.cost = builtin_cost(doc["cost"].get<std::string>());
      rc.cost_name = doc["cost"].get<std::string>();
    } catch (const ParseError& e) {
      errors.push_back(e.what());
    }
  } else if (doc["cost"].is_object()) {
    const struct {
      const char* key;
      char a, b;
      PairCost CostSpec::*slot;
    } parts[] = {{"c1", 'x', 'y', &CostSpec::c1}, {"c2", 'y', 'z', &CostSpec::c2}, {"c3", 'x', 'z', &CostSpec::c3}};
    for (const auto& [k, v] : doc["cost"].items()) {
      if (k != "c1" && k != "c2" && k != "c3") errors.push_back("unknown cost term '" + k + "'");
    }
    for (const auto& p : parts) {
      if (!doc["cost"].contains(p.key)) continue;
      if (!doc["cost"][p.key].is_string()) {
        errors.push_back(std::string("cost.") + p.key + " must be an expression string");
        continue;
      }
      try {
        rc.cost.*p.slot = pair_cost_from(doc["cost"][p.key].get<std::string>(), p.a, p.b);
      } catch (const ParseError& e) {
        errors.push_back(std::string("cost.") + p.key + ": " + e.what());
      }
    }
  } else {
    errors.push_back("'cost' must be a built-in name or an object of expressions");
  }

  if (!errors.empty()) {
    std::string msg = path.string() + ": invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ParseError(msg);
  }
  return rc;
}

inline void check_method(const std::string& m) {
  if (m != "exact" && m != "first-order" && m != "both") {
    throw ParseError("method must be exact, first-order or both (got '" + m + "')");
  }
}

// --- JSON views -----------------------------------------------------------------------

inline json to_json(const DualCertificate& c) {
  json j;
  j["sense"] = to_string(c.sense);
  j["x_atoms"] = c.x_atoms;
  j["y_atoms"] = c.y_atoms;
  if (c.three_period()) j["z_atoms"] = c.z_atoms;
  j["u"] = c.u;
  j["v"] = c.v;
  if (c.three_period()) j["w"] = c.w;
  j["g"] = c.g;
  if (c.three_period()) j["h"] = c.h;
  return j;
}

inline DualCertificate certificate_from_json(const json& j) {
  DualCertificate c;
  const std::string sense = j.at("sense").get<std::string>();
  if (sense != "min" && sense != "max") throw ParseError("certificate sense must be min or max");
  c.sense = sense == "min" ? Sense::Minimize : Sense::Maximize;
  c.x_atoms = j.at("x_atoms").get<std::vector<double>>();
  c.y_atoms = j.at("y_atoms").get<std::vector<double>>();
  c.u = j.at("u").get<std::vector<double>>();
  c.v = j.at("v").get<std::vector<double>>();
  c.g = j.at("g").get<std::vector<double>>();
  if (j.contains("z_atoms")) {
    c.z_atoms = j.at("z_atoms").get<std::vector<double>>();
    c.w = j.at("w").get<std::vector<double>>();
    c.h = j.at("h").get<std::vector<double>>();
  }
  const std::size_t n = c.x_atoms.size(), m = c.y_atoms.size();
  if (c.u.size() != n || c.g.size() != n || c.v.size() != m ||
      (c.three_period() && (c.w.size() != c.z_atoms.size() || c.h.size() != n * m))) {
    throw ParseError("certificate arrays do not match its atom grids");
  }
  return c;
}

inline json to_json(const CertificateCheck& c) {
  json j;
  j["ok"] = c.ok;
  j["worst_violation"] = c.worst_violation;
  j["allowed"] = c.allowed;
  return j;
}

inline json support_json(const Coupling3& c, double floor) {
  json rows = json::array();
  for (const auto& [k, w] : c.mass) {
    if (w > floor) rows.push_back({c.x_atoms[k[0]], c.y_atoms[k[1]], c.z_atoms[k[2]], w});
  }
  return rows;
}

inline json support_json(const Coupling2& c, double floor) {
  json rows = json::array();
  for (const auto& [k, w] : c.mass) {
    if (w > floor) rows.push_back({c.first_atoms[k[0]], c.second_atoms[k[1]], w});
  }
  return rows;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// --- ingest -------------------------------------------------------------------------

struct IngestOptions {
  std::vector<std::string> chains;
  std::string out_dir;
  bool repair = false;
  double budget = 0.1;
  std::optional<double> target_mean;
};

inline int cmd_ingest(const IngestOptions& opt, const Config& cfg, std::ostream& out, std::ostream& err) {
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  json report;
  report["chains"] = json::array();
  std::vector<DiscreteMeasure> measures;
  std::vector<std::string> labels;
  std::optional<double> forward;
  for (const auto& file : opt.chains) {
    const fs::path p(file);
    auto in = open_in(p);
    const auto rows = with_file(p, [&] { return io::read_chain(in); });
    OptionChain chain{p.stem().string(), rows.strikes, rows.calls, std::nullopt};
    fs::path sidecar = p;
    sidecar.replace_extension(".json");
    if (fs::exists(sidecar)) {
      auto sin = open_in(sidecar);
      try {
        const json meta = json::parse(sin);
        if (meta.contains("maturity")) {
          chain.maturity = meta["maturity"].is_string() ? meta["maturity"].get<std::string>()
                                                        : meta["maturity"].dump();
        }
        if (meta.contains("forward") && !meta["forward"].is_null()) chain.forward = meta["forward"].get<double>();
      } catch (const json::exception& e) {
        throw ParseError(sidecar.string() + ": " + e.what());
      }
    }
    const auto dens = bl_density(chain, cfg);
    if (!forward && chain.forward) forward = chain.forward;
    json entry;
    entry["file"] = p.filename().string();
    entry["maturity"] = chain.maturity;
    entry["strikes"] = chain.size();
    entry["atoms"] = dens.measure.size();
    entry["mean"] = dens.mean;
    entry["forward"] = chain.forward ? json(*chain.forward) : json(nullptr);
    entry["clipped_mass"] = dens.clipped_mass;
    entry["warnings"] = dens.warnings;
    report["chains"].push_back(entry);
    for (const auto& w : dens.warnings) err << "warning: " << w << '\n';
    measures.push_back(dens.measure);
    labels.push_back(chain.maturity);
  }

  auto order_report = [&](const std::vector<DiscreteMeasure>& ms) {
    json pairs = json::array();
    bool ok = true;
    for (std::size_t k = 0; k + 1 < ms.size(); ++k) {
      const auto r = convex_order_check(ms[k], ms[k + 1], cfg.tol * (1.0 + std::abs(mean(ms[k]))));
      ok = ok && r.holds;
      pairs.push_back({{"from", labels[k]},
                       {"to", labels[k + 1]},
                       {"holds", r.holds},
                       {"mean_gap", r.mean_gap},
                       {"worst_excess", r.worst_excess},
                       {"worst_point", r.worst_point}});
    }
    return std::make_pair(ok, pairs);
  };
  auto [valid, pairs] = order_report(measures);
  report["convex_order"] = pairs;
  int code = kOk;
  if (!valid && opt.repair) {
    const double target = opt.target_mean ? *opt.target_mean : forward ? *forward : mean(measures.front());
    try {
      const auto rep = repair_chain(measures, target, opt.budget, cfg);
      measures = rep.measures;
      report["repair"] = {{"target_mean", target}, {"total_moved", rep.total_moved}, {"moved", rep.moved}};
      auto [ok2, pairs2] = order_report(measures);
      report["convex_order_after_repair"] = pairs2;
      valid = ok2;
    } catch (const RepairInfeasible& e) {
      report["repair"] = {{"target_mean", target}, {"error", e.what()}};
      err << "error: " << e.what() << '\n';
    }
  }
  report["valid"] = valid;
  if (!valid) {
    err << "error: ingested measures are not in convex order"
        << (opt.repair ? " after repair" : "; rerun with --repair") << '\n';
    code = kCheckFailed;
  }
  for (std::size_t k = 0; k < measures.size(); ++k) {
    const fs::path target = dir / (labels[k] + ".csv");
    auto o = open_out(target);
    io::write_measure(o, measures[k]);
    out << "wrote " << target.string() << " (" << measures[k].size() << " atoms, mean " << num(mean(measures[k]))
        << ")\n";
  }
  auto o = open_out(dir / "ingest_report.json");
  o << report.dump(2) << '\n';
  return code;
}

// --- bounds -------------------------------------------------------------------------

struct BoundsOptions {
  std::string config;
  std::optional<double> eps;
  std::optional<std::string> method;
  std::optional<std::string> tree_p;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<std::string> dump_lp;
  bool json_stdout = false;
  bool timing = false;
};

inline void apply_overrides(RunConfig& rc, const std::optional<std::uint64_t>& seed,
                            const std::optional<double>& tol) {
  if (seed) rc.cfg.seed = *seed;
  if (tol) rc.cfg.tol = *tol;
}

inline int cmd_bounds(const BoundsOptions& opt, std::ostream& out, std::ostream& err) {
  RunConfig rc = load_config(opt.config);
  apply_overrides(rc, opt.seed, opt.tol);
  if (opt.eps) rc.epsilon = *opt.eps;
  if (opt.method) rc.method = *opt.method;
  if (opt.tree_p) rc.tree_p = parse_ints(*opt.tree_p, "--tree-p");
  check_method(rc.method);
  if (!(rc.epsilon >= 0.0)) throw ParseError("epsilon must be nonnegative");
  const auto& mx = *rc.x;
  const auto& my = *rc.y;
  const auto& mz = *rc.z;

  if (opt.dump_lp) {
    auto o = open_out(*opt.dump_lp);
    write_lp_text(o, build_mot3_lp(mx, my, mz, rc.cost.with_epsilon(rc.epsilon).as_function(), Sense::Minimize));
  }

  motbounds::BoundsOptions bo;
  bo.exact = rc.method != "first-order";
  bo.first_order = rc.method != "exact";
  bo.derivative.probe_uniqueness = rc.probe_uniqueness;
  bo.derivative.lexicographic = rc.lexicographic;
  const auto rep = first_order_bounds(mx, my, mz, rc.cost, rc.epsilon, bo, rc.cfg);
  std::vector<std::pair<int, double>> tree;
  for (int p : rc.tree_p) tree.emplace_back(p, tree_price(mx, my, mz, p, rc.cost, rc.epsilon, rc.cfg).price);

  const double floor = rc.cfg.support_floor;
  const TripleCost full = rc.cost.with_epsilon(rc.epsilon).as_function();
  json j;
  j["epsilon"] = rc.epsilon;
  j["method"] = rc.method;
  j["cost"] = rc.cost_name;
  j["marginals"] = {{"x", {{"atoms", mx.size()}, {"mean", mean(mx)}}},
                    {"y", {{"atoms", my.size()}, {"mean", mean(my)}}},
                    {"z", {{"atoms", mz.size()}, {"mean", mean(mz)}}}};
  json checks = json::array();
  bool all_ok = true;
  auto check = [&](const std::string& name, bool ok) {
    checks.push_back({{"name", name}, {"ok", ok}});
    all_ok = all_ok && ok;
  };
  if (rep.exact_lower) {
    const auto cl = check_certificate(rep.exact_lower->certificate, full, rc.cfg);
    const auto cu = check_certificate(rep.exact_upper->certificate, full, rc.cfg);
    j["exact"] = {{"P_lower", *rep.p_lower},
                  {"P_upper", *rep.p_upper},
                  {"lower_certificate", to_json(cl)},
                  {"upper_certificate", to_json(cu)},
                  {"lower_support", support_json(rep.exact_lower->coupling, floor)},
                  {"upper_support", support_json(rep.exact_upper->coupling, floor)}};
    check("certificate_lower", cl.ok);
    check("certificate_upper", cu.ok);
    const double tol = 1e-9 * (1.0 + std::max(std::abs(*rep.p_lower), std::abs(*rep.p_upper)));
    check("P_lower <= P_upper", *rep.p_lower <= *rep.p_upper + tol);
    if (rep.q_lower) {
      check("P_lower <= Q_lower", *rep.p_lower <= *rep.q_lower + tol);
      check("Q_upper <= P_upper", *rep.q_upper <= *rep.p_upper + tol);
    }
    for (const auto& [p, v] : tree) {
      check("P_lower <= tree_p" + std::to_string(p) + " <= P_upper",
            *rep.p_lower <= v + tol && v <= *rep.p_upper + tol);
    }
  }
  if (rep.q_lower) {
    auto side = [&](const DerivativeResult& d, const Mot2Result& xy, const Mot2Result& yz) {
      json s;
      s["two_period"] = {{"xy", xy.value}, {"yz", yz.value}};
      s["derivative"] = d.value();
      s["derivative_decoupled"] = d.decoupled;
      s["derivative_lexicographic"] = d.lexicographic ? json(*d.lexicographic) : json(nullptr);
      if (d.xy_unique) s["xy_unique"] = *d.xy_unique;
      if (d.yz_unique) s["yz_unique"] = *d.yz_unique;
      s["xy_certificate"] = to_json(check_certificate(xy.certificate, rc.cost.c1 ? rc.cost.c1 : PairCost([](double, double) { return 0.0; }), rc.cfg));
      s["yz_certificate"] = to_json(check_certificate(yz.certificate, rc.cost.c2 ? rc.cost.c2 : PairCost([](double, double) { return 0.0; }), rc.cfg));
      json log = json::array();
      for (const auto& e : d.overlap.log) {
        log.push_back({{"y", e.y},
                       {"weight", e.weight},
                       {"value", e.value},
                       {"support_size", e.support_size},
                       {"skipped", e.skipped}});
      }
      s["subproblems"] = log;
      s["support"] = support_json(d.overlap.coupling, floor);
      return s;
    };
    j["first_order"] = {{"P_lower_at_0", *rep.p_lower_at_zero},
                        {"P_upper_at_0", *rep.p_upper_at_zero},
                        {"Q_lower", *rep.q_lower},
                        {"Q_upper", *rep.q_upper},
                        {"lower", side(*rep.lower_detail, rep.lower_detail->xy, rep.lower_detail->yz)},
                        {"upper", side(*rep.upper_detail, rep.upper_detail->xy, rep.upper_detail->yz)}};
    for (const auto& side_name : {"lower", "upper"}) {
      const auto& s = j["first_order"][side_name];
      check(std::string("certificate_xy_") + side_name, s["xy_certificate"]["ok"].get<bool>());
      check(std::string("certificate_yz_") + side_name, s["yz_certificate"]["ok"].get<bool>());
    }
  }
  json tj = json::array();
  for (const auto& [p, v] : tree) {
    json t = {{"p", p}, {"price", v}};
    if (rep.q_lower) t["within_Q"] = *rep.q_lower <= v && v <= *rep.q_upper;
    tj.push_back(t);
  }
  j["tree"] = tj;
  j["checks"] = checks;
  j["warnings"] = rep.warnings;
  j["ok"] = all_ok;

  if (opt.out_dir) {
    const fs::path dir(*opt.out_dir);
    fs::create_directories(dir);
    open_out(dir / "bounds.json") << j.dump(2) << '\n';
    if (rep.exact_lower) {
      auto a = open_out(dir / "lower_coupling.csv");
      io::write_coupling(a, rep.exact_lower->coupling);
      auto b = open_out(dir / "upper_coupling.csv");
      io::write_coupling(b, rep.exact_upper->coupling);
      open_out(dir / "lower_certificate.json") << to_json(rep.exact_lower->certificate).dump(2) << '\n';
      open_out(dir / "upper_certificate.json") << to_json(rep.exact_upper->certificate).dump(2) << '\n';
    }
  }
  if (opt.json_stdout) {
    out << j.dump(2) << '\n';
  } else {
    // One row, columns ordered lower to upper.
    std::vector<std::pair<std::string, double>> cols;
    if (rep.p_lower) cols.emplace_back("P_lower", *rep.p_lower);
    if (rep.q_lower) cols.emplace_back("Q_lower", *rep.q_lower);
    for (const auto& [p, v] : tree) cols.emplace_back("tree p=" + std::to_string(p), v);
    if (rep.q_upper) cols.emplace_back("Q_upper", *rep.q_upper);
    if (rep.p_upper) cols.emplace_back("P_upper", *rep.p_upper);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", "epsilon");
    out << buf;
    for (const auto& c : cols) {
      std::snprintf(buf, sizeof buf, " %16s", c.first.c_str());
      out << buf;
    }
    out << '\n';
    std::snprintf(buf, sizeof buf, "%-10s", num(rc.epsilon).c_str());
    out << buf;
    for (const auto& c : cols) {
      std::snprintf(buf, sizeof buf, " %16s", num(c.second).c_str());
      out << buf;
    }
    out << '\n';
    for (const auto& c : checks) {
      if (!c["ok"].get<bool>()) out << "FAILED: " << c["name"].get<std::string>() << '\n';
    }
  }
  for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
  if (opt.timing) {
    err << "timing: first-order " << num(rep.seconds_first_order) << " s, exact " << num(rep.seconds_exact)
        << " s\n";
  }
  return all_ok ? kOk : kCheckFailed;
}

// --- curve --------------------------------------------------------------------------

struct CurveOptions {
  std::string config;
  std::optional<std::string> eps_grid;
  std::optional<std::string> tree_p;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
};

inline int cmd_curve(const CurveOptions& opt, std::ostream& out, std::ostream& err) {
  RunConfig rc = load_config(opt.config);
  apply_overrides(rc, opt.seed, opt.tol);
  if (opt.eps_grid) rc.eps_grid = parse_doubles(*opt.eps_grid, "--eps-grid");
  if (opt.tree_p) rc.tree_p = parse_ints(*opt.tree_p, "--tree-p");
  if (rc.eps_grid.empty()) throw ParseError("no epsilon grid: set eps_grid in the config or pass --eps-grid");
  DerivativeOptions dopt;
  dopt.probe_uniqueness = rc.probe_uniqueness;
  dopt.lexicographic = rc.lexicographic;
  const auto lo = bound_curve(*rc.x, *rc.y, *rc.z, rc.cost, rc.eps_grid, Sense::Minimize, dopt, rc.cfg);
  const auto hi = bound_curve(*rc.x, *rc.y, *rc.z, rc.cost, rc.eps_grid, Sense::Maximize, dopt, rc.cfg);
  std::map<int, std::vector<double>> model;
  for (int p : rc.tree_p) {
    // The glued plan does not depend on epsilon; only the integrand does.
    const auto t = tree_price(*rc.x, *rc.y, *rc.z, p, rc.cost, 0.0, rc.cfg);
    auto& col = model[p];
    for (double e : rc.eps_grid) col.push_back(t.coupling.integrate(rc.cost.with_epsilon(e).as_function()));
  }
  if (opt.out) {
    auto o = open_out(*opt.out);
    io::write_curve(o, lo, hi, model);
  } else {
    io::write_curve(out, lo, hi, model);
  }
  bool ok = true;
  for (const auto* c : {&lo, &hi}) {
    const char* side = c == &lo ? "lower" : "upper";
    for (std::size_t t = 0; t < c->failed_points.size(); ++t) {
      err << "error: " << side << " curve failed at epsilon=" << num(c->eps_grid[c->failed_points[t]]) << ": "
          << c->failure_messages[t] << '\n';
    }
    for (const auto& v : c->invariant_violations) err << "error: " << side << " curve: " << v << '\n';
    ok = ok && c->ok();
  }
  return ok ? kOk : kCheckFailed;
}

// --- verify -------------------------------------------------------------------------

struct VerifyOptions {
  std::string coupling;
  std::optional<std::string> config;
  std::optional<std::string> x, y, z;
  std::optional<std::string> cost;
  std::optional<double> eps;
  std::string sense = "min";
  std::optional<std::string> certificate;
  bool left_monotone = false;
  bool cw = false;
  bool no_martingale = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
};

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& /*err*/) {
  if (opt.sense != "min" && opt.sense != "max") throw ParseError("--sense must be min or max");
  const Sense sense = opt.sense == "min" ? Sense::Minimize : Sense::Maximize;
  RunConfig rc;
  bool have_cost = false;
  if (opt.config) {
    rc = load_config(*opt.config);
    have_cost = true;
  }
  apply_overrides(rc, opt.seed, opt.tol);
  if (opt.x) rc.x = load_measure(*opt.x, rc.cfg);
  if (opt.y) rc.y = load_measure(*opt.y, rc.cfg);
  if (opt.z) rc.z = load_measure(*opt.z, rc.cfg);
  if (opt.eps) rc.epsilon = *opt.eps;

  const fs::path cp(*&opt.coupling);
  auto in = open_in(cp);
  const auto rows = with_file(cp, [&] { return io::read_coupling(in); });
  if (!rc.x || !rc.y || (rows.dims == 3 && !rc.z)) {
    throw ParseError("verify needs the marginals: pass --config or --x/--y" +
                     std::string(rows.dims == 3 ? "/--z" : ""));
  }
  std::optional<Expression> expr;
  if (opt.cost) {
    expr = Expression::parse(*opt.cost);
    if (rows.dims == 2 && expr->uses('z')) throw ParseError("two-period cost may only use x and y");
    have_cost = true;
  }
  TripleCost cost3;
  if (expr) {
    cost3 = [e = *expr](double x, double y, double z) { return e(x, y, z); };
  } else if (have_cost) {
    cost3 = rc.cost.with_epsilon(rc.epsilon).as_function();
  }

  json checks = json::array();
  bool all_ok = true;
  auto record = [&](json c) {
    all_ok = all_ok && c["ok"].get<bool>();
    checks.push_back(std::move(c));
  };
  if (rows.dims == 2) {
    const auto c = with_file(cp, [&] { return io::to_coupling2(rows, *rc.x, *rc.y, rc.cfg); });
    const auto chk = check_coupling(c, *rc.x, *rc.y, !opt.no_martingale, rc.cfg);
    record({{"name", "coupling"},
            {"ok", chk.ok()},
            {"marginal_residual", chk.marginal_residual},
            {"martingale_residual", chk.martingale_residual},
            {"failures", chk.failures}});
    if (opt.left_monotone) {
      const auto lm = left_monotone_check(c, rc.cfg);
      json j = {{"name", "left_monotone"}, {"ok", lm.ok}};
      if (lm.witness) {
        json w = json::array();
        for (const auto& [a, b] : *lm.witness) w.push_back({a, b});
        j["witness"] = w;
      }
      record(j);
    }
    if (opt.cw) {
      if (!cost3) throw ParseError("--cw needs a cost (--cost or --config)");
      const double sign = sense == Sense::Minimize ? 1.0 : -1.0;
      const PairCost pc = [&, sign](double x, double y) { return sign * cost3(x, y, 0.0); };
      const auto r = cw_monotone_check(weighted_support(c, rc.cfg.support_floor), pc, 8, 32, rc.cfg);
      json j = {{"name", "cw_monotone"},
                {"ok", r.ok},
                {"plan_cost", sign * r.beta_cost},
                {"competitor_cost", sign * r.best_competitor_cost},
                {"subsets_tested", r.subsets_tested}};
      if (!r.ok) {
        json comp = json::array();
        for (const auto& p : r.competitor) comp.push_back({p.x, p.z, p.weight});
        j["competitor"] = comp;
      }
      record(j);
    }
    if (opt.certificate) {
      if (!cost3) throw ParseError("--certificate needs a cost (--cost or --config)");
      auto cin = open_in(*opt.certificate);
      DualCertificate cert;
      try {
        cert = certificate_from_json(json::parse(cin));
      } catch (const json::exception& e) {
        throw ParseError(*opt.certificate + ": " + e.what());
      }
      const auto cc = check_certificate(cert, cost3, rc.cfg);
      json j = {{"name", "certificate"}};
      j.update(to_json(cc));
      const double primal = c.integrate([&](double x, double y) { return cost3(x, y, 0.0); });
      const double dual = cert.static_value(*rc.x, *rc.y);
      const double gap = std::abs(primal - dual);
      j["primal"] = primal;
      j["dual"] = dual;
      j["gap_ok"] = gap <= rc.cfg.certificate_tol * (1.0 + std::abs(primal));
      j["ok"] = cc.ok && j["gap_ok"].get<bool>();
      record(j);
    }
  } else {
    const auto c = with_file(cp, [&] { return io::to_coupling3(rows, *rc.x, *rc.y, *rc.z, rc.cfg); });
    const auto chk = check_coupling(c, *rc.x, *rc.y, *rc.z, rc.cfg);
    record({{"name", "coupling"},
            {"ok", chk.ok()},
            {"marginal_residual", chk.marginal_residual},
            {"martingale_residual", chk.martingale_residual},
            {"failures", chk.failures}});
    if (opt.left_monotone || opt.cw) throw ParseError("--left-monotone and --cw apply to two-column plans");
    if (opt.certificate) {
      if (!cost3) throw ParseError("--certificate needs a cost (--cost or --config)");
      auto cin = open_in(*opt.certificate);
      DualCertificate cert;
      try {
        cert = certificate_from_json(json::parse(cin));
      } catch (const json::exception& e) {
        throw ParseError(*opt.certificate + ": " + e.what());
      }
      if (!cert.three_period()) throw ParseError("certificate is two-period but the plan has three columns");
      const auto cc = check_certificate(cert, cost3, rc.cfg);
      json j = {{"name", "certificate"}};
      j.update(to_json(cc));
      const double primal = c.integrate(cost3);
      const double dual = cert.static_value(*rc.x, *rc.y, &*rc.z);
      j["primal"] = primal;
      j["dual"] = dual;
      j["gap_ok"] = std::abs(primal - dual) <= rc.cfg.certificate_tol * (1.0 + std::abs(primal));
      j["ok"] = cc.ok && j["gap_ok"].get<bool>();
      record(j);
    }
  }
  json report = {{"coupling", cp.filename().string()}, {"checks", checks}, {"ok", all_ok}};
  out << report.dump(2) << '\n';
  return all_ok ? kOk : kCheckFailed;
}

// --- dispatch -----------------------------------------------------------------------

/// Runs the command line `args` (without the program name). Returns the
/// process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Martingale optimal transport price bounds", "motbounds"};
  app.require_subcommand(1);

  Config ingest_cfg;
  IngestOptions ingest;
  auto* ci = app.add_subcommand("ingest", "Extract risk-neutral measures from call-price chains");
  ci->add_option("chains", ingest.chains, "Chain CSV files (strike,call_price) in maturity order")->required();
  ci->add_option("--out", ingest.out_dir, "Output directory")->required();
  ci->add_flag("--repair", ingest.repair, "Repair means and convex order with a minimal L1 reweighting");
  ci->add_option("--budget", ingest.budget, "Largest total weight change allowed by --repair");
  ci->add_option("--target-mean", ingest.target_mean, "Common mean after repair (default: first forward)");
  ci->add_option("--tol", ingest_cfg.tol, "Convex-order tolerance (relative to the mean)");

  BoundsOptions bounds;
  auto* cb = app.add_subcommand("bounds", "Exact and first-order price bounds at one epsilon");
  cb->add_option("--config", bounds.config, "Run configuration (JSON)")->required();
  cb->add_option("--eps", bounds.eps, "Perturbation weight of c3");
  cb->add_option("--method", bounds.method, "exact | first-order | both");
  cb->add_option("--tree-p", bounds.tree_p, "Comma-separated tree-model exponents, e.g. 1,2,3");
  cb->add_option("--out", bounds.out_dir, "Directory for bounds.json, optimisers and certificates");
  cb->add_option("--seed", bounds.seed, "Seed for the uniqueness probe");
  cb->add_option("--tol", bounds.tol, "Convex-order tolerance");
  cb->add_option("--dump-lp", bounds.dump_lp, "Write the lower-bound three-period LP as text");
  cb->add_flag("--json", bounds.json_stdout, "Print the JSON report instead of the table");
  cb->add_flag("--timing", bounds.timing, "Print solve times to stderr");

  CurveOptions curve;
  auto* cc = app.add_subcommand("curve", "Bound curves over an epsilon grid (CSV)");
  cc->add_option("--config", curve.config, "Run configuration (JSON)")->required();
  cc->add_option("--eps-grid", curve.eps_grid, "Comma-separated increasing epsilons");
  cc->add_option("--tree-p", curve.tree_p, "Comma-separated tree-model exponents");
  cc->add_option("--out", curve.out, "Output CSV (default: stdout)");
  cc->add_option("--seed", curve.seed, "Seed for the uniqueness probe");
  cc->add_option("--tol", curve.tol, "Convex-order tolerance");

  VerifyOptions verify;
  auto* cv = app.add_subcommand("verify", "Check a coupling file against its marginals");
  cv->add_option("--coupling", verify.coupling, "Coupling CSV (x,y,mass or x,y,z,mass)")->required();
  cv->add_option("--config", verify.config, "Run configuration supplying marginals and cost");
  cv->add_option("--x", verify.x, "First marginal CSV");
  cv->add_option("--y", verify.y, "Second marginal CSV");
  cv->add_option("--z", verify.z, "Third marginal CSV");
  cv->add_option("--cost", verify.cost, "Cost expression in x, y (and z)");
  cv->add_option("--eps", verify.eps, "Epsilon when the cost comes from --config");
  cv->add_option("--sense", verify.sense, "min | max");
  cv->add_option("--certificate", verify.certificate, "Dual certificate JSON to check");
  cv->add_flag("--left-monotone", verify.left_monotone, "Run the no-crossing check");
  cv->add_flag("--cw", verify.cw, "Run the (c,W)-monotonicity check");
  cv->add_flag("--no-martingale", verify.no_martingale, "Skip the martingale check (two-column plans)");
  cv->add_option("--seed", verify.seed, "Seed for subset sampling");
  cv->add_option("--tol", verify.tol, "Tolerance");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (ci->parsed()) return cmd_ingest(ingest, ingest_cfg, out, err);
    if (cb->parsed()) return cmd_bounds(bounds, out, err);
    if (cc->parsed()) return cmd_curve(curve, out, err);
    return cmd_verify(verify, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidMeasure& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const InternalError& e) {
    err << "internal error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace motbounds::cli
