// psivar: batch runner for the variable-order calculus experiments.
//
//   psivar <subcommand> [--config cfg.json] [--name value ...]
//
// Every parameter may come from the JSON config or a flag (flags win).
// Exit status: 0 pass, 1 invalid config, 2 contract violation, 3 inconclusive.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include "psivar/catalog.hpp"

using namespace psivar;
using io::ConfigError;
using io::Json;

namespace {

enum class Status { pass = 0, violation = 2, inconclusive = 3 };

const char* status_name(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::violation: return "violation";
    case Status::inconclusive: return "inconclusive";
  }
  return "?";
}

enum class Type { integer, real, text, boolean, integers, reals, json };

struct Param {
  std::string name;
  Type type;
  Json fallback;  // null: optional with no default
  std::string help;
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
};

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

class Context {
 public:
  Json cfg;
  Json out = Json::object();
  Csv csv;

  void use(const std::string& op) {
    if (seen_.insert(op).second) ops_.push_back(op);
  }
  const std::vector<std::string>& operations() const { return ops_; }

  int integer(const std::string& k) const { return cfg[k].get<int>(); }
  double real(const std::string& k) const { return cfg[k].get<double>(); }
  std::string text(const std::string& k) const { return cfg[k].get<std::string>(); }
  bool flag(const std::string& k) const { return cfg[k].get<bool>(); }
  std::vector<int> integers(const std::string& k) const { return cfg[k].get<std::vector<int>>(); }
  std::vector<double> reals(const std::string& k) const { return cfg[k].get<std::vector<double>>(); }
  bool has(const std::string& k) const { return cfg.contains(k) && !cfg[k].is_null(); }

  const io::Catalog& catalog() {
    if (!catalog_) {
      if (!has("catalog")) throw ConfigError("/catalog", "this subcommand needs a symbol catalog");
      catalog_ = io::Catalog::load(text("catalog"));
    }
    return *catalog_;
  }

  TwistedSymbol symbol(const std::string& key = "symbol") {
    const io::Catalog& c = catalog();
    const std::string name = text(key);
    try {
      const io::CatalogEntry& e = c.entry(name);
      const std::string kind = e.record.value("kind", "");
      if (kind == "dn") use("dn_symbol");
      if (kind == "twisted_extension") use("twisted_extend");
    } catch (const ConfigError&) {
      throw ConfigError("/" + key, "no symbol '" + name + "' in the catalog");
    }
    return c.symbol(name);
  }

  MatrixField field(const std::string& key, int q) { return io::parse_field(cfg[key], q, "/" + key); }

 private:
  std::optional<io::Catalog> catalog_;
  std::set<std::string> seen_;
  std::vector<std::string> ops_;
};

struct Command {
  std::string name, help;
  std::vector<Param> params;
  std::function<Status(Context&)> run;
};

// ---------------------------------------------------------------------------
// shared pieces

Param catalog_param() { return {"catalog", Type::text, nullptr, "symbol catalog (JSON)"}; }
Param symbol_param(const std::string& name = "symbol", const std::string& fallback = "0") {
  return {name, Type::text, fallback, "catalog entry, by name or position"};
}

std::vector<double> sample_point(const std::vector<double>& y, int q) {
  if (static_cast<int>(y.size()) != q) throw ConfigError("/y", "sample point must have " + std::to_string(q) + " coordinates");
  return y;
}

/// X weighted as an order-0 operator between the given actions, s = 0
ComplexMatrix normalized(const ComplexMatrix& x, const MatrixField& a_range, const MatrixField& a_domain, double mu, int n) {
  return weighted(x, sobolev_weight(a_range, 0.0, n), sobolev_weight(a_domain, mu, n));
}

/// least-squares slope of v against x
double linear_slope(const std::vector<double>& x, const std::vector<double>& v) {
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += x[i];
    sy += v[i];
    sxx += x[i] * x[i];
    sxy += x[i] * v[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TwistedSymbol hardy_plus(int m) {
  NodePtr node = product_node(hardy_projection(true).node(), constant_node(1, ComplexMatrix::Identity(m, m)));
  return TwistedSymbol(node, 0.0).with_label("hardy_plus");
}

// ---------------------------------------------------------------------------
// subcommands

Status group_action_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const std::vector<double> y = sample_point(c.has("y") ? c.reals("y") : std::vector<double>(p.q(), 0.0), p.q());
  const double rho = c.real("rho");
  double worst = 0;
  for (const char* side : {"domain", "range"}) {
    const ComplexMatrix a = std::string(side) == "domain" ? p.domain_action()(y) : p.range_action()(y);
    c.use("group_action");
    const ComplexMatrix g = group_action(a, rho), e = eigen_power(a, rho);
    const double rel = (g - e).norm() / std::max(1e-300, e.norm());
    worst = std::max(worst, rel);
    Json s{{"action", io::matrix_json(a)}, {"power", io::matrix_json(g)}, {"oracle_relative_difference", io::num(rel)}};
    // projection onto the whole spectrum must be the identity
    c.use("spectral_projection");
    const ComplexMatrix pr = spectral_projection(a, enclosing_contour(eigenvalues(a)));
    s["spectral_projection_defect"] = io::num((pr - ComplexMatrix::Identity(a.rows(), a.cols())).norm());
    if (c.has("sigma")) {
      const Complex sigma = io::parse_complex(c.cfg["sigma"], "/sigma");
      c.use("resolvent");
      s["resolvent"] = io::matrix_json(resolvent(a, sigma));
    }
    c.out[std::string(side) + "_action"] = std::move(s);
  }
  c.out["rho"] = rho;
  c.out["y"] = y;
  return worst <= 1e-8 ? Status::pass : Status::violation;
}

Json cluster_json(const ClusterDecomposition& d, const DecompositionAudit& a) {
  Json cl = Json::array();
  for (const auto& k : d.clusters)
    cl.push_back({{"center", io::complex_json(k.center)},
                  {"diameter", io::num(k.diameter)},
                  {"hull_radius", io::num(k.hull_radius)},
                  {"contour_radius", io::num(k.contour.diameter() / 2)},
                  {"rank", k.rank}});
  return {{"lo", d.region.lo},
          {"hi", d.region.hi},
          {"clusters", std::move(cl)},
          {"max_diameter", io::num(a.max_diameter)},
          {"min_separation", io::num(a.min_separation)},
          {"projection_algebra", io::num(a.algebra)},
          {"pass", a.pass}};
}

Status cluster_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const MatrixField a = c.text("action") == "range" ? p.range_action() : p.domain_action();
  if (c.text("action") != "range" && c.text("action") != "domain") throw ConfigError("/action", "expected domain or range");
  const double delta = c.real("delta");
  const SampledRegion region = SampledRegion::torus(p.q(), c.integer("resolution"));
  c.use("cluster_eigenvalues");
  Json regions = Json::array();
  bool ok = true;
  try {
    ClusterDecomposition d = cluster_eigenvalues(a, region, delta);
    DecompositionAudit au = audit_decomposition(d, a);
    ok = au.pass;
    regions.push_back(cluster_json(d, au));
    c.out["subdivided"] = false;
  } catch (const NeedsSubdivision& e) {
    c.out["needs_subdivision"] = e.what();
    if (!c.flag("bisect")) {
      c.out["regions"] = regions;
      return Status::inconclusive;
    }
    auto [left, right] = region.bisect();
    for (const SampledRegion& r : {left, right}) {
      try {
        ClusterDecomposition d = cluster_eigenvalues(a, r, delta);
        DecompositionAudit au = audit_decomposition(d, a);
        ok = ok && au.pass;
        regions.push_back(cluster_json(d, au));
      } catch (const NeedsSubdivision& inner) {
        regions.push_back({{"lo", r.lo}, {"hi", r.hi}, {"needs_subdivision", inner.what()}});
        c.out["regions"] = regions;
        c.out["subdivided"] = true;
        return Status::inconclusive;
      }
    }
    c.out["subdivided"] = true;
  }
  c.out["regions"] = regions;
  return ok ? Status::pass : Status::violation;
}

Status seminorm_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  c.use("seminorm_estimate");
  SeminormReport r = seminorm_estimate(p, c.integer("alpha"), c.integer("beta"), c.real("range"));
  Json entries = Json::array();
  c.csv.header = {"alpha", "beta", "sup", "slope", "pass"};
  for (const auto& e : r.entries) {
    entries.push_back({{"alpha", e.alpha}, {"beta", e.beta}, {"sup", io::num(e.sup)}, {"slope", io::num(e.slope)}, {"pass", e.pass}});
    c.csv.rows.push_back({double(degree(e.alpha)), double(degree(e.beta)), e.sup, e.slope, e.pass ? 1.0 : 0.0});
  }
  c.out["order"] = r.order;
  c.out["delta"] = r.delta;
  c.out["entries"] = std::move(entries);
  c.out["pass"] = r.pass();
  c.use("verify_ellipticity");
  EllipticityReport el = verify_ellipticity(p, c.real("range"));
  c.out["ellipticity"] = {{"elliptic", el.elliptic}, {"R", io::num(el.radius)}, {"C", io::num(el.constant)}};
  if (c.has("alpha1")) {
    const int q = p.q();
    auto idx = [&](const char* k) {
      std::vector<int> v = c.has(k) ? c.integers(k) : std::vector<int>(q, 0);
      if (static_cast<int>(v.size()) != q) throw ConfigError(std::string("/") + k, "multi-index dimension differs from q");
      return v;
    };
    c.use("bracket_derivative_decay");
    DecayFit f = bracket_derivative_decay(p.domain_action(), idx("alpha1"), idx("beta1"), idx("alpha2"), idx("beta2"),
                                          c.real("range"), p.delta());
    c.out["bracket_decay"] = {{"exponent", io::num(f.exponent)}, {"radii", io::num_list(f.radii)}, {"values", io::num_list(f.values)}};
  }
  return r.pass() ? Status::pass : Status::violation;
}

Status extend_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  if (c.has("power")) {
    // b(y, eta)^{a(y)} for the catalog's positive scalar order-0 symbol b
    MatrixField a = c.field("power", p.q());
    c.use("scalar_power_symbol");
    p = scalar_power_symbol(p, a);
  }
  OrderFit f = fitted_order(p, c.integer("lo"), c.integer("hi"));
  c.out["declared_order"] = p.order();
  c.out["fitted_order"] = io::num(f.order);
  c.csv.header = {"radius", "weighted_sup"};
  for (size_t i = 0; i < f.radii.size(); ++i) c.csv.rows.push_back({f.radii[i], f.values[i]});
  return std::abs(f.order - p.order()) <= c.real("tol") ? Status::pass : Status::violation;
}

Status compose_cmd(Context& c) {
  TwistedSymbol p1 = c.symbol(), p2 = c.symbol("symbol2");
  const int n = c.integer("N"), jmax = c.integer("J");
  c.use("quantize");
  const ComplexMatrix prod = quantize(p1, n).matrix * quantize(p2, n).matrix;
  const double mu = p1.order() + p2.order();
  c.csv.header = {"J", "interior_norm", "fitted_order"};
  std::vector<double> norms;
  for (int j = 0; j <= jmax; ++j) {
    c.use("sharp_product");
    TwistedSymbol s = sharp_product(p1, p2, j);
    ComplexMatrix w = normalized(prod - quantize(s, n).matrix, p1.range_action(), p2.domain_action(), 0.0, n);
    const double nb = band_norm(w, p1.q(), n, p1.rows(), p2.cols(), n / 4, n / 2);
    const double fo = column_profile_order(w, p1.q(), n, p1.rows(), p2.cols());
    norms.push_back(nb);
    c.csv.rows.push_back({double(j), nb, fo});
  }
  c.out["order_sum"] = mu;
  c.out["interior_norms"] = io::num_list(norms);
  bool mono = true;
  for (size_t i = 1; i < norms.size(); ++i) mono = mono && norms[i] < norms[i - 1];
  c.out["monotone"] = mono;
  return mono ? Status::pass : Status::violation;
}

Status adjoint_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const int n = c.integer("N"), jmax = c.integer("J");
  c.use("quantize");
  const ComplexMatrix th = quantize(p, n).matrix.adjoint();
  c.csv.header = {"J", "interior_norm"};
  std::vector<double> norms;
  for (int j = 0; j <= jmax; ++j) {
    c.use("adjoint_symbol");
    TwistedSymbol a = adjoint_symbol(p, j);
    ComplexMatrix w = normalized(th - quantize(a, n).matrix, a.range_action(), a.domain_action(), a.order(), n);
    norms.push_back(band_norm(w, p.q(), n, p.cols(), p.rows(), n / 4, n / 2));
    c.csv.rows.push_back({double(j), norms.back()});
  }
  c.out["interior_norms"] = io::num_list(norms);
  return norms.back() <= norms.front() ? Status::pass : Status::violation;
}

Status parametrix_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const int n = c.integer("N"), jmax = c.integer("J");
  c.use("quantize");
  const ComplexMatrix pm = quantize(p, n).matrix;
  const int m = p.rows();
  c.csv.header = {"J", "fitted_order", "interior_residual"};
  std::vector<double> js, orders;
  double radius = 0;
  for (int j = 0; j <= jmax; ++j) {
    c.use("parametrix_symbol");
    c.use("verify_ellipticity");
    Parametrix q = parametrix_symbol(p, j);
    radius = q.radius;
    TwistedSymbol r = composition_residual(p, q.symbol, j + 2);
    const double fo = fitted_order(r, c.integer("lo"), c.integer("hi")).order;
    ComplexMatrix res = pm * quantize(q.symbol, n).matrix - ComplexMatrix::Identity(pm.rows(), pm.rows());
    ComplexMatrix w = normalized(res, p.range_action(), p.range_action(), 0.0, n);
    const double band = band_norm(w, p.q(), n, m, m, n / 4, n / 2);
    js.push_back(j);
    orders.push_back(fo);
    c.csv.rows.push_back({double(j), fo, band});
  }
  c.out["delta"] = p.delta();
  c.out["excision_radius"] = io::num(radius);
  c.out["fitted_orders"] = io::num_list(orders);
  c.out["fitted_slope"] = io::num(orders.back());
  c.out["order_gain_per_J"] = io::num(jmax > 0 ? -linear_slope(js, orders) : 0.0);
  c.out["expected_gain_per_J"] = 1 - p.delta();
  if (c.flag("invariance")) {
    c.use("spectral_invariance_check");
    SpectralInvarianceReport s = spectral_invariance_check(p, c.integer("invariance_N"));
    c.out["spectral_invariance"] = {{"N", s.N},
                                    {"inverse_order", io::num(s.inverse_order)},
                                    {"expected_order", s.expected_order},
                                    {"parametrix_distance", io::num(s.parametrix_distance)},
                                    {"conditioning", io::num(s.conditioning)},
                                    {"spectrum_shift", io::num(s.spectrum_shift)},
                                    {"in_class", s.in_class}};
    if (!s.in_class) return Status::violation;
  }
  bool improving = true;
  for (size_t i = 1; i < orders.size(); ++i) improving = improving && orders[i] < orders[i - 1];
  return improving ? Status::pass : Status::violation;
}

Status frame_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const int q = p.q();
  MatrixField t1 = c.field("theta", q);
  MatrixField t2 = c.has("theta2") ? c.field("theta2", q) : t1;
  if (t1.rows() != p.cols() || t2.rows() != p.rows()) throw ConfigError("/theta", "frame size differs from the symbol");
  const SampledRegion region = SampledRegion::torus(q, q == 1 ? 32 : 12);
  const std::vector<double> rhos = {1.0, 2.0, 8.0, 64.0, 1024.0};
  const MatrixField id1 = MatrixField::identity(q, p.cols());
  const MatrixField b1 = t1 * p.domain_action() * t1.inverse();
  c.use("transition_homogeneity_check");
  TransitionReport tr = transition_homogeneity_check(id1, t1, p.domain_action(), b1, region, rhos);
  c.out["transition"] = {{"max_residual", io::num(tr.max_residual)}, {"certified", tr.certified}};
  c.use("frame_conjugate");
  TwistedSymbol conj = frame_conjugate(p, t1, t2, c.integer("J"));
  TwistedSymbol principal(product_node(product_node(field_node(t2), p.node()), field_node(t1.inverse())), p.order(),
                          conj.domain_action(), conj.range_action(), p.delta());
  const double fo = fitted_order(conj - principal, c.integer("lo"), c.integer("hi")).order;
  c.out["symbol_order"] = p.order();
  c.out["correction_order"] = io::num(fo);
  // corrections start one step (1 - delta) below the symbol
  return tr.certified && fo <= p.order() - (1 - p.delta()) + 0.15 ? Status::pass : Status::violation;
}

Status order_reduce_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const double mu = c.real("mu");
  c.use("order_reduction");
  OrderReduction r = order_reduction(p.domain_action(), p.range_action(), mu, c.integer("N"), c.real("threshold"));
  const double inv = inverse_profile_order(r, p.domain_action(), p.range_action());
  c.csv.header = {"lambda", "conditioning"};
  for (size_t i = 0; i < r.lambdas.size(); ++i) c.csv.rows.push_back({r.lambdas[i], r.conditioning[i]});
  c.out["lambda0"] = r.lambda;
  c.out["conditioning"] = io::num(r.conditioning.back());
  c.out["inverse_profile_order"] = io::num(inv);
  c.out["expected_inverse_order"] = -mu;
  return std::abs(inv + mu) <= 0.1 ? Status::pass : Status::violation;
}

Status quantize_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const int n = c.integer("N");
  c.use("quantize");
  TruncatedOperator t = quantize(p, n);
  // oracle: pointwise application of the symbol to a band-limited section
  GridSection u = power_law_source(p.q(), n, p.cols(), -2.0, c.integer("seed"));
  const ModeSet modes(p.q(), n);
  for (int i = 0; i < modes.size(); ++i)
    if (modes.inf_norm(i) > n / 4)
      for (int k = 0; k < p.cols(); ++k) u.coeffs(i * p.cols() + k) = 0;
  GridSection out(p.q(), n, p.rows());
  out.coeffs = t.matrix * u.coeffs;
  double err = 0, scale = 0;
  for (int j = 0; j < 5; ++j) {
    std::vector<double> y(p.q(), 0.37 + 1.21 * j);
    ComplexVector want = apply_pointwise(p, u, y);
    err = std::max(err, (synthesize(out, y) - want).norm());
    scale = std::max(scale, want.norm());
  }
  c.out["shape"] = {t.matrix.rows(), t.matrix.cols()};
  c.out["frobenius_norm"] = io::num(t.matrix.norm());
  c.out["pointwise_relative_error"] = io::num(err / std::max(scale, 1e-300));
  if (c.flag("matrix")) c.out["operator"] = io::operator_json(t);
  return Status::pass;
}

Status sobolev_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const int n = c.integer("N"), q = p.q(), m = p.cols();
  const double s = c.real("s");
  const MatrixField a = p.domain_action();
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  GridSection u = power_law_source(q, n, m, c.real("exponent"), seed);
  GridSection v = power_law_source(q, n, m, c.real("exponent"), seed + 1);
  c.use("sobolev_norm");
  const TruncatedOperator l1 = sobolev_weight(a, s, n), l2 = sobolev_weight(-a.adjoint(), -s, n);
  const double nu = sobolev_norm(u, l1), nv = sobolev_norm(v, l2);
  c.use("duality_pairing");
  const Complex pair = duality_pairing(u, v);
  DualityReport d = duality_constant(l1, l2, 200, seed);
  c.out["norm"] = io::num(nu);
  c.out["dual_norm"] = io::num(nv);
  c.out["pairing"] = io::complex_json(pair);
  c.out["duality_constant"] = io::num(d.constant);
  c.out["sampled_ratio_max"] = io::num(d.sampled_max);
  return std::abs(pair) <= d.constant * nu * nv * (1 + 1e-10) ? Status::pass : Status::violation;
}

Status mapping_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const double s = c.real("s");
  c.csv.header = {"N", "norm"};
  std::vector<double> norms;
  for (int n : c.integers("Ns")) {
    c.use("quantize");
    TruncatedOperator t = quantize(p, n);
    c.use("mapping_bound");
    MappingBound b = mapping_bound(t, s, p.order(), p.domain_action(), p.range_action(), n / 2);
    norms.push_back(b.norm);
    c.csv.rows.push_back({double(n), b.norm});
  }
  const auto [lo, hi] = std::minmax_element(norms.begin(), norms.end());
  const double spread = (*hi - *lo) / *lo;
  c.out["norms"] = io::num_list(norms);
  c.out["relative_spread"] = io::num(spread);
  return spread <= c.real("tol") ? Status::pass : Status::violation;
}

Status regularity_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  const int q = p.q(), m = p.rows();
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  const double expo = c.real("exponent");
  auto family = [&](int n) { return quantize(p, n); };
  auto source = [&](int n) { return power_law_source(q, n, m, expo, seed); };
  c.use("regularity_probe");
  RegularityReport r = regularity_probe(family, source, c.real("s"), p.order(), p.domain_action(), c.integers("Ns"));
  c.csv.header = {"N", "target_norm", "control_norm"};
  for (size_t i = 0; i < r.Ns.size(); ++i) c.csv.rows.push_back({double(r.Ns[i]), r.target[i], r.control[i]});
  c.out["verdict"] = r.verdict;
  c.out["target_slope"] = io::num(r.target_slope);
  c.out["control_slope"] = io::num(r.control_slope);
  if (r.verdict == "inconclusive") return Status::inconclusive;
  if (c.has("expect")) {
    const std::string want = c.text("expect");
    if (want != "bounded" && want != "diverging") throw ConfigError("/expect", "expected bounded or diverging");
    return want == r.verdict ? Status::pass : Status::violation;
  }
  return Status::pass;
}

Status index_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  if (p.rows() != p.cols()) throw ConfigError("/symbol", "index needs a square symbol");
  const int n = c.integer("N"), big = n + c.integer("K");
  const std::string proj = c.text("proj");
  if (proj != "hardy" && proj != "none") throw ConfigError("/proj", "expected hardy or none");
  TruncatedOperator t = normalized_operator(p, big);
  ComplexMatrix pi = ComplexMatrix::Identity(t.matrix.rows(), t.matrix.rows());
  TwistedSymbol wound = p;
  if (proj == "hardy") {
    if (p.q() != 1) throw ConfigError("/proj", "Hardy projections live on the circle");
    TwistedSymbol h = hardy_plus(p.rows());
    pi = quantize(h, big).matrix;
    wound = toeplitz_completion(p, h, h);
  }
  c.use("compression_index");
  IndexReport comp = compression_index(t, pi, pi, n);
  c.out["index"] = comp.index;
  c.out["compression"] = io::index_json(comp);
  bool agree = true, wound_ok = false;
  if (p.q() == 1) {
    try {
      c.use("winding_index");
      IndexReport w = winding_index(wound, c.integer("n_angle"));
      c.out["winding"] = io::index_json(w);
      wound_ok = true;
      agree = w.index == comp.index;
    } catch (const Error& e) {
      c.out["winding"] = {{"conclusive", false}, {"error", kind_name(e.kind())}, {"message", e.what()}};
    }
  }
  c.out["agree"] = agree;
  if (!comp.conclusive) return Status::inconclusive;
  return !wound_ok || agree ? Status::pass : Status::violation;
}

Status riesz_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  if (p.order() != 0) throw ConfigError("/symbol", "Riesz projections need an order-0 symbol");
  const double eps = c.real("eps");
  TwistedSymbol ps = spectral_projection_symbol(p, eps);
  c.csv.header = {"N", "rank", "idempotency", "distance_to_symbol_projection", "nearest_eigenvalue_gap"};
  std::vector<double> ns, dist;
  double worst_idem = 0;
  for (int n : c.integers("Ns")) {
    TruncatedOperator t = normalized_operator(p, n);
    c.use("riesz_projection");
    CalculusProjection r = riesz_projection(t.matrix, eps);
    ComplexMatrix w = normalized(r.projection - quantize(ps, n).matrix, p.range_action(), p.range_action(), 0.0, n);
    // interior band: on the lowest modes the difference tends to a fixed order -1 operator
    const double d = band_norm(w, p.q(), n, p.rows(), p.rows(), n / 4, n / 2);
    ns.push_back(n);
    dist.push_back(d);
    worst_idem = std::max(worst_idem, r.idempotency);
    c.csv.rows.push_back({double(n), double(r.rank), r.idempotency, d, r.distance});
  }
  c.out["max_idempotency"] = io::num(worst_idem);
  c.out["distances"] = io::num_list(dist);
  if (ns.size() > 1) c.out["distance_slope"] = io::num(loglog_slope(ns, dist));
  return worst_idem <= 1e-8 ? Status::pass : Status::violation;
}

Status toeplitz_cmd(Context& c) {
  TwistedSymbol p = c.symbol();
  TwistedSymbol p1 = c.symbol("proj"), p2 = c.has("proj2") ? c.symbol("proj2") : p1;
  c.use("toeplitz_parametrix");
  ToeplitzParametrix tp = toeplitz_parametrix(p, p1, p2, c.integer("J"));
  c.csv.header = {"N", "forward", "mirror"};
  std::vector<double> fw, mi;
  for (int n : c.integers("Ns")) {
    const ComplexMatrix q1 = quantize(p1, n).matrix, q2 = quantize(p2, n).matrix;
    ToeplitzResiduals r = toeplitz_residuals(p, tp, q1, q2, n);
    fw.push_back(r.forward);
    mi.push_back(r.mirror);
    c.csv.rows.push_back({double(n), r.forward, r.mirror});
  }
  c.out["restricted_min_singular"] = io::num(tp.restricted_min_singular);
  c.out["forward"] = io::num_list(fw);
  c.out["mirror"] = io::num_list(mi);
  return fw.back() <= c.real("tol") && mi.back() <= c.real("tol") ? Status::pass : Status::violation;
}

std::vector<Command> commands() {
  const Param cat = catalog_param(), sym = symbol_param();
  const Param seed{"seed", Type::integer, 0, "RNG seed", 0, 1e9};
  return {
      {"group-action", "matrix powers rho^a of the symbol's actions, Dunford against eigen oracle",
       {cat, sym, {"rho", Type::real, 2.0, "positive base", 1e-300}, {"y", Type::reals, nullptr, "sample point"},
        {"sigma", Type::json, nullptr, "resolvent point, number or [re, im]"}},
       group_action_cmd},
      {"cluster", "admissible eigenvalue clusters of an action over the torus",
       {cat, sym, {"action", Type::text, "domain", "domain or range"}, {"delta", Type::real, 0.5, "cluster diameter bound", 1e-6, 0.999999},
        {"resolution", Type::integer, 32, "samples per axis", 8, 4096}, {"bisect", Type::boolean, true, "bisect once on failure"}},
       cluster_cmd},
      {"seminorm", "symbol seminorm slopes and ellipticity",
       {cat, sym, {"alpha", Type::integer, 2, "max y-derivatives", 0, 6}, {"beta", Type::integer, 2, "max eta-derivatives", 0, 6},
        {"range", Type::real, 1024.0, "largest |eta|", 32, 1e8}, {"alpha1", Type::integers, nullptr, "bracket decay: alpha1"},
        {"beta1", Type::integers, nullptr, "bracket decay: beta1"}, {"alpha2", Type::integers, nullptr, "bracket decay: alpha2"},
        {"beta2", Type::integers, nullptr, "bracket decay: beta2"}},
       seminorm_cmd},
      {"extend", "measured order of a twisted extension or a scalar power symbol",
       {cat, sym, {"power", Type::json, nullptr, "exponent field for b^a"}, {"lo", Type::integer, 4, "first octave", 0, 30},
        {"hi", Type::integer, 10, "last octave", 1, 30}, {"tol", Type::real, 0.1, "order tolerance", 0}},
       extend_cmd},
      {"compose", "quantized composition against the sharp product",
       {cat, sym, symbol_param("symbol2", "1"), {"J", Type::integer, 3, "expansion order", 0, 8},
        {"N", Type::integer, 64, "truncation", 4, 512}},
       compose_cmd},
      {"adjoint", "quantized adjoint against the adjoint expansion",
       {cat, sym, {"J", Type::integer, 2, "expansion order", 0, 8}, {"N", Type::integer, 32, "truncation", 4, 512}},
       adjoint_cmd},
      {"parametrix", "parametrix residual orders per expansion order",
       {cat, sym, {"J", Type::integer, 3, "expansion order", 0, 8}, {"N", Type::integer, 64, "truncation", 4, 512},
        {"lo", Type::integer, 5, "first octave", 0, 30}, {"hi", Type::integer, 8, "last octave", 1, 30},
        {"invariance", Type::boolean, false, "also run the spectral invariance check"},
        {"invariance_N", Type::integer, 32, "truncation for the invariance check", 4, 256}},
       parametrix_cmd},
      {"frame", "conjugation by y-dependent frames",
       {cat, sym, {"theta", Type::json, nullptr, "domain frame field"}, {"theta2", Type::json, nullptr, "range frame field"},
        {"J", Type::integer, 2, "expansion order", 0, 8}, {"lo", Type::integer, 4, "first octave", 0, 30},
        {"hi", Type::integer, 8, "last octave", 1, 30}},
       frame_cmd},
      {"order-reduce", "invertible order reduction between the symbol's actions",
       {cat, sym, {"mu", Type::real, 1.0, "order"}, {"N", Type::integer, 32, "truncation", 4, 256},
        {"threshold", Type::real, 1e-6, "conditioning threshold", 0, 1}},
       order_reduce_cmd},
      {"quantize", "toroidal truncation with a pointwise oracle",
       {cat, sym, {"N", Type::integer, 16, "truncation", 4, 256}, {"matrix", Type::boolean, false, "embed the matrix"}, seed},
       quantize_cmd},
      {"sobolev", "variable-order Sobolev norms and duality",
       {cat, sym, {"s", Type::real, 0.5, "smoothness"}, {"N", Type::integer, 16, "truncation", 4, 256},
        {"exponent", Type::real, -1.0, "source decay exponent"}, seed},
       sobolev_cmd},
      {"mapping", "operator norms between Sobolev spaces across truncations",
       {cat, sym, {"s", Type::real, 0.0, "smoothness"}, {"Ns", Type::integers, Json::array({32, 64, 128}), "truncations"},
        {"tol", Type::real, 0.2, "allowed relative spread", 0}},
       mapping_cmd},
      {"regularity", "elliptic regularity probe on a power-law source",
       {cat, sym, {"s", Type::real, 0.5, "smoothness"}, {"exponent", Type::real, -2.0, "source decay exponent"},
        {"Ns", Type::integers, Json::array({16, 32, 64}), "truncations"}, {"expect", Type::text, nullptr, "bounded or diverging"}, seed},
       regularity_cmd},
      {"index", "Fredholm index by compression and by winding",
       {cat, sym, {"proj", Type::text, "none", "hardy or none"}, {"N", Type::integer, 16, "inner truncation", 2, 256},
        {"K", Type::integer, 8, "outer margin", 1, 256}, {"n_angle", Type::integer, 2048, "winding samples", 16, 1 << 20}},
       index_cmd},
      {"riesz", "Riesz projections of order-0 truncations",
       {cat, sym, {"eps", Type::real, 0.5, "contour radius about 1", 1e-6, 0.999999},
        {"Ns", Type::integers, Json::array({16, 32, 64}), "truncations"}},
       riesz_cmd},
      {"toeplitz", "parametrix of a compression between projection symbols",
       {cat, sym, symbol_param("proj", "proj"), {"proj2", Type::text, nullptr, "range projection (default proj)"},
        {"J", Type::integer, 2, "expansion order", 0, 8}, {"Ns", Type::integers, Json::array({32, 64}), "truncations"},
        {"tol", Type::real, 1e-2, "residual tolerance", 0}},
       toeplitz_cmd},
  };
}

// ---------------------------------------------------------------------------
// config handling

Json parse_flag(const Param& p, const std::string& v) {
  const std::string ptr = "/" + p.name;
  auto real = [&](const std::string& s) {
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != 0) throw ConfigError(ptr, "'" + s + "' is not a number");
    return d;
  };
  auto integer = [&](const std::string& s) {
    char* end = nullptr;
    const long d = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != 0) throw ConfigError(ptr, "'" + s + "' is not an integer");
    return static_cast<int>(d);
  };
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        parts.push_back(cur);
        cur.clear();
      } else if (ch != ' ' && ch != '[' && ch != ']') {
        cur += ch;
      }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
  };
  switch (p.type) {
    case Type::integer: return integer(v);
    case Type::real: return real(v);
    case Type::text: return v;
    case Type::boolean:
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ConfigError(ptr, "expected true or false");
    case Type::integers: {
      Json a = Json::array();
      for (const auto& s : split(v)) a.push_back(integer(s));
      return a;
    }
    case Type::reals: {
      Json a = Json::array();
      for (const auto& s : split(v)) a.push_back(real(s));
      return a;
    }
    case Type::json:
      try {
        return Json::parse(v);
      } catch (const std::exception&) {
        throw ConfigError(ptr, "not valid JSON");
      }
  }
  return nullptr;
}

void check_value(const Param& p, const Json& v) {
  const std::string ptr = "/" + p.name;
  auto in_range = [&](double x, const std::string& where) {
    if (!(x >= p.lo && x <= p.hi)) {
      std::ostringstream os;
      os << "value " << x << " outside [" << p.lo << ", " << p.hi << "]";
      throw ConfigError(where, os.str());
    }
  };
  switch (p.type) {
    case Type::integer:
      if (!v.is_number_integer()) throw ConfigError(ptr, "expected an integer");
      in_range(v.get<double>(), ptr);
      break;
    case Type::real:
      if (!v.is_number()) throw ConfigError(ptr, "expected a number");
      in_range(v.get<double>(), ptr);
      break;
    case Type::text:
      if (!v.is_string()) throw ConfigError(ptr, "expected a string");
      break;
    case Type::boolean:
      if (!v.is_boolean()) throw ConfigError(ptr, "expected true or false");
      break;
    case Type::integers:
    case Type::reals:
      if (!v.is_array() || v.empty()) throw ConfigError(ptr, "expected a non-empty list");
      for (size_t i = 0; i < v.size(); ++i) {
        if (p.type == Type::integers ? !v[i].is_number_integer() : !v[i].is_number())
          throw ConfigError(ptr + "/" + std::to_string(i), p.type == Type::integers ? "expected an integer" : "expected a number");
        if (p.type == Type::integers) in_range(v[i].get<double>(), ptr + "/" + std::to_string(i));
      }
      break;
    case Type::json: break;
  }
}

Json read_config(const std::string& path, const Command& cmd) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/config", "cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("/config", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "subcommand") {
      if (!it.value().is_string() || it.value().get<std::string>() != cmd.name)
        throw ConfigError("/subcommand", "config is for a different subcommand");
      continue;
    }
    bool known = false;
    for (const auto& p : cmd.params) known = known || p.name == it.key();
    if (!known) throw ConfigError("/" + it.key(), "unknown field for " + cmd.name);
  }
  return j;
}

void write_csv(const std::string& path, const Csv& csv) {
  std::ofstream f(path);
  if (!f) throw ConfigError("/csv", "cannot write '" + path + "'");
  for (size_t i = 0; i < csv.header.size(); ++i) f << (i ? "," : "") << csv.header[i];
  f << "\n";
  char buf[64];
  for (const auto& row : csv.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      f << (i ? "," : "") << buf;
    }
    f << "\n";
  }
}

int invalid(const std::string& pointer, const std::string& msg) {
  Json r{{"schema", "psivar-report/1"}, {"status", "invalid-config"}, {"pointer", pointer}, {"message", msg}};
  std::cout << r.dump(2) << "\n";
  std::cerr << "psivar: invalid config at " << (pointer.empty() ? "/" : pointer) << ": " << msg << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Command> cmds = commands();
  CLI::App app{"psivar: variable-order pseudodifferential calculus experiments"};
  app.require_subcommand(1);
  std::map<std::string, std::string> config_path;
  std::map<std::string, std::map<std::string, std::string>> flags;
  std::map<std::string, std::string> out_path, csv_path;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    subs[cmd.name] = sub;
    sub->add_option("--config", config_path[cmd.name], "JSON config");
    sub->add_option("--out", out_path[cmd.name], "write the report here as well as to stdout");
    sub->add_option("--csv", csv_path[cmd.name], "write the series as CSV");
    for (const auto& p : cmd.params) sub->add_option("--" + p.name, flags[cmd.name][p.name], p.help);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return invalid("", e.what());
  }

  const Command* cmd = nullptr;
  for (const auto& c : cmds)
    if (subs[c.name]->parsed()) cmd = &c;

  Context ctx;
  try {
    Json cfg = Json::object();
    Json file = config_path[cmd->name].empty() ? Json::object() : read_config(config_path[cmd->name], *cmd);
    for (const auto& p : cmd->params) {
      Json v = nullptr;
      if (subs[cmd->name]->count("--" + p.name) > 0)
        v = parse_flag(p, flags[cmd->name][p.name]);
      else if (file.contains(p.name))
        v = file[p.name];
      else
        v = p.fallback;
      if (!v.is_null()) check_value(p, v);
      cfg[p.name] = std::move(v);
    }
    ctx.cfg = std::move(cfg);
  } catch (const ConfigError& e) {
    return invalid(e.pointer(), e.what());
  }

  Json report{{"schema", "psivar-report/1"}, {"subcommand", cmd->name}};
  Status status = Status::pass;
  try {
    status = cmd->run(ctx);
  } catch (const ConfigError& e) {
    return invalid(e.pointer(), e.what());
  } catch (const Error& e) {
    status = Status::violation;
    ctx.out["error"] = {{"kind", kind_name(e.kind())}, {"message", e.what()}};
  }
  report["status"] = status_name(status);
  report["config"] = ctx.cfg;
  for (auto it = ctx.out.begin(); it != ctx.out.end(); ++it) report[it.key()] = it.value();
  report["operations"] = ctx.operations();
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  try {
    if (!out_path[cmd->name].empty()) {
      std::ofstream f(out_path[cmd->name]);
      if (!f) throw ConfigError("/out", "cannot write '" + out_path[cmd->name] + "'");
      f << text;
    }
    if (!csv_path[cmd->name].empty()) write_csv(csv_path[cmd->name], ctx.csv);
  } catch (const ConfigError& e) {
    return invalid(e.pointer(), e.what());
  }
  return static_cast<int>(status);
}
