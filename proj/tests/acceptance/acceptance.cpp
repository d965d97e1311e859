// Acceptance gate: one line per criterion, non-zero exit if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "psivar/catalog.hpp"
#include "psivar/fredholm_toeplitz.hpp"

using namespace psivar;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

std::string data(const std::string& f) { return std::string(PSIVAR_DATA) + "/catalog/" + f; }

std::mt19937_64 seeded(std::uint64_t s) { return std::mt19937_64(0x9e3779b97f4a7c15ULL ^ s); }

Complex gauss(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const double re = g(rng);
  return {re, g(rng)};
}

ComplexMatrix random_matrix(std::mt19937_64& rng, int m) {
  ComplexMatrix a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = gauss(rng);
  return a;
}

// scalar trig polynomial c0 + sum over 1 <= |k| <= deg of scale * gaussian e^{iky}
MatrixField scalar_trig(std::mt19937_64& rng, Complex c0, int deg, double scale) {
  MatrixTrigPolynomial t{1, 1, 1, {{{0}, ComplexMatrix::Constant(1, 1, c0)}}};
  for (int k = 1; k <= deg; ++k) {
    t.terms.push_back({{k}, ComplexMatrix::Constant(1, 1, scale * gauss(rng))});
    t.terms.push_back({{-k}, ComplexMatrix::Constant(1, 1, scale * gauss(rng))});
  }
  return MatrixField::trig_polynomial(t);
}

MatrixField exp_iky(int k, double c = 1.0) {
  return MatrixField::trig_polynomial({1, 1, 1, {{{k}, ComplexMatrix::Constant(1, 1, c)}}});
}

// field times <eta>^s, declared order s
TwistedSymbol weighted_entry(const MatrixField& f, double s) {
  if (s == 0) return TwistedSymbol(field_node(f), 0.0);
  return TwistedSymbol(product_node(field_node(f), bracket_node(f.q(), s)), s);
}

TwistedSymbol field_symbol(const MatrixField& f) { return TwistedSymbol(field_node(f), 0.0); }

ComplexMatrix normalized(const ComplexMatrix& x, const MatrixField& a_range, const MatrixField& a_domain, int n) {
  return weighted(x, sobolev_weight(a_range, 0.0, n), sobolev_weight(a_domain, 0.0, n));
}

double max_abs_diff(const std::vector<double>& v) {
  double d = 0;
  for (size_t i = 1; i < v.size(); ++i) d = std::max(d, std::abs(v[i] - v[i - 1]));
  return d;
}

// ---------------------------------------------------------------------------

Verdict group_action_laws() {
  auto rng = seeded(1);
  std::uniform_int_distribution<int> dim(1, 4);
  std::uniform_real_distribution<double> rad(0.05, 2.0), r(0.25, 4.0);
  double law = 0, unit = 0, oracle = 0;
  for (int t = 0; t < 200; ++t) {
    const int m = dim(rng);
    ComplexMatrix a = random_matrix(rng, m);
    double sr = 0;
    for (Complex e : eigenvalues(a)) sr = std::max(sr, std::abs(e));
    a *= rad(rng) / sr;
    const double r1 = r(rng), r2 = r(rng);
    law = std::max(law, (group_action(a, r1 * r2) - group_action(a, r1) * group_action(a, r2)).norm());
    unit = std::max(unit, (group_action(a, 1.0) - ComplexMatrix::Identity(m, m)).norm());
    const ComplexMatrix ref = eigen_power(a, r1);
    oracle = std::max(oracle, (group_action(a, r1) - ref).norm() / ref.norm());
  }
  return {law <= 1e-9 && unit <= 1e-12 && oracle <= 1e-8,
          "law " + fmt(law) + ", unit " + fmt(unit) + ", oracle " + fmt(oracle)};
}

// a(y) = S(y) D(y) S(y)^{-1}: clusters at spaced centers, sometimes a close
// pair, sometimes a branch sweeping more than delta over the circle but
// less than delta over either half
MatrixField cluster_family(std::uint64_t seed, bool& sweeping) {
  auto rng = seeded(100 + seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> centers = {0.0, 1.2, 2.4, 3.6};
  std::shuffle(centers.begin(), centers.end(), rng);
  const bool pair = u(rng) < 0.3;
  sweeping = u(rng) < 0.4;
  MatrixTrigPolynomial d{1, 4, 4, {}};
  ComplexMatrix c0 = ComplexMatrix::Zero(4, 4), cp = ComplexMatrix::Zero(4, 4), cm = ComplexMatrix::Zero(4, 4);
  for (int k = 0; k < 4; ++k) {
    const double im = 0.6 * (u(rng) - 0.5);
    c0(k, k) = Complex(centers[k], im);
    if (pair && k == 1) c0(1, 1) = c0(0, 0) + 0.12;
    const double amp = (pair && k <= 1) ? 0.1 * u(rng) : 0.2 * u(rng);
    const double phase = 2 * kPi * u(rng);
    cp(k, k) = 0.5 * amp * std::polar(1.0, -phase);
    cm(k, k) = 0.5 * amp * std::polar(1.0, phase);
  }
  if (sweeping) {
    // -A sin y, monotone on each half of the circle
    const double amp = 0.3 + 0.15 * u(rng);
    cp(3, 3) = Complex(0, 0.5 * amp);
    cm(3, 3) = Complex(0, -0.5 * amp);
  }
  d.terms = {{{0}, c0}, {{1}, cp}, {{-1}, cm}};
  ComplexMatrix b = 0.1 * random_matrix(rng, 4), c = 0.1 * random_matrix(rng, 4);
  MatrixField s = MatrixField::trig_polynomial({1, 4, 4, {{{0}, ComplexMatrix::Identity(4, 4)}, {{1}, b}, {{-1}, c}}});
  return s * MatrixField::trig_polynomial(d) * s.inverse();
}

Verdict cluster_decompositions() {
  const double delta = 0.5;
  int direct = 0, bisected = 0, failed = 0;
  double worst_algebra = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    bool sweeping = false;
    const MatrixField a = cluster_family(seed, sweeping);
    const SampledRegion whole = SampledRegion::torus(1, 32);
    auto audited = [&](const SampledRegion& r) {
      DecompositionAudit au = audit_decomposition(cluster_eigenvalues(a, r, delta), a);
      worst_algebra = std::max(worst_algebra, au.algebra);
      return au.pass;
    };
    try {
      direct += audited(whole);
      if (!audited(whole)) ++failed;
    } catch (const NeedsSubdivision&) {
      try {
        auto [l, r] = whole.bisect();
        const bool ok = audited(l) && audited(r);
        bisected += ok;
        failed += !ok;
      } catch (const NeedsSubdivision&) {
        ++failed;
      }
    }
  }
  return {failed == 0 && direct + bisected == 50,
          std::to_string(direct) + " direct, " + std::to_string(bisected) + " after bisection, " +
              std::to_string(failed) + " failed, algebra " + fmt(worst_algebra)};
}

Verdict bracket_slopes() {
  const double delta = 0.5, range = 1024;
  ComplexMatrix nil = ComplexMatrix::Zero(2, 2);
  nil(0, 1) = 0.2;
  nil(1, 1) = 0.3;
  const MatrixField constant = MatrixField::constant(1, nil);
  ComplexMatrix c0 = ComplexMatrix::Zero(2, 2), c1 = ComplexMatrix::Zero(2, 2);
  c0(1, 1) = 0.15;
  c1(1, 1) = 0.075;
  const MatrixField diagonal = MatrixField::trig_polynomial({1, 2, 2, {{{0}, c0}, {{1}, c1}, {{-1}, c1}}});
  // clusters {0, 0.25} and {1.2} in a constant non-unitary frame; the invariant
  // subspaces must not move with y, only the block entries do
  ComplexMatrix d0 = ComplexMatrix::Zero(3, 3), dp = ComplexMatrix::Zero(3, 3);
  d0(0, 1) = 0.2;
  d0(1, 1) = 0.25;
  d0(2, 2) = 1.2;
  dp(0, 0) = 0.025;
  dp(0, 1) = 0.05;
  dp(1, 1) = Complex(0, -0.025);
  dp(2, 2) = 0.025;
  ComplexMatrix dm = dp.conjugate();
  dm(1, 1) = Complex(0, 0.025);
  auto rng = seeded(3);
  const MatrixField s = MatrixField::constant(1, ComplexMatrix::Identity(3, 3) + 0.1 * random_matrix(rng, 3));
  const MatrixField framed = s * MatrixField::trig_polynomial({1, 3, 3, {{{0}, d0}, {{1}, dp}, {{-1}, dm}}}) * s.inverse();

  double unmixed = 0, mixed = -1e300;
  for (const MatrixField* a : {&constant, &diagonal, &framed}) {
    for (int b1 = 0; b1 <= 2; ++b1)
      for (int b2 = 0; b2 + b1 <= 2; ++b2) {
        if (b1 + b2 == 0) continue;
        const double e = bracket_derivative_decay(*a, {0}, {b1}, {0}, {b2}, range, delta).exponent;
        unmixed = std::max(unmixed, std::abs(e + b1 + b2));
      }
    if (a == &constant) continue;
    for (auto [a1, a2] : {std::pair{1, 0}, {0, 1}, {1, 1}})
      for (auto [b1, b2] : {std::pair{0, 0}, {1, 0}, {0, 1}}) {
        const double e = bracket_derivative_decay(*a, {a1}, {b1}, {a2}, {b2}, range, delta).exponent;
        mixed = std::max(mixed, e - (-b1 - b2 + delta));
      }
  }
  return {unmixed <= 0.1 && mixed <= 0.1,
          "max |fit + |b|| " + fmt(unmixed) + ", max mixed excess over -|b| + delta " + fmt(mixed)};
}

// DN pair with matching actions: p2 : (2, 1) -> (1, 0), p1 : (1, 0) -> (0, 0)
std::pair<TwistedSymbol, TwistedSymbol> dn_pair(std::uint64_t seed) {
  auto rng = seeded(200 + seed);
  auto entry = [&](Complex c0, double s, double scale) { return weighted_entry(scalar_trig(rng, c0, 2, scale), s); };
  TwistedSymbol p1 = dn_symbol({{entry(2.0, 1, 0.2), entry(0.0, 0, 0.1)}, {entry(0.0, 1, 0.1), entry(3.0, 0, 0.2)}},
                               {1, 0}, {0, 0}, 0.0);
  TwistedSymbol p2 = dn_symbol({{entry(1.5, 1, 0.2), entry(0.0, 0, 0.1)}, {entry(0.0, 2, 0.1), entry(2.0, 1, 0.2)}},
                               {2, 1}, {1, 0}, 0.0);
  return {p1, p2};
}

Verdict composition() {
  auto [p1, p2] = dn_pair(1);
  const int n = 64, m = 2;
  const double delta = p1.delta(), mu = p1.order() + p2.order();
  const ComplexMatrix prod = quantize(p1, n).matrix * quantize(p2, n).matrix;
  std::vector<double> norms, orders;
  bool ok = true;
  for (int j = 0; j <= 3; ++j) {
    ComplexMatrix w = normalized(prod - quantize(sharp_product(p1, p2, j), n).matrix, p1.range_action(),
                                 p2.domain_action(), n);
    norms.push_back(band_norm(w, 1, n, m, m, n / 4, n / 2));
    orders.push_back(column_profile_order(w, 1, n, m, m));
    ok = ok && orders.back() <= mu - (1 - delta) * (j + 1) + 0.2;
    if (j > 0) ok = ok && norms[j] < norms[j - 1];
  }
  std::string d = "norms";
  for (double v : norms) d += " " + fmt(v);
  d += ", orders";
  for (double v : orders) d += " " + fmt(v);
  return {ok, d};
}

Verdict parametrix_residuals() {
  TwistedSymbol p = io::Catalog::load(data("dn2x2.json")).symbol("dn_elliptic");
  const double gain = 1 - p.delta();
  std::vector<double> orders;
  Parametrix last;
  for (int j = 0; j <= 3; ++j) {
    last = parametrix_symbol(p, j);
    orders.push_back(fitted_order(composition_residual(p, last.symbol, j + 2), 5, 8).order);
  }
  bool ok = true;
  double worst = 0;
  for (size_t j = 1; j < orders.size(); ++j) {
    const double g = orders[j - 1] - orders[j];
    worst = std::max(worst, std::abs(g - gain));
  }
  ok = worst <= 0.15;
  const int n = 128, m = p.rows();
  const ComplexMatrix pm = quantize(p, n).matrix;
  ComplexMatrix res = pm * quantize(last.symbol, n).matrix - ComplexMatrix::Identity(pm.rows(), pm.rows());
  ComplexMatrix w = normalized(res, p.range_action(), p.range_action(), n);
  const double low = band_norm(w, 1, n, m, m, 0, n / 2), interior = band_norm(w, 1, n, m, m, n / 4, n / 2);
  ok = ok && low < 1e-3;
  std::string d = "orders";
  for (double v : orders) d += " " + fmt(v);
  return {ok, d + ", worst gain error " + fmt(worst) + ", residual |xi| <= N/2 " + fmt(low) + " (interior " +
                  fmt(interior) + ")"};
}

Verdict order_reduction_check() {
  TwistedSymbol p = io::Catalog::load(data("variable_order.json")).symbol("bracket_power");
  const MatrixField a1 = p.domain_action(), a2 = p.range_action();
  OrderReduction r = order_reduction(a1, a2, 1.0, 32);
  const double inv = inverse_profile_order(r, a1, a2);
  const double cond = r.conditioning.back();
  return {cond >= 1e-6 && std::abs(inv + 1) <= 0.1,
          "lambda0 " + fmt(r.lambda) + ", conditioning " + fmt(cond) + ", inverse order " + fmt(inv)};
}

Verdict sobolev_mapping() {
  io::Catalog vo = io::Catalog::load(data("variable_order.json"));
  auto rng = seeded(7);
  // (2 + cos y) + sin y eta / <eta>, (2 + cos y) <eta> + i sin y eta, <eta>^{a(y)}
  TwistedSymbol zero = field_symbol(scalar_trig(rng, 2.0, 1, 0.2)) +
                       TwistedSymbol(product_node(field_node(scalar_trig(rng, 0.0, 1, 0.3)),
                                                  product_node(monomial_node(1, {1}), bracket_node(1, -1.0))),
                                     0.0);
  TwistedSymbol one = weighted_entry(scalar_trig(rng, 2.0, 1, 0.2), 1.0) +
                      TwistedSymbol(product_node(field_node(scalar_trig(rng, 0.0, 1, 0.3)), monomial_node(1, {1})), 1.0);
  TwistedSymbol twisted = vo.symbol("bracket_power");
  std::string d = "spreads";
  bool ok = true;
  for (const TwistedSymbol* p : {&zero, &one, &twisted}) {
    std::vector<double> norms;
    for (int n : {32, 64, 128})
      norms.push_back(mapping_bound(quantize(*p, n), 0.0, p->order(), p->domain_action(), p->range_action(), n / 2).norm);
    const auto [lo, hi] = std::minmax_element(norms.begin(), norms.end());
    const double spread = (*hi - *lo) / *lo;
    ok = ok && spread <= 0.2;
    d += " " + fmt(spread);
  }
  TwistedSymbol dn = io::Catalog::load(data("dn2x2.json")).symbol("dn_elliptic");
  int right = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed)
    for (auto [expo, want] : {std::pair{-2.0, "bounded"}, {-0.6, "diverging"}}) {
      auto family = [&](int n) { return quantize(dn, n); };
      auto source = [&](int n) { return power_law_source(1, n, 2, expo, seed); };
      RegularityReport r = regularity_probe(family, source, 0.5, dn.order(), dn.domain_action(), {16, 32, 64});
      right += r.verdict == want;
      ++total;
    }
  ok = ok && right == total;
  return {ok, d + ", regularity verdicts " + std::to_string(right) + "/" + std::to_string(total)};
}

TwistedSymbol hardy_shift(int k) {
  TwistedSymbol plus = hardy_projection(true);
  return toeplitz_completion(field_symbol(exp_iky(k)), plus, plus);
}

// elliptic DN symbol on the circle whose far principal part winds k1 + k2 times
TwistedSymbol winding_dn(std::uint64_t seed) {
  auto rng = seeded(300 + seed);
  std::uniform_int_distribution<int> w(-1, 2);
  const int k1 = w(rng), k2 = w(rng);
  auto near = [&](int k) {
    MatrixField f = exp_iky(k) + scalar_trig(rng, 0.0, 1, 0.03);
    return f;
  };
  TwistedSymbol p11 = weighted_entry(near(k1), 1.0), p22 = weighted_entry(near(k2), 0.0);
  TwistedSymbol p12 = weighted_entry(scalar_trig(rng, 0.0, 1, 0.04), 0.0);
  TwistedSymbol p21 = weighted_entry(scalar_trig(rng, 0.0, 1, 0.04), 1.0);
  return dn_symbol({{p11, p12}, {p21, p22}}, {1, 0}, {0, 0}, 0.0);
}

Verdict index_agreement() {
  bool ok = true;
  std::string d;
  for (int n : {16, 32, 64}) {
    const int big = n + 8;
    TruncatedOperator a = normalized_operator(hardy_shift(1), big), b = normalized_operator(hardy_shift(-2), big);
    TruncatedOperator ab = a;
    ab.matrix = a.matrix * b.matrix;
    const int ia = compression_index(a, n).index, ib = compression_index(b, n).index;
    const int iab = compression_index(ab, n).index;
    ok = ok && ia == -1 && ib == 2 && iab == ia + ib;
    d += "N=" + std::to_string(n) + ": " + std::to_string(ia) + " " + std::to_string(ib) + " " + std::to_string(iab) +
         "; ";
  }
  int agree = 0, compared = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TwistedSymbol p = winding_dn(seed);
    const int n = 16, big = n + 8;
    TwistedSymbol h(product_node(hardy_projection(true).node(), constant_node(1, ComplexMatrix::Identity(2, 2))), 0.0);
    TruncatedOperator t = normalized_operator(p, big);
    const ComplexMatrix pi = quantize(h, big).matrix;
    IndexReport c = compression_index(t, pi, pi, n);
    IndexReport w = winding_index(toeplitz_completion(p, h, h));
    if (!c.conclusive || !w.conclusive) continue;
    ++compared;
    agree += c.index == w.index;
  }
  ok = ok && compared > 0 && agree == compared;
  return {ok, d + "winding = compression on " + std::to_string(agree) + "/" + std::to_string(compared) + " conclusive"};
}

Verdict riesz() {
  // reflection in a rotating line plus <eta>^{-1} C(y)
  MatrixTrigPolynomial r{1, 2, 2, {}};
  ComplexMatrix cp(2, 2), cm(2, 2);
  cp << 0.5, Complex(0, -0.5), Complex(0, -0.5), -0.5;
  cm << 0.5, Complex(0, 0.5), Complex(0, 0.5), -0.5;
  r.terms = {{{2}, cp}, {{-2}, cm}};
  double idem = 0, worst_slope = -1e300;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto rng = seeded(400 + seed);
    // small enough that the spectrum of R + C stays off |z - 1| = 0.5 for all y
    ComplexMatrix c0 = 0.05 * random_matrix(rng, 2), c1 = 0.03 * random_matrix(rng, 2), c2 = 0.03 * random_matrix(rng, 2);
    MatrixField c = MatrixField::trig_polynomial({1, 2, 2, {{{0}, c0}, {{1}, c1}, {{-1}, c2}}});
    TwistedSymbol p = field_symbol(MatrixField::trig_polynomial(r)) +
                      TwistedSymbol(product_node(field_node(c), bracket_node(1, -1.0)), 0.0);
    TwistedSymbol ps = spectral_projection_symbol(p, 0.5);
    std::vector<double> ns, dist;
    for (int n : {16, 32, 64}) {
      CalculusProjection pr = riesz_projection(quantize(p, n).matrix, 0.5);
      idem = std::max(idem, pr.idempotency);
      ns.push_back(n);
      dist.push_back(band_norm(pr.projection - quantize(ps, n).matrix, 1, n, 2, 2, n / 4, n / 2));
    }
    worst_slope = std::max(worst_slope, loglog_slope(ns, dist));
  }
  return {idem <= 1e-8 && worst_slope < 0, "idempotency " + fmt(idem) + ", worst distance slope " + fmt(worst_slope)};
}

Verdict toeplitz() {
  io::Catalog c = io::Catalog::load(data("rank1.json"));
  TwistedSymbol p = c.symbol("p"), proj = c.symbol("proj");
  ToeplitzParametrix tp = toeplitz_parametrix(p, proj, proj, 2);
  std::vector<double> fw, mi;
  for (int n : {32, 64}) {
    const ComplexMatrix pm = quantize(proj, n).matrix;
    ToeplitzResiduals r = toeplitz_residuals(p, tp, pm, pm, n);
    fw.push_back(r.forward);
    mi.push_back(r.mirror);
  }
  const bool ok = fw[1] < 1e-2 && mi[1] < 1e-2 && fw[1] < fw[0] && mi[1] < mi[0];
  return {ok, "forward " + fmt(fw[0]) + " -> " + fmt(fw[1]) + ", mirror " + fmt(mi[0]) + " -> " + fmt(mi[1])};
}

std::string run_cli(const std::vector<std::string>& args, const std::string& env, int& code) {
  std::string cmd = env + " '" + PSIVAR_CLI + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " 2>/dev/null";
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) {
    code = -1;
    return out;
  }
  char buf[4096];
  size_t k;
  while ((k = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, k);
  const int st = pclose(p);
  code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return out;
}

Verdict determinism() {
  const std::string theta =
      R"({"trig":[{"k":[0],"c":{"diagonal":[2,1]}},{"k":[1],"c":{"diagonal":[0.5,0]}},{"k":[-1],"c":{"diagonal":[0.5,0]}}]})";
  const std::vector<std::vector<std::string>> runs = {
      {"group-action", "--catalog", data("dn.json"), "--rho", "2"},
      {"cluster", "--catalog", data("variable_order.json"), "--symbol", "bracket_power"},
      {"seminorm", "--catalog", data("variable_order.json"), "--symbol", "bracket_power", "--range", "256"},
      {"extend", "--catalog", data("variable_order.json"), "--symbol", "extension"},
      {"compose", "--catalog", data("dn_pair.json"), "--symbol", "left", "--symbol2", "right", "--N", "32"},
      {"adjoint", "--catalog", data("dn2x2.json"), "--N", "16"},
      {"frame", "--catalog", data("dn2x2.json"), "--theta", theta},
      {"order-reduce", "--catalog", data("variable_order.json"), "--symbol", "bracket_power", "--N", "16"},
      {"quantize", "--catalog", data("dn2x2.json"), "--N", "8"},
      {"sobolev", "--catalog", data("variable_order.json"), "--symbol", "bracket_power", "--seed", "5"},
      {"mapping", "--catalog", data("variable_order.json"), "--symbol", "bracket_power", "--Ns", "[16,32]"},
      {"regularity", "--catalog", data("dn2x2.json"), "--Ns", "[8,16,32]", "--seed", "3"},
      {"index", "--catalog", data("shift.json"), "--symbol", "shift", "--proj", "hardy"},
      {"riesz", "--catalog", data("reflection.json"), "--Ns", "[8,16]"},
      {"toeplitz", "--catalog", data("rank1.json"), "--symbol", "p", "--Ns", "[16]", "--J", "1"},
      {"parametrix", "--catalog", data("dn2x2.json"), "--J", "2", "--N", "32"},
  };
  int same = 0, clean = 0;
  std::string differing;
  for (const auto& args : runs) {
    int c1 = 0, c2 = 0;
    const std::string a = run_cli(args, "PSIVAR_THREADS=1", c1);
    const std::string b = run_cli(args, "PSIVAR_THREADS=3", c2);
    clean += c1 == 0 && c2 == 0;
    if (a == b && !a.empty())
      ++same;
    else
      differing += " " + args[0];
  }
  const int n = static_cast<int>(runs.size());
  return {same == n && clean == n, std::to_string(same) + "/" + std::to_string(n) + " byte-identical, " +
                                       std::to_string(clean) + " exited 0" + (differing.empty() ? "" : ";" + differing)};
}

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all = {
      {1, "group-action laws", 10, group_action_laws},
      {2, "cluster decompositions", 30, cluster_decompositions},
      {3, "bracket power derivative slopes", 60, bracket_slopes},
      {4, "composition compatibility", 120, composition},
      {5, "parametrix residuals", 120, parametrix_residuals},
      {6, "order reduction", 120, order_reduction_check},
      {7, "sobolev mapping and regularity", 180, sobolev_mapping},
      {8, "index calibration and agreement", 120, index_agreement},
      {9, "riesz projection", 60, riesz},
      {10, "toeplitz parametrix", 120, toeplitz},
      {11, "determinism", 120, determinism},
  };
  int failures = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = v.pass && in_time;
    failures += !pass;
    std::printf("%s %2d %-34s %6.1fs/%gs  %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, c.limit_s,
                v.detail.c_str(), in_time ? "" : " [over time]");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
