#pragma once

// JSON symbol catalogs and serialization of sections, truncations and reports.

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "psivar/fredholm_toeplitz.hpp"

namespace psivar::io {

using Json = nlohmann::ordered_json;

/// bad configuration or catalog entry; pointer names the offending field
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& msg)
      : std::runtime_error(pointer + ": " + msg), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

inline std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }
inline std::string child(const std::string& ptr, size_t i) { return ptr + "/" + std::to_string(i); }

inline const Json& require(const Json& j, const std::string& key, const std::string& ptr) {
  if (!j.is_object()) throw ConfigError(ptr, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(child(ptr, key), "missing field");
  return *it;
}

inline double number(const Json& j, const std::string& ptr) {
  if (!j.is_number()) throw ConfigError(ptr, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(ptr, "expected a finite number");
  return v;
}

inline int integer(const Json& j, const std::string& ptr) {
  if (!j.is_number_integer()) throw ConfigError(ptr, "expected an integer");
  return j.get<int>();
}

inline double number_or(const Json& j, const std::string& key, double fallback, const std::string& ptr) {
  auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, child(ptr, key));
}

inline std::vector<double> number_list(const Json& j, const std::string& ptr) {
  if (!j.is_array()) throw ConfigError(ptr, "expected a list of numbers");
  std::vector<double> v;
  for (size_t i = 0; i < j.size(); ++i) v.push_back(number(j[i], child(ptr, i)));
  return v;
}

inline std::vector<int> integer_list(const Json& j, const std::string& ptr) {
  if (!j.is_array()) throw ConfigError(ptr, "expected a list of integers");
  std::vector<int> v;
  for (size_t i = 0; i < j.size(); ++i) v.push_back(integer(j[i], child(ptr, i)));
  return v;
}

// ---------------------------------------------------------------------------
// values

/// a real number or a [re, im] pair
inline Complex parse_complex(const Json& j, const std::string& ptr) {
  if (j.is_number()) return number(j, ptr);
  if (j.is_array() && j.size() == 2) return {number(j[0], child(ptr, 0)), number(j[1], child(ptr, 1))};
  throw ConfigError(ptr, "expected a number or an [re, im] pair");
}

/// number or [re, im] (1 x 1), list of rows, {"diagonal": [...]} or {"shape": [r, c], "data": [...]} row-major
inline ComplexMatrix parse_matrix(const Json& j, const std::string& ptr) {
  if (j.is_number()) return ComplexMatrix::Constant(1, 1, number(j, ptr));
  if (j.is_object() && j.contains("diagonal")) {
    const Json& d = j["diagonal"];
    if (!d.is_array() || d.empty()) throw ConfigError(child(ptr, "diagonal"), "expected a non-empty list");
    ComplexMatrix m = ComplexMatrix::Zero(d.size(), d.size());
    for (size_t i = 0; i < d.size(); ++i) m(i, i) = parse_complex(d[i], child(child(ptr, "diagonal"), i));
    return m;
  }
  if (j.is_object() && j.contains("shape")) {
    std::vector<int> shape = integer_list(j["shape"], child(ptr, "shape"));
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw ConfigError(child(ptr, "shape"), "expected [rows, cols]");
    const Json& d = require(j, "data", ptr);
    if (!d.is_array() || static_cast<int>(d.size()) != shape[0] * shape[1])
      throw ConfigError(child(ptr, "data"), "entry count differs from the shape");
    ComplexMatrix m(shape[0], shape[1]);
    for (int r = 0; r < shape[0]; ++r)
      for (int c = 0; c < shape[1]; ++c) {
        const size_t i = static_cast<size_t>(r) * shape[1] + c;
        m(r, c) = parse_complex(d[i], child(child(ptr, "data"), i));
      }
    return m;
  }
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return ComplexMatrix::Constant(1, 1, parse_complex(j, ptr));
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    const size_t rows = j.size(), cols = j[0].size();
    ComplexMatrix m(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
      if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(child(ptr, r), "rows differ in length");
      for (size_t c = 0; c < cols; ++c) m(r, c) = parse_complex(j[r][c], child(child(ptr, r), c));
    }
    return m;
  }
  throw ConfigError(ptr, "expected a matrix");
}

// A field over T^q: a constant matrix, {"diagonal": ...}, {"zero": m}, or
// {"trig": [{"k": [...], "c": matrix}, ...]}.
inline MatrixField parse_field(const Json& j, int q, const std::string& ptr) {
  if (j.is_object() && j.contains("zero")) return MatrixField::zero(q, integer(j["zero"], child(ptr, "zero")));
  if (j.is_object() && j.contains("trig")) {
    const Json& t = j["trig"];
    const std::string tp = child(ptr, "trig");
    if (!t.is_array() || t.empty()) throw ConfigError(tp, "expected a non-empty list of terms");
    MatrixTrigPolynomial p{q, 0, 0, {}};
    for (size_t i = 0; i < t.size(); ++i) {
      const std::string ip = child(tp, i);
      std::vector<int> k = integer_list(require(t[i], "k", ip), child(ip, "k"));
      if (static_cast<int>(k.size()) != q) throw ConfigError(child(ip, "k"), "frequency dimension differs from q");
      ComplexMatrix c = parse_matrix(require(t[i], "c", ip), child(ip, "c"));
      if (i == 0) {
        p.rows = static_cast<int>(c.rows());
        p.cols = static_cast<int>(c.cols());
      } else if (c.rows() != p.rows || c.cols() != p.cols) {
        throw ConfigError(child(ip, "c"), "coefficient shape differs from the first term");
      }
      p.terms.push_back({std::move(k), std::move(c)});
    }
    return MatrixField::trig_polynomial(std::move(p));
  }
  return MatrixField::constant(q, parse_matrix(j, ptr));
}

inline MatrixField field_or_zero(const Json& j, const std::string& key, int q, int m, const std::string& ptr) {
  auto it = j.find(key);
  if (it == j.end()) return MatrixField::zero(q, m);
  MatrixField f = parse_field(*it, q, child(ptr, key));
  if (f.rows() != m || f.cols() != m) throw ConfigError(child(ptr, key), "action must be " + std::to_string(m) + " x " + std::to_string(m));
  return f;
}

// ---------------------------------------------------------------------------
// symbols

inline int parse_q(const Json& j, const std::string& ptr) {
  const int q = j.contains("q") ? integer(j["q"], child(ptr, "q")) : 1;
  if (q < 1 || q > 2) throw ConfigError(child(ptr, "q"), "torus dimension must be 1 or 2");
  return q;
}

inline double parse_delta(const Json& j, const std::string& ptr) {
  const double d = number_or(j, "delta", 0.5, ptr);
  if (!(d >= 0 && d < 1)) throw ConfigError(child(ptr, "delta"), "delta must lie in [0, 1)");
  return d;
}

/// sum over terms of eta^gamma F(y)
inline NodePtr parse_polynomial(const Json& terms, int q, const std::string& ptr, int* max_degree) {
  if (!terms.is_array() || terms.empty()) throw ConfigError(ptr, "expected a non-empty list of terms");
  std::vector<NodePtr> parts;
  int rows = -1, cols = -1;
  *max_degree = 0;
  for (size_t i = 0; i < terms.size(); ++i) {
    const std::string ip = child(ptr, i);
    MultiIndex gamma(q, 0);
    if (terms[i].contains("gamma")) {
      gamma = integer_list(terms[i]["gamma"], child(ip, "gamma"));
      if (static_cast<int>(gamma.size()) != q) throw ConfigError(child(ip, "gamma"), "multi-index dimension differs from q");
      for (int g : gamma)
        if (g < 0) throw ConfigError(child(ip, "gamma"), "negative exponent");
    }
    MatrixField f = parse_field(require(terms[i], "field", ip), q, child(ip, "field"));
    if (rows < 0) {
      rows = f.rows();
      cols = f.cols();
    } else if (f.rows() != rows || f.cols() != cols) {
      throw ConfigError(child(ip, "field"), "term shape differs from the first term");
    }
    *max_degree = std::max(*max_degree, degree(gamma));
    parts.push_back(product_node(monomial_node(q, gamma), field_node(f)));
  }
  return sum_node(parts, std::vector<Complex>(parts.size(), 1.0));
}

inline TwistedSymbol parse_symbol(const Json& j, const std::string& ptr);

inline TwistedSymbol parse_symbol_kind(const Json& j, const std::string& ptr) {
  const Json& kj = require(j, "kind", ptr);
  if (!kj.is_string()) throw ConfigError(child(ptr, "kind"), "expected a string");
  const std::string kind = kj.get<std::string>();
  const int q = parse_q(j, ptr);
  const double delta = parse_delta(j, ptr);
  if (kind == "multiplier") {
    const double s = number(require(j, "s", ptr), child(ptr, "s"));
    ComplexMatrix c = j.contains("c") ? parse_matrix(j["c"], child(ptr, "c")) : ComplexMatrix::Identity(1, 1);
    return multiplier(q, s, c).with_delta(delta);
  }
  if (kind == "bracket_power") {
    MatrixField a = parse_field(require(j, "a", ptr), q, child(ptr, "a"));
    if (a.rows() != a.cols()) throw ConfigError(child(ptr, "a"), "action must be square");
    return bracket_power(a, delta);
  }
  if (kind == "trigpoly_rational") {
    // (sum_t eta^gamma_t N_t(y)) d(y)^{-1} <eta>^s
    int deg = 0;
    NodePtr node = parse_polynomial(require(j, "terms", ptr), q, child(ptr, "terms"), &deg);
    if (j.contains("denominator")) {
      MatrixField d = parse_field(j["denominator"], q, child(ptr, "denominator"));
      if (d.rows() != 1 || d.cols() != 1) throw ConfigError(child(ptr, "denominator"), "denominator must be scalar");
      for (int i = 0; i < 16; ++i) {
        std::vector<double> y(q, 2 * kPi * i / 16);
        if (std::abs(d(y)(0, 0)) < 1e-12) throw ConfigError(child(ptr, "denominator"), "denominator vanishes on the torus");
      }
      node = product_node(node, field_node(d.inverse()));
    }
    const double s = number_or(j, "bracket", 0.0, ptr);
    if (s != 0) node = product_node(node, bracket_node(q, s));
    const double order = number_or(j, "order", deg + s, ptr);
    MatrixField a1 = field_or_zero(j, "a1", q, node->cols(), ptr), a2 = field_or_zero(j, "a2", q, node->rows(), ptr);
    return TwistedSymbol(node, order, a1, a2, delta, "trigpoly_rational");
  }
  if (kind == "dn") {
    std::vector<double> mu1 = number_list(require(j, "mu1", ptr), child(ptr, "mu1"));
    std::vector<double> mu2 = number_list(require(j, "mu2", ptr), child(ptr, "mu2"));
    const Json& e = require(j, "entries", ptr);
    const std::string ep = child(ptr, "entries");
    if (!e.is_array() || e.size() != mu2.size()) throw ConfigError(ep, "expected one row per range weight");
    std::vector<std::vector<TwistedSymbol>> entries(e.size());
    for (size_t k = 0; k < e.size(); ++k) {
      if (!e[k].is_array() || e[k].size() != mu1.size())
        throw ConfigError(child(ep, k), "expected one entry per domain weight");
      for (size_t l = 0; l < e[k].size(); ++l) {
        const std::string lp = child(child(ep, k), l);
        TwistedSymbol s = parse_symbol(e[k][l], lp);
        if (s.q() != q) throw ConfigError(lp, "entry lives on a different torus");
        if (s.rows() != 1 || s.cols() != 1) throw ConfigError(lp, "entries must be scalar");
        if (std::abs(s.order() - (mu1[l] - mu2[k])) > 1e-12)
          throw ConfigError(lp, "entry order " + std::to_string(s.order()) + " differs from mu1[l] - mu2[k] = " +
                                    std::to_string(mu1[l] - mu2[k]));
        entries[k].push_back(std::move(s));
      }
    }
    return dn_symbol(entries, mu1, mu2, delta);
  }
  if (kind == "twisted_extension") {
    const double mu = number(require(j, "mu", ptr), child(ptr, "mu"));
    int deg = 0;
    NodePtr h = parse_polynomial(require(j, "section", ptr), q, child(ptr, "section"), &deg);
    MatrixField a1 = field_or_zero(j, "a1", q, h->cols(), ptr), a2 = field_or_zero(j, "a2", q, h->rows(), ptr);
    return twisted_extend(h, mu, a1, a2, delta);
  }
  throw ConfigError(child(ptr, "kind"), "unknown symbol kind '" + kind + "'");
}

inline TwistedSymbol parse_symbol(const Json& j, const std::string& ptr) {
  try {
    TwistedSymbol s = parse_symbol_kind(j, ptr);
    if (j.contains("label")) {
      if (!j["label"].is_string()) throw ConfigError(child(ptr, "label"), "expected a string");
      s = s.with_label(j["label"].get<std::string>());
    }
    return s;
  } catch (const Error& e) {
    // construction failures inside the library are still catalog mistakes
    throw ConfigError(ptr, e.what());
  }
}

struct CatalogEntry {
  std::string name;
  Json record;
  std::string pointer;
};

// A catalog is one record, a list of records, {"symbols": [...]} or
// {"symbols": {name: record}}.
class Catalog {
 public:
  static Catalog from_json(const Json& j, std::string source = "catalog") {
    Catalog c;
    c.source_ = std::move(source);
    const Json* list = &j;
    std::string base;
    if (j.is_object() && j.contains("symbols")) {
      list = &j["symbols"];
      base = "/symbols";
    }
    if (list->is_array()) {
      for (size_t i = 0; i < list->size(); ++i) {
        const Json& r = (*list)[i];
        std::string name = r.is_object() && r.contains("name") && r["name"].is_string() ? r["name"].get<std::string>()
                                                                                          : std::to_string(i);
        c.entries_.push_back({name, r, child(base, i)});
      }
    } else if (list->is_object() && !base.empty()) {
      for (auto it = list->begin(); it != list->end(); ++it) c.entries_.push_back({it.key(), it.value(), child(base, it.key())});
    } else if (list->is_object()) {
      c.entries_.push_back({"0", j, ""});
    } else {
      throw ConfigError(c.source_ + ":" + base, "expected a symbol record or a list of records");
    }
    if (c.entries_.empty()) throw ConfigError(c.source_ + ":" + base, "catalog holds no symbols");
    return c;
  }

  static Catalog load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("/catalog", "cannot open '" + path + "'");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const std::exception& e) {
      throw ConfigError("/catalog", "'" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j, path);
  }

  int size() const { return static_cast<int>(entries_.size()); }
  const std::vector<CatalogEntry>& entries() const { return entries_; }

  /// by name, or by position when the name is a number
  const CatalogEntry& entry(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e;
    char* end = nullptr;
    const long i = std::strtol(name.c_str(), &end, 10);
    if (end && *end == 0 && !name.empty() && i >= 0 && i < size()) return entries_[i];
    throw ConfigError("/symbol", "no symbol '" + name + "' in " + source_);
  }

  TwistedSymbol symbol(const std::string& name) const {
    const CatalogEntry& e = entry(name);
    TwistedSymbol s = parse_symbol(e.record, source_ + ":" + e.pointer);
    return e.record.contains("label") ? s : s.with_label(e.name);
  }

 private:
  std::string source_;
  std::vector<CatalogEntry> entries_;
};

// ---------------------------------------------------------------------------
// serialization

/// doubles that JSON cannot carry become strings
inline Json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json num_list(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline Json complex_json(Complex z) { return Json::array({num(z.real()), num(z.imag())}); }

inline Json matrix_json(const ComplexMatrix& m) {
  Json data = Json::array();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) data.push_back(complex_json(m(r, c)));
  return Json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

inline Json section_json(const GridSection& u) {
  Json j{{"q", u.q}, {"N", u.N}, {"M", u.M}};
  Json data = Json::array();
  for (int i = 0; i < u.coeffs.size(); ++i) data.push_back(complex_json(u.coeffs(i)));
  j["shape"] = {u.coeffs.size()};
  j["data"] = std::move(data);
  return j;
}

inline GridSection section_from_json(const Json& j, const std::string& ptr = "") {
  GridSection u(integer(require(j, "q", ptr), child(ptr, "q")), integer(require(j, "N", ptr), child(ptr, "N")),
                integer(require(j, "M", ptr), child(ptr, "M")));
  const Json& d = require(j, "data", ptr);
  if (!d.is_array() || static_cast<int>(d.size()) != u.coeffs.size())
    throw ConfigError(child(ptr, "data"), "entry count differs from the grid");
  for (size_t i = 0; i < d.size(); ++i) u.coeffs(i) = parse_complex(d[i], child(child(ptr, "data"), i));
  return u;
}

inline Json operator_json(const TruncatedOperator& t) {
  Json j{{"label", t.label}, {"q", t.q}, {"N", t.N}, {"range_size", t.range_size}, {"domain_size", t.domain_size}};
  Json m = matrix_json(t.matrix);
  j["shape"] = m["shape"];
  j["data"] = m["data"];
  return j;
}

inline TruncatedOperator operator_from_json(const Json& j, const std::string& ptr = "") {
  TruncatedOperator t;
  t.q = integer(require(j, "q", ptr), child(ptr, "q"));
  t.N = integer(require(j, "N", ptr), child(ptr, "N"));
  t.range_size = integer(require(j, "range_size", ptr), child(ptr, "range_size"));
  t.domain_size = integer(require(j, "domain_size", ptr), child(ptr, "domain_size"));
  if (j.contains("label") && j["label"].is_string()) t.label = j["label"].get<std::string>();
  t.matrix = parse_matrix(Json{{"shape", require(j, "shape", ptr)}, {"data", require(j, "data", ptr)}}, ptr);
  const int modes = ModeSet(t.q, t.N).size();
  if (t.matrix.rows() != modes * t.range_size || t.matrix.cols() != modes * t.domain_size)
    throw ConfigError(child(ptr, "shape"), "shape differs from the mode grid");
  return t;
}

inline Json index_json(const IndexReport& r) {
  Json j{{"index", r.index}, {"method", r.method}, {"conclusive", r.conclusive}};
  if (r.method == "compression") {
    j["kernel_dim"] = r.kernel_dim;
    j["cokernel_dim"] = r.cokernel_dim;
    j["kernel_gap"] = num(r.kernel_gap);
    j["cokernel_gap"] = num(r.cokernel_gap);
    j["kernel_singular_values"] = num_list(r.kernel_singular_values);
    j["cokernel_singular_values"] = num_list(r.cokernel_singular_values);
    j["N"] = r.N;
    j["N_outer"] = r.N_outer;
  } else {
    j["winding_plus"] = r.winding_plus;
    j["winding_minus"] = r.winding_minus;
    j["calibration"] = r.calibration;
  }
  return j;
}

}  // namespace psivar::io
