#pragma once

// Toroidal quantization to dense matrices over Fourier modes |xi|_inf <= N,
// variable-order Sobolev norms and the mapping/regularity/duality harness.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "psivar/parallel.hpp"
#include "psivar/symbols.hpp"

namespace psivar {

// Fourier modes of [-N, N]^q, first coordinate most significant.
class ModeSet {
 public:
  ModeSet(int q, int n) : q_(q), n_(n), side_(2 * n + 1) {
    count_ = 1;
    for (int i = 0; i < q; ++i) count_ *= side_;
  }
  int q() const { return q_; }
  int truncation() const { return n_; }
  int size() const { return count_; }
  std::vector<int> mode(int idx) const {
    std::vector<int> m(q_);
    for (int i = q_ - 1; i >= 0; --i) {
      m[i] = idx % side_ - n_;
      idx /= side_;
    }
    return m;
  }
  int index(const std::vector<int>& m) const {
    int idx = 0;
    for (int i = 0; i < q_; ++i) {
      if (std::abs(m[i]) > n_) return -1;
      idx = idx * side_ + (m[i] + n_);
    }
    return idx;
  }
  int inf_norm(int idx) const {
    int r = 0;
    for (int v : mode(idx)) r = std::max(r, std::abs(v));
    return r;
  }

 private:
  int q_, n_, side_, count_;
};

struct GridSection {
  int q = 1, N = 0, M = 1;
  ComplexVector coeffs;  // index mode * M + component

  GridSection() = default;
  GridSection(int q_, int n, int m) : q(q_), N(n), M(m), coeffs(ComplexVector::Zero(ModeSet(q_, n).size() * m)) {}

  Complex& at(const std::vector<int>& mode, int c) { return coeffs(ModeSet(q, N).index(mode) * M + c); }
  /// same coefficients on a different truncation (zero padded or cut)
  GridSection resized(int n) const {
    GridSection r(q, n, M);
    ModeSet from(q, N), to(q, n);
    for (int i = 0; i < to.size(); ++i) {
      const int j = from.index(to.mode(i));
      if (j >= 0)
        for (int c = 0; c < M; ++c) r.coeffs(i * M + c) = coeffs(j * M + c);
    }
    return r;
  }
};

struct TruncatedOperator {
  ComplexMatrix matrix;
  int q = 1, N = 0;
  int range_size = 1, domain_size = 1;  // M2, M1
  std::string label;
  int grid = 0;  // y points per axis used in assembly

  ModeSet modes() const { return ModeSet(q, N); }
};

namespace detail {
inline void check_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::shape, what);
}
}  // namespace detail

// T[xi', xi] = \hat p(xi' - xi, xi), the y-Fourier coefficients of p(., xi)
// taken on a grid of 2(2N+1) points per axis.
inline TruncatedOperator quantize(const TwistedSymbol& p, int n) {
  if (n < 4) throw Error(ErrorKind::input, "quantize needs N >= 4");
  const int q = p.q();
  if (q > 2) throw Error(ErrorKind::input, "quantize supports q <= 2");
  const int m2 = p.rows(), m1 = p.cols();
  const int l = 2 * (2 * n + 1);
  const ModeSet modes(q, n);
  const int nm = modes.size();
  int grid_size = 1;
  for (int i = 0; i < q; ++i) grid_size *= l;
  // full DFT over k in [-l/2, l/2 - 1]
  const int half = l / 2;
  Eigen::MatrixXcd dft(l, l);
  for (int k = 0; k < l; ++k)
    for (int j = 0; j < l; ++j) dft(k, j) = std::polar(1.0 / l, -2 * kPi * double(k - half) * j / l);
  std::vector<double> ygrid(l);
  for (int j = 0; j < l; ++j) ygrid[j] = 2 * kPi * j / l;

  TruncatedOperator t;
  t.q = q;
  t.N = n;
  t.range_size = m2;
  t.domain_size = m1;
  t.label = p.label();
  t.grid = l;
  t.matrix = ComplexMatrix::Zero(nm * m2, nm * m1);
  const SymbolEvaluator ev = p.evaluator();
  std::vector<std::string> errors(nm);

  parallel_for(nm, [&](int col) {
    const std::vector<int> xi = modes.mode(col);
    std::vector<double> eta(xi.begin(), xi.end());
    // values[c2 * m1 + c1] is the grid sample of one entry, length grid_size
    std::vector<Eigen::VectorXcd> values(m2 * m1, Eigen::VectorXcd(grid_size));
    std::vector<double> y(q);
    for (int g = 0; g < grid_size; ++g) {
      int rest = g;
      for (int i = q - 1; i >= 0; --i) {
        y[i] = ygrid[rest % l];
        rest /= l;
      }
      const ComplexMatrix v = ev(y, eta).value();
      if (!v.allFinite()) {
        errors[col] = "non-finite symbol value";
        return;
      }
      for (int c2 = 0; c2 < m2; ++c2)
        for (int c1 = 0; c1 < m1; ++c1) values[c2 * m1 + c1](g) = v(c2, c1);
    }
    std::vector<Eigen::VectorXcd> hats(m2 * m1);
    double total = 0, high = 0;  // aliasing check on |k|_inf > 0.9 l/2, over the whole block
    for (int e = 0; e < m2 * m1; ++e) {
      const Eigen::VectorXcd& v = values[e];
      if (q == 1) {
        hats[e] = dft * v;
      } else {
        Eigen::Map<const Eigen::MatrixXcd> vm(v.data(), l, l);  // vm(j1, j0)
        Eigen::MatrixXcd h = dft * vm.transpose() * dft.transpose();
        hats[e] = Eigen::Map<Eigen::VectorXcd>(h.data(), grid_size);  // h(k0, k1) at k0 + l * k1
      }
      for (int g = 0; g < grid_size; ++g) {
        const int kinf = q == 1 ? std::abs(g - half) : std::max(std::abs(g % l - half), std::abs(g / l - half));
        const double en = std::norm(hats[e](g));
        total += en;
        if (kinf > 0.9 * half) high += en;
      }
    }
    if (total > 0 && high > 1e-8 * total) {
      errors[col] = "aliasing: symbol is under-resolved on the y grid";
      return;
    }
    for (int c2 = 0; c2 < m2; ++c2)
      for (int c1 = 0; c1 < m1; ++c1) {
        const Eigen::VectorXcd& hat = hats[c2 * m1 + c1];
        for (int row = 0; row < nm; ++row) {
          const std::vector<int> xr = modes.mode(row);
          const int g = q == 1 ? (xr[0] - xi[0]) + half : ((xr[0] - xi[0]) + half) + l * ((xr[1] - xi[1]) + half);
          t.matrix(row * m2 + c2, col * m1 + c1) = hat(g);
        }
      }
  });
  for (int col = 0; col < nm; ++col)
    if (!errors[col].empty()) {
      std::string where;
      for (int v : modes.mode(col)) where += std::to_string(v) + " ";
      throw Error(errors[col].rfind("aliasing", 0) == 0 ? ErrorKind::resolution : ErrorKind::evaluation,
                  errors[col] + " at xi = (" + where + ")");
    }
  return t;
}

/// pointwise reference: sum_xi e^{i y.xi} p(y, xi) u(xi)
inline ComplexVector apply_pointwise(const TwistedSymbol& p, const GridSection& u, std::span<const double> y) {
  const ModeSet modes(u.q, u.N);
  ComplexVector out = ComplexVector::Zero(p.rows());
  const SymbolEvaluator ev = p.evaluator();
  for (int i = 0; i < modes.size(); ++i) {
    const auto xi = modes.mode(i);
    std::vector<double> eta(xi.begin(), xi.end());
    double ph = 0;
    for (int k = 0; k < u.q; ++k) ph += y[k] * xi[k];
    out += std::polar(1.0, ph) * (ev(y, eta).value() * u.coeffs.segment(i * u.M, u.M));
  }
  return out;
}

/// sum_xi e^{i y.xi} u(xi)
inline ComplexVector synthesize(const GridSection& u, std::span<const double> y) {
  const ModeSet modes(u.q, u.N);
  ComplexVector out = ComplexVector::Zero(u.M);
  for (int i = 0; i < modes.size(); ++i) {
    const auto xi = modes.mode(i);
    double ph = 0;
    for (int k = 0; k < u.q; ++k) ph += y[k] * xi[k];
    out += std::polar(1.0, ph) * u.coeffs.segment(i * u.M, u.M);
  }
  return out;
}

/// symbol <eta>^s <eta>^{a(y)} of the Sobolev weight
inline TwistedSymbol sobolev_symbol(const MatrixField& a, double s) {
  const int q = a.q();
  NodePtr power = group_power_node(bracket_node(q, 1.0), a);
  NodePtr node = s == 0 ? power : product_node(bracket_node(q, s), power);
  return TwistedSymbol(node, s, a, MatrixField::zero(q, a.rows()), 0.5, "sobolev_weight");
}

/// Lambda = quantize(<eta>^s <eta>^{a(y)})
inline TruncatedOperator sobolev_weight(const MatrixField& a, double s, int n) { return quantize(sobolev_symbol(a, s), n); }

inline double sobolev_norm(const GridSection& u, const TruncatedOperator& lambda) {
  detail::check_shape(lambda.N == u.N && lambda.q == u.q && lambda.domain_size == u.M &&
                          lambda.matrix.cols() == u.coeffs.size(),
                      "Sobolev weight does not match the section");
  return (lambda.matrix * u.coeffs).norm();
}

inline double sobolev_norm(const GridSection& u, double s, const MatrixField& a) {
  return sobolev_norm(u, sobolev_weight(a, s, u.N));
}

/// rows/cols of the modes with lo <= |xi|_inf <= hi
inline std::vector<int> band_indices(int q, int n, int m, int lo, int hi) {
  const ModeSet modes(q, n);
  std::vector<int> idx;
  for (int i = 0; i < modes.size(); ++i) {
    const int r = modes.inf_norm(i);
    if (r >= lo && r <= hi)
      for (int c = 0; c < m; ++c) idx.push_back(i * m + c);
  }
  return idx;
}

inline ComplexMatrix submatrix(const ComplexMatrix& x, const std::vector<int>& rows, const std::vector<int>& cols) {
  ComplexMatrix r(rows.size(), cols.size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) r(i, j) = x(rows[i], cols[j]);
  return r;
}

inline double largest_singular_value(const ComplexMatrix& x) {
  if (x.size() == 0) return 0;
  return Eigen::BDCSVD<ComplexMatrix>(x).singularValues()(0);
}

inline Eigen::VectorXd singular_values(const ComplexMatrix& x) { return Eigen::BDCSVD<ComplexMatrix>(x).singularValues(); }

namespace detail {
inline ComplexMatrix solve_right(const ComplexMatrix& x, const ComplexMatrix& lambda) {
  // x lambda^{-1}
  Eigen::VectorXd s = singular_values(lambda);
  if (s(s.size() - 1) <= 1e-14 * s(0)) throw Error(ErrorKind::conditioning, "Sobolev weight is numerically singular");
  return lambda.transpose().partialPivLu().solve(x.transpose()).transpose();
}
}  // namespace detail

/// Lambda_range X Lambda_domain^{-1}
inline ComplexMatrix weighted(const ComplexMatrix& x, const TruncatedOperator& range_weight,
                              const TruncatedOperator& domain_weight) {
  return detail::solve_right(range_weight.matrix * x, domain_weight.matrix);
}

struct MappingBound {
  double norm = 0;
  int N = 0;
};

// || Lambda2_{s - mu} T Lambda1_s^{-1} ||, optionally on modes |xi| <= restrict_to
inline MappingBound mapping_bound(const TruncatedOperator& p, double s, double mu, const MatrixField& a1,
                                  const MatrixField& a2, int restrict_to = -1) {
  detail::check_shape(p.domain_size == a1.rows() && p.range_size == a2.rows(), "actions do not match the operator");
  TruncatedOperator l1 = sobolev_weight(a1, s, p.N);
  TruncatedOperator l2 = sobolev_weight(a2, s - mu, p.N);
  ComplexMatrix w = weighted(p.matrix, l2, l1);
  if (restrict_to >= 0)
    w = submatrix(w, band_indices(p.q, p.N, p.range_size, 0, restrict_to),
                  band_indices(p.q, p.N, p.domain_size, 0, restrict_to));
  return {largest_singular_value(w), p.N};
}

/// f(xi) = <xi>^{exponent} times seeded unit phases; lower modes agree across N
inline GridSection power_law_source(int q, int n, int m, double exponent, std::uint64_t seed) {
  GridSection f(q, n, m);
  const ModeSet modes(q, n);
  for (int i = 0; i < modes.size(); ++i) {
    const auto xi = modes.mode(i);
    double r2 = 0;
    std::uint64_t h = seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull;
    for (int v : xi) {
      r2 += double(v) * v;
      h = (h ^ std::uint64_t(v + 100000)) * 0xBF58476D1CE4E5B9ull;
    }
    std::mt19937_64 rng(h);
    std::uniform_real_distribution<double> u(0, 2 * kPi);
    for (int c = 0; c < m; ++c) f.coeffs(i * m + c) = std::polar(std::pow(1 + r2, exponent / 2) / std::sqrt(double(m)), u(rng));
  }
  return f;
}

struct RegularityReport {
  std::vector<int> Ns;
  std::vector<double> target, control;
  double target_slope = 0, control_slope = 0;
  std::string verdict;  // bounded | diverging | inconclusive
};

// solves P u = f at each N and tracks ||u|| in H^{s + mu + a1}, plus one order
// higher as a control
inline RegularityReport regularity_probe(const std::function<TruncatedOperator(int)>& family,
                                         const std::function<GridSection(int)>& source, double s, double mu,
                                         const MatrixField& a1, const std::vector<int>& ns) {
  RegularityReport rep;
  rep.Ns = ns;
  for (int n : ns) {
    TruncatedOperator p = family(n);
    GridSection f = source(n);
    detail::check_shape(p.matrix.rows() == f.coeffs.size(), "source does not match the operator");
    Eigen::VectorXd sv = singular_values(p.matrix);
    if (sv(sv.size() - 1) <= 1e-13 * sv(0)) throw Error(ErrorKind::conditioning, "operator is not invertible at N = " + std::to_string(n));
    GridSection u(f.q, n, p.domain_size);
    u.coeffs = p.matrix.partialPivLu().solve(f.coeffs);
    rep.target.push_back(sobolev_norm(u, sobolev_weight(a1, s + mu, n)));
    rep.control.push_back(sobolev_norm(u, sobolev_weight(a1, s + mu + 1, n)));
  }
  std::vector<double> x(ns.begin(), ns.end());
  rep.target_slope = loglog_slope(x, rep.target);
  rep.control_slope = loglog_slope(x, rep.control);
  rep.verdict = rep.target_slope > 0.2 ? "diverging" : rep.target_slope < 0.1 ? "bounded" : "inconclusive";
  return rep;
}

/// sum_xi v(xi)^H u(xi)
inline Complex duality_pairing(const GridSection& u, const GridSection& v) {
  detail::check_shape(u.q == v.q && u.N == v.N && u.M == v.M, "pairing of sections with different truncations");
  return v.coeffs.dot(u.coeffs);
}

struct DualityReport {
  double constant = 0;  // sup |<u, v>| / (||u|| ||v||)
  double sampled_max = 0;
};

/// exact constant || Lambda2^{-H} Lambda1^{-1} || and seeded random samples
inline DualityReport duality_constant(const TruncatedOperator& l1, const TruncatedOperator& l2, int samples,
                                      std::uint64_t seed) {
  detail::check_shape(l1.matrix.rows() == l2.matrix.rows(), "weights of different sizes");
  const int n = static_cast<int>(l1.matrix.rows());
  ComplexMatrix inv1 = l1.matrix.partialPivLu().inverse();
  ComplexMatrix inv2h = l2.matrix.adjoint().partialPivLu().inverse();
  DualityReport rep;
  rep.constant = largest_singular_value(inv2h * inv1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (int t = 0; t < samples; ++t) {
    ComplexVector u(n), v(n);
    for (int i = 0; i < n; ++i) {
      u(i) = Complex(g(rng), g(rng)) / std::pow(1.0 + i, 0.5);
      v(i) = Complex(g(rng), g(rng));
    }
    const double r = std::abs(v.dot(u)) / ((l1.matrix * u).norm() * (l2.matrix * v).norm());
    rep.sampled_max = std::max(rep.sampled_max, r);
  }
  return rep;
}

// Order of an operator measured at a single N: the column norms of the
// weighted matrix, restricted to rows |xi'| <= N/2, fitted against <xi> over
// the interior columns N/8 <= |xi| <= N/2 (q = 1).
inline double column_profile_order(const ComplexMatrix& w, int q, int n, int m_range, int m_domain, int lo = -1,
                                   int hi = -1) {
  if (lo < 0) lo = std::max(1, n / 8);
  if (hi < 0) hi = n / 2;
  const ModeSet modes(q, n);
  const std::vector<int> rows = band_indices(q, n, m_range, 0, n / 2);
  std::vector<double> x, v;
  for (int r = lo; r <= hi; ++r) {
    double best = 0;
    for (int i = 0; i < modes.size(); ++i) {
      if (modes.inf_norm(i) != r) continue;
      for (int c = 0; c < m_domain; ++c) {
        double s = 0;
        for (int row : rows) s += std::norm(w(row, i * m_domain + c));
        best = std::max(best, std::sqrt(s));
      }
    }
    x.push_back(std::sqrt(1.0 + double(r) * r));
    v.push_back(best);
  }
  return loglog_slope(x, v);
}

/// spectral norm on the interior band lo <= |xi| <= hi (rows and columns)
inline double band_norm(const ComplexMatrix& w, int q, int n, int m_range, int m_domain, int lo, int hi) {
  return largest_singular_value(
      submatrix(w, band_indices(q, n, m_range, lo, hi), band_indices(q, n, m_domain, lo, hi)));
}

}  // namespace psivar
