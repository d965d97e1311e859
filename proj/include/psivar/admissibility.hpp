#pragma once

// Eigenvalue clustering of a matrix field over sampled base regions, with
// per-cluster contours and projection fields.

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "psivar/matrix_functions.hpp"
#include "psivar/parallel.hpp"

namespace psivar {

struct SampledRegion {
  int q = 1;
  std::vector<double> lo, hi;
  std::vector<int> resolution;
  bool periodic = true;  // whole torus: right endpoints excluded

  static SampledRegion torus(int q, int n) {
    return {q, std::vector<double>(q, 0.0), std::vector<double>(q, 2 * kPi), std::vector<int>(q, n), true};
  }
  static SampledRegion box(std::vector<double> lo, std::vector<double> hi, int n) {
    const int q = static_cast<int>(lo.size());
    return {q, std::move(lo), std::move(hi), std::vector<int>(q, n), false};
  }

  void validate() const {
    if (static_cast<int>(lo.size()) != q || static_cast<int>(hi.size()) != q ||
        static_cast<int>(resolution.size()) != q)
      throw Error(ErrorKind::input, "region dimensions disagree with q");
    for (int i = 0; i < q; ++i) {
      if (resolution[i] < 8) throw Error(ErrorKind::input, "region needs at least 8 points per axis");
      if (!(lo[i] < hi[i]) || lo[i] < 0 || hi[i] > 2 * kPi + 1e-12)
        throw Error(ErrorKind::input, "region must lie in the fundamental domain");
    }
  }

  std::vector<std::vector<double>> points() const {
    validate();
    std::vector<std::vector<double>> out(1, std::vector<double>());
    for (int i = 0; i < q; ++i) {
      std::vector<std::vector<double>> next;
      const int n = resolution[i];
      for (const auto& p : out) {
        for (int j = 0; j < n; ++j) {
          auto v = p;
          v.push_back(lo[i] + (hi[i] - lo[i]) * j / (periodic ? n : n - 1));
          next.push_back(std::move(v));
        }
      }
      out = std::move(next);
    }
    return out;
  }

  /// halves the region along its longest axis
  std::pair<SampledRegion, SampledRegion> bisect() const {
    int axis = 0;
    for (int i = 1; i < q; ++i)
      if (hi[i] - lo[i] > hi[axis] - lo[axis]) axis = i;
    SampledRegion a = *this, b = *this;
    a.periodic = b.periodic = false;
    const double mid = 0.5 * (lo[axis] + hi[axis]);
    a.hi[axis] = mid;
    b.lo[axis] = mid;
    return {a, b};
  }
};

class NeedsSubdivision : public Error {
 public:
  NeedsSubdivision(const std::string& what, std::vector<std::vector<double>> points)
      : Error(ErrorKind::needs_subdivision, what), points_(std::move(points)) {}
  const std::vector<std::vector<double>>& points() const { return points_; }

 private:
  std::vector<std::vector<double>> points_;
};

struct Cluster {
  std::vector<Complex> eigenvalues;  // pooled over the region
  double diameter = 0;
  Complex center;
  double hull_radius = 0;
  Contour contour;
  MatrixField projection;
  int rank = 0;
};

struct ClusterDecomposition {
  double delta = 0.5;
  double gap = 0;
  SampledRegion region;
  std::vector<Cluster> clusters;

  int size() const { return static_cast<int>(clusters.size()); }
};

/// projection field for the part of the spectrum of a(y) inside g, with jets
inline MatrixField projection_field(const MatrixField& a, const Contour& g) {
  return MatrixField(
      a.q(), a.rows(), a.cols(),
      [a, g](std::span<const double> y, int order) {
        MatrixJet aj = a.jet(y, order);
        MatrixJet acc(a.q(), {order, 0}, ComplexMatrix::Zero(a.rows(), a.cols()));
        for (int j = 0; j < g.size(); ++j) {
          MatrixJet shifted = aj * Complex(-1.0);
          shifted.value().diagonal().array() += g.nodes()[j];
          acc.add_scaled(inverse(shifted), g.weights()[j]);
        }
        return acc;
      },
      a.max_order(), false);
}

namespace detail {

struct PooledEigenvalue {
  Complex value;
  int point;
};

struct Candidate {
  std::vector<int> label;  // cluster per pooled eigenvalue
  int count = 0;
  double gap = 0;
};

inline double set_distance(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  double d = std::numeric_limits<double>::infinity();
  for (Complex x : a)
    for (Complex y : b) d = std::min(d, std::abs(x - y));
  return d;
}

}  // namespace detail

// Single-linkage clustering of the pooled spectra.  Cutting the k largest
// edges of the minimum spanning tree gives k + 1 clusters; the coarsest cut
// meeting every requirement is returned.
inline ClusterDecomposition cluster_eigenvalues(const MatrixField& a, const SampledRegion& region, double delta) {
  if (!(delta > 0 && delta < 1)) throw Error(ErrorKind::input, "delta must lie in (0, 1)");
  if (a.rows() != a.cols()) throw Error(ErrorKind::shape, "endomorphism field must be square");
  const auto pts = region.points();
  const int m = a.rows();
  std::vector<std::vector<Complex>> spectra(pts.size());
  parallel_for(static_cast<int>(pts.size()), [&](int i) { spectra[i] = eigenvalues(a(pts[i])); });
  std::vector<detail::PooledEigenvalue> pool;
  for (size_t i = 0; i < pts.size(); ++i)
    for (Complex e : spectra[i]) pool.push_back({e, static_cast<int>(i)});
  const int n = static_cast<int>(pool.size());

  // Prim's algorithm on the complete graph
  std::vector<std::pair<double, std::pair<int, int>>> mst;
  {
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<int> from(n, -1);
    std::vector<bool> in(n, false);
    int cur = 0;
    in[0] = true;
    for (int step = 1; step < n; ++step) {
      int next = -1;
      for (int j = 0; j < n; ++j) {
        if (in[j]) continue;
        const double d = std::abs(pool[j].value - pool[cur].value);
        if (d < best[j]) {
          best[j] = d;
          from[j] = cur;
        }
        if (next < 0 || best[j] < best[next]) next = j;
      }
      in[next] = true;
      mst.push_back({best[next], {from[next], next}});
      cur = next;
    }
  }
  std::sort(mst.begin(), mst.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });

  const double min_gap = std::max(1e-6, delta / 10);
  std::vector<int> trouble;
  auto build = [&](int cuts) -> std::optional<ClusterDecomposition> {
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](int i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (size_t e = cuts; e < mst.size(); ++e) parent[root(mst[e].second.first)] = root(mst[e].second.second);
    const double gap = cuts == 0 ? std::numeric_limits<double>::infinity() : mst[cuts - 1].first;
    // relabel clusters by first appearance
    std::vector<int> label(n, -1), map(n, -1);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const int r = root(i);
      if (map[r] < 0) map[r] = count++;
      label[i] = map[r];
    }
    std::vector<std::vector<Complex>> members(count);
    for (int i = 0; i < n; ++i) members[label[i]].push_back(pool[i].value);
    std::vector<int> bad;
    bool ok = gap >= min_gap;
    // ranks constant over the samples
    std::vector<int> rank(count, -1);
    for (size_t p = 0; p < pts.size(); ++p) {
      std::vector<int> c(count, 0);
      for (int k = 0; k < m; ++k) ++c[label[p * m + k]];
      for (int k = 0; k < count; ++k) {
        if (rank[k] < 0) rank[k] = c[k];
        if (rank[k] != c[k]) {
          ok = false;
          bad.push_back(static_cast<int>(p));
        }
      }
    }
    ClusterDecomposition dec;
    dec.delta = delta;
    dec.gap = gap;
    dec.region = region;
    for (int k = 0; k < count && ok; ++k) {
      Cluster cl;
      cl.eigenvalues = members[k];
      double lo_re = 1e300, hi_re = -1e300, lo_im = 1e300, hi_im = -1e300;
      for (Complex x : cl.eigenvalues) {
        lo_re = std::min(lo_re, x.real());
        hi_re = std::max(hi_re, x.real());
        lo_im = std::min(lo_im, x.imag());
        hi_im = std::max(hi_im, x.imag());
        for (Complex y : cl.eigenvalues) cl.diameter = std::max(cl.diameter, std::abs(x - y));
      }
      if (cl.diameter >= delta) {
        ok = false;
        break;
      }
      cl.center = Complex(0.5 * (lo_re + hi_re), 0.5 * (lo_im + hi_im));
      for (Complex x : cl.eigenvalues) cl.hull_radius = std::max(cl.hull_radius, std::abs(x - cl.center));
      double g = std::numeric_limits<double>::infinity(), r_out = g;
      for (int j = 0; j < count; ++j) {
        if (j == k) continue;
        g = std::min(g, detail::set_distance(members[k], members[j]));
        for (Complex x : members[j]) r_out = std::min(r_out, std::abs(x - cl.center));
      }
      // the margin is also capped so the circle stays below delta in diameter
      const double room = (delta / 2 - cl.hull_radius) / 2;
      const double r = cl.hull_radius + std::min({g / 2, (r_out - cl.hull_radius) / 2, room});
      if (r_out <= cl.hull_radius || 2 * r >= delta || r <= cl.hull_radius) {
        ok = false;
        break;
      }
      // trapezoid error decays like max(r_in / r, r / r_out)^nodes
      const double ratio = std::max(cl.hull_radius / r, r / r_out);
      int nodes = 64;
      while (nodes < 4096 && std::pow(ratio, nodes) > 1e-15) nodes *= 2;
      cl.contour = Contour::circle(cl.center, r, nodes);
      cl.rank = rank[k];
      cl.projection = projection_field(a, cl.contour);
      dec.clusters.push_back(std::move(cl));
    }
    if (!ok) {
      if (trouble.empty()) trouble = bad;
      return std::nullopt;
    }
    return dec;
  };

  for (int cuts = 0; cuts < n; ++cuts) {
    // cut ties together so equal-length edges never split arbitrarily
    if (cuts > 0 && cuts < static_cast<int>(mst.size()) && mst[cuts].first == mst[cuts - 1].first) continue;
    if (auto dec = build(cuts)) {
      // projection algebra at every sample
      for (size_t p = 0; p < pts.size(); ++p) {
        ComplexMatrix sum = ComplexMatrix::Zero(m, m);
        for (const auto& cl : dec->clusters) {
          ComplexMatrix pr = cl.projection(pts[p]);
          if ((pr * pr - pr).norm() > 1e-9)
            throw NeedsSubdivision("projection is not idempotent at a sample", {pts[p]});
          sum += pr;
        }
        if ((sum - ComplexMatrix::Identity(m, m)).norm() > 1e-9)
          throw NeedsSubdivision("projections do not resolve the identity at a sample", {pts[p]});
      }
      return *dec;
    }
  }
  std::sort(trouble.begin(), trouble.end());
  trouble.erase(std::unique(trouble.begin(), trouble.end()), trouble.end());
  std::vector<std::vector<double>> where;
  for (int p : trouble) where.push_back(pts[p]);
  throw NeedsSubdivision("no admissible clustering over the region", where);
}

struct DecompositionAudit {
  double max_diameter = 0;
  double min_separation = std::numeric_limits<double>::infinity();  // between pooled cluster spectra
  double algebra = 0;  // worst of Pi^2 - Pi, Pi_j Pi_k, sum - I, [a, Pi] over the samples
  bool pass = false;
};

/// re-checks a decomposition at every sample of its region
inline DecompositionAudit audit_decomposition(const ClusterDecomposition& dec, const MatrixField& a) {
  DecompositionAudit r;
  const int m = a.rows(), k = dec.size();
  for (int i = 0; i < k; ++i) {
    r.max_diameter = std::max(r.max_diameter, dec.clusters[i].diameter);
    for (int j = i + 1; j < k; ++j)
      r.min_separation = std::min(r.min_separation, detail::set_distance(dec.clusters[i].eigenvalues, dec.clusters[j].eigenvalues));
  }
  for (const auto& y : dec.region.points()) {
    const ComplexMatrix ay = a(y);
    std::vector<ComplexMatrix> pr;
    ComplexMatrix sum = ComplexMatrix::Zero(m, m);
    for (const auto& cl : dec.clusters) {
      pr.push_back(cl.projection(y));
      sum += pr.back();
    }
    r.algebra = std::max(r.algebra, (sum - ComplexMatrix::Identity(m, m)).norm());
    for (int i = 0; i < k; ++i) {
      r.algebra = std::max({r.algebra, (pr[i] * pr[i] - pr[i]).norm(), (ay * pr[i] - pr[i] * ay).norm()});
      for (int j = 0; j < k; ++j)
        if (j != i) r.algebra = std::max(r.algebra, (pr[i] * pr[j]).norm());
    }
  }
  r.pass = r.max_diameter < dec.delta && r.min_separation > 0 && r.algebra <= 1e-9;
  return r;
}

struct TransitionReport {
  double max_residual = 0;
  std::vector<double> worst_point;
  double worst_rho = 1;
  bool certified = false;
};

/// max || psi phi^{-1} - rho^{-a_psi} (psi phi^{-1}) rho^{a_phi} || over samples
inline TransitionReport transition_homogeneity_check(const MatrixField& phi, const MatrixField& psi,
                                                     const MatrixField& a_phi, const MatrixField& a_psi,
                                                     const SampledRegion& region, const std::vector<double>& rhos) {
  TransitionReport rep;
  for (const auto& y : region.points()) {
    ComplexMatrix f = phi(y), g = psi(y);
    for (const ComplexMatrix* frame : {&f, &g}) {
      Eigen::JacobiSVD<ComplexMatrix> svd(*frame);
      const auto& s = svd.singularValues();
      if (s(s.size() - 1) <= 1e-12 * s(0)) throw Error(ErrorKind::frame, "frame is not invertible at a sample");
    }
    ComplexMatrix t = g * f.inverse();
    ComplexMatrix ap = a_phi(y), aq = a_psi(y);
    for (double rho : rhos) {
      ComplexMatrix rhs = group_action(-aq, rho) * t * group_action(ap, rho);
      const double r = (t - rhs).norm();
      if (r > rep.max_residual || rep.worst_point.empty()) {
        rep.max_residual = std::max(rep.max_residual, r);
        rep.worst_point = y;
        rep.worst_rho = rho;
      }
    }
  }
  rep.certified = rep.max_residual <= 1e-9;
  return rep;
}

}  // namespace psivar
