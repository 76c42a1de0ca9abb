#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "harmap/certify.hpp"
#include "harmap/errors.hpp"
#include "harmap/geometry.hpp"
#include "harmap/rational.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Two-compact approximation specs: build a rational function that is ~0 on A,
// ~tau on B, with every pole parked inside pole_home, reachable through
// channel.
// ---------------------------------------------------------------------------

struct TwoCompactSpec {
  ImplicitRegion A;          // approximation target 0
  ImplicitRegion B;          // approximation target tau
  double tau = 0.0;
  double tolerance = 0.0;
  ImplicitRegion pole_home;  // where poles must end up
  ImplicitRegion channel;    // connects a neighborhood of B's contour to pole_home
};

struct PolePath {
  std::vector<cplx> waypoints;  // first entry is the starting pole location
  double step_bound = 0.0;      // max step length the planner certified
};

struct RoydenOptions {
  std::size_t max_poles = 20000;
  std::size_t max_push_steps = 200000;
  int max_degree = 64;
  double grid_step = 0.0;  // 0: derived from the channel extent
};

struct RoydenTrace {
  int quad_nodes = 0;
  double raw_error = HUGE_VAL;
  std::size_t push_steps = 0;
  double push_budget_per_pole = 0.0;
  double worst_push_dev = 0.0;
  double cert_A = HUGE_VAL;  // certified sup |f| on A
  double cert_B = HUGE_VAL;  // certified sup |f - tau| on B
};

inline ImplicitRegion disk_region(cplx c, double r) {
  return region_from_circline(Circline{c, r, true});
}

// Stadium around segment [a, b] of half-width w.
inline ImplicitRegion stadium_region(cplx a, cplx b, double w) {
  ImplicitRegion r;
  cplx ab = b - a;
  r.clearance = [a, ab, w](cplx z) { return w - seg_dist(z, a, ab); };
  r.bx = Interval(std::min(a.real(), b.real()) - w, std::max(a.real(), b.real()) + w);
  r.by = Interval(std::min(a.imag(), b.imag()) - w, std::max(a.imag(), b.imag()) + w);
  return r;
}

// ---------------------------------------------------------------------------
// Cauchy-integral discretization: N-node quadrature of
// (1/2\pi i) \oint tau/(w - z) dw, producing N simple poles on the loop.
// ---------------------------------------------------------------------------

// Circle loop, exact tangents. The symmetric rule has the closed form
// tau / (1 - ((z - c)/rho)^N), so it is exactly tau at the center for every N.
inline RationalFunction cauchy_discretize(double tau, cplx center, double rho, int N) {
  if (N < 8) throw GeomError("cauchy_discretize: N must be at least 8");
  if (rho <= 0.0) throw GeomError("cauchy_discretize: loop radius must be positive");
  RationalFunction f;
  if (tau == 0.0) return f;
  f.poles.reserve(N);
  for (int i = 0; i < N; ++i) {
    double th = 2.0 * kPi * i / N;
    cplx u = std::polar(1.0, th);
    f.poles.push_back(PoleTerm{Pt(center, rho * u), {-tau * rho * u / (double)N}});
  }
  return f;
}

// Polygonal loop, midpoint-tangent rule. Kept for general loops; the pipeline
// below always discretizes circles.
inline RationalFunction cauchy_discretize(double tau, const ParamCurve& gamma, int N) {
  if (!gamma.closed) throw GeomError("cauchy_discretize: loop must be closed");
  if (N < 8) throw GeomError("cauchy_discretize: N must be at least 8");
  RationalFunction f;
  if (tau == 0.0) return f;
  double L = curve_length(gamma);
  if (!(L > 0.0)) throw GeomError("cauchy_discretize: degenerate loop");
  cplx prev = curve_point_at(gamma, 0.0);
  f.poles.reserve(N);
  for (int i = 0; i < N; ++i) {
    double s0 = L * i / N, s1 = L * (i + 1) / N;
    cplx q0 = (i == 0) ? prev : curve_point_at(gamma, s0);
    cplx q1 = curve_point_at(gamma, s1);
    cplx mid = curve_point_at(gamma, 0.5 * (s0 + s1));
    f.poles.push_back(PoleTerm{Pt(mid), {-tau * (q1 - q0) / (2.0 * kPi * cplx(0.0, 1.0))}});
  }
  return f;
}

inline void cauchy_check_separation(const ParamCurve& gamma, cplx inside, cplx outside) {
  if (winding_number(gamma, inside) == 0)
    throw GeomError("cauchy loop does not enclose the target compact");
  if (winding_number(gamma, outside) != 0)
    throw GeomError("cauchy loop fails to separate the compacts");
}

// ---------------------------------------------------------------------------
// Pole pushing: relocate one pole term along a waypoint path by iterated
// truncated re-expansion, with closed-form remainder accounting per step and
// one certified sweep of the total difference per protected region.
// ---------------------------------------------------------------------------

namespace detail {

// Upper bound for sum_{m > D} B_m / d^{m+1} where
// B_m = sum_k |a_k| C(m,k) |dz|^{m-k} bounds the dropped re-centered
// coefficients. Terms up to D + 64 are accumulated with the combined
// recurrence u_k(m) = C(m,k) dz^{m-k} / d^{m+1} (kept in range for any
// scale), then the tail closes with a ratio bound. HUGE_VAL when the ratio
// is not < 1.
inline double recenter_tail_bound(const std::vector<double>& amag, double dz, double d, int D) {
  int deg = (int)amag.size() - 1;
  if (!(d > 0.0)) return HUGE_VAL;
  int M = D + 64;
  double invd = 1.0 / d;
  std::vector<double> u(deg + 1, 0.0);
  for (int k = 0; k <= deg; ++k) {
    double t = std::pow(invd, k + 1);
    for (int m = k; m < D + 1; ++m) t *= (dz * invd) * (double)(m + 1) / (double)(m + 1 - k);
    u[k] = t;
  }
  double total = 0.0, last = 0.0;
  for (int m = D + 1; m <= M; ++m) {
    double Bm = 0.0;
    for (int k = 0; k <= deg; ++k) Bm += amag[k] * u[k];
    total += Bm;
    last = Bm;
    for (int k = 0; k <= deg; ++k) u[k] *= (dz * invd) * (double)(m + 1) / (double)(m + 1 - k);
  }
  double mm = (double)M + 2.0;
  double ratio = (dz * invd) * (mm / std::max(1.0, mm - deg));
  if (!(ratio < 0.999)) return HUGE_VAL;
  total += last * ratio / (1.0 - ratio);
  return total * 1.000001 + 1e-290;
}

// Re-center the cluster "term" from its pole to waypoint w, truncated at
// degree target_deg. Exact binomial transport of every retained order.
inline PoleTerm recenter_cluster(const PoleTerm& term, cplx w, int target_deg) {
  cplx dz = term.pole.value() - w;
  int deg = (int)term.coef.size() - 1;
  PoleTerm out;
  out.pole = Pt(w);
  out.coef.assign(target_deg + 1, cplx(0.0));
  for (int k = 0; k <= deg; ++k) {
    // C(m,k) dz^{m-k} built incrementally over m
    double binom = 1.0;
    cplx dzp(1.0, 0.0);
    for (int m = k; m <= target_deg; ++m) {
      out.coef[m] += term.coef[k] * binom * dzp;
      binom = binom * (m + 1) / (m + 1 - k);
      dzp *= dz;
    }
  }
  return out;
}

inline double min_protected_dist(cplx z, const std::vector<ImplicitRegion>& protects) {
  double best = HUGE_VAL;
  for (const ImplicitRegion& r : protects) {
    double c = r.clearance(z);
    if (c >= 0.0) return 0.0;
    best = std::min(best, -c);
  }
  return best;
}

}  // namespace detail

struct PushOutcome {
  RationalFunction f;
  double dev_bound = 0.0;        // accumulated closed-form deviation bound
  std::size_t steps = 0;
  int max_degree_used = 0;
  // The difference from the input decomposes as sum(dropped) + R with
  // |R| <= dropped_rem on every protected region; certifying the explicit
  // part avoids the cancellation wall of enclosing new-minus-old directly.
  std::vector<PoleTerm> dropped;
  double dropped_rem = 0.0;
};

inline PushOutcome pole_push_term(const PoleTerm& start, const PolePath& path, double local_tol,
                                  const std::vector<ImplicitRegion>& protects,
                                  const RoydenOptions& opt = {}) {
  PushOutcome out;
  out.f.poles.push_back(start);
  if (path.waypoints.size() < 2) return out;

  for (std::size_t i = 0; i + 1 < path.waypoints.size(); ++i) {
    cplx a = path.waypoints[i], b = path.waypoints[i + 1];
    double step = std::abs(b - a);
    double da = detail::min_protected_dist(a, protects);
    double db = detail::min_protected_dist(b, protects);
    if (!(step < 0.5 * da && step < 0.5 * db))
      throw GeomError("pole_push: step length exceeds half the protected clearance");
  }

  PoleTerm cur = start;
  double budget_left = local_tol;
  std::size_t nsteps = path.waypoints.size() - 1;
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    cplx w = path.waypoints[i];
    double dz = std::abs(cur.pole.value() - w);
    double d = detail::min_protected_dist(w, protects);
    std::vector<double> amag(cur.coef.size());
    for (std::size_t k = 0; k < cur.coef.size(); ++k) amag[k] = std::abs(cur.coef[k]);
    double step_budget = budget_left / (double)(nsteps - (i - 1));
    int deg = std::max(8, (int)cur.coef.size() - 1);
    double rem = HUGE_VAL;
    while (true) {
      rem = detail::recenter_tail_bound(amag, dz, d, deg);
      if (rem <= step_budget || deg >= opt.max_degree) break;
      deg = std::min(opt.max_degree, deg * 2);
    }
    if (rem > step_budget) {
      std::ostringstream msg;
      msg << "pole_push: step " << i << " of " << nsteps << " cannot meet its budget "
          << step_budget << " at degree " << deg << " (achieved bound " << rem << ")";
      throw FeasibilityError(msg.str());
    }
    int ext = deg + 16;
    PoleTerm full = detail::recenter_cluster(cur, w, ext);
    PoleTerm drop = full;
    for (int k = 0; k <= deg; ++k) drop.coef[k] = cplx(0.0);
    out.dropped.push_back(std::move(drop));
    out.dropped_rem += detail::recenter_tail_bound(amag, dz, d, ext);
    cur = std::move(full);
    cur.coef.resize(deg + 1);
    out.max_degree_used = std::max(out.max_degree_used, deg);
    out.dev_bound += rem;
    budget_left -= rem;
    ++out.steps;
  }
  out.f.poles.clear();
  out.f.poles.push_back(cur);
  return out;
}

// Spec-shaped wrapper: relocates the pole of f nearest to path start.
inline RationalFunction pole_push(const RationalFunction& f, const Pt& pole, const PolePath& path,
                                  double local_tol, const std::vector<ImplicitRegion>& protects,
                                  const RoydenOptions& opt = {}) {
  if (path.waypoints.size() < 2) return f;
  std::size_t best = f.poles.size();
  double bd = HUGE_VAL;
  for (std::size_t i = 0; i < f.poles.size(); ++i) {
    double d = dist(f.poles[i].pole, pole);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  if (best == f.poles.size() || bd > 1e-12)
    throw GeomError("pole_push: no pole of f at the requested location");

  PushOutcome pushed = pole_push_term(f.poles[best], path, local_tol, protects, opt);

  RationalFunction g;
  g.poly = f.poly;
  for (std::size_t i = 0; i < f.poles.size(); ++i)
    if (i != best) g.poles.push_back(f.poles[i]);
  for (const PoleTerm& t : pushed.f.poles) g.poles.push_back(t);

  // certified sweep of the total difference over every protected region:
  // the difference equals the sum of the explicitly transported dropped
  // orders plus a scalar remainder already bounded in closed form
  double threshold = local_tol * 1.0001 - pushed.dropped_rem;
  if (threshold <= 0.0) {
    std::ostringstream msg;
    msg << "pole_push: closed-form remainder " << pushed.dropped_rem
        << " alone exceeds local_tol " << local_tol;
    throw CertError(msg.str());
  }
  RationalFunction diffr;
  diffr.poles = pushed.dropped;
  for (const ImplicitRegion& r : protects) {
    auto enclose = [&diffr](const CoverCell& cell) { return abs(rf_enclose(diffr, cell)); };
    double pad = 0.02 * std::max(1.0, std::max(r.bx.width(), r.by.width()));
    CertOptions copt;
    copt.max_cells = 200000;
    CertOutcome c = certify_sup_below(enclose, nullptr, cover_region(r, pad), threshold, copt);
    if (!c.proven) {
      std::ostringstream msg;
      msg << "pole_push: certified difference exceeds local_tol " << local_tol;
      throw CertError(msg.str());
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Channel path planning on a uniform grid.
// ---------------------------------------------------------------------------

struct ChannelGrid {
  double step = 0.0;
  double x0 = 0.0, y0 = 0.0;
  int nx = 0, ny = 0;
  std::vector<int> dist;  // BFS distance to pole_home seed cells, -1 = blocked

  int idx(int i, int j) const { return j * nx + i; }
  cplx at(int i, int j) const { return cplx(x0 + (i + 0.5) * step, y0 + (j + 0.5) * step); }
};

inline ChannelGrid plan_channel_grid(const TwoCompactSpec& spec, double grid_step,
                                     std::size_t cell_budget) {
  ChannelGrid g;
  Interval bx = spec.channel.bx, by = spec.channel.by;
  bx = Interval(std::min(bx.lo, spec.pole_home.bx.lo), std::max(bx.hi, spec.pole_home.bx.hi));
  by = Interval(std::min(by.lo, spec.pole_home.by.lo), std::max(by.hi, spec.pole_home.by.hi));
  double w = std::max(bx.width(), by.width());
  g.step = grid_step > 0.0 ? grid_step : w / 160.0;
  g.x0 = bx.lo;
  g.y0 = by.lo;
  g.nx = std::max(1, (int)std::ceil(bx.width() / g.step));
  g.ny = std::max(1, (int)std::ceil(by.width() / g.step));
  if ((std::size_t)g.nx * (std::size_t)g.ny > cell_budget) {
    std::ostringstream msg;
    msg << "royden_approximate: channel grid of " << g.nx << "x" << g.ny
        << " cells exceeds the planning budget " << cell_budget
        << " (channel extent " << w << ", grid step " << g.step << ")";
    throw FeasibilityError(msg.str());
  }
  g.dist.assign((std::size_t)g.nx * g.ny, -1);

  // admissible cells: inside channel or home with margin, and far enough from
  // the protected compacts that grid steps satisfy the push precondition
  std::deque<int> queue;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      cplx z = g.at(i, j);
      double inches = std::max(spec.channel.clearance(z), spec.pole_home.clearance(z));
      if (inches < 0.35 * g.step) continue;
      double dA = spec.A.clearance(z), dB = spec.B.clearance(z);
      if (dA > -3.0 * g.step || dB > -3.0 * g.step) continue;
      g.dist[g.idx(i, j)] = -2;  // admissible, not yet reached
      if (spec.pole_home.clearance(z) >= 2.0 * g.step) {
        g.dist[g.idx(i, j)] = 0;
        queue.push_back(g.idx(i, j));
      }
    }
  while (!queue.empty()) {
    int c = queue.front();
    queue.pop_front();
    int ci = c % g.nx, cj = c / g.nx;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        int i = ci + di, j = cj + dj;
        if (i < 0 || j < 0 || i >= g.nx || j >= g.ny) continue;
        int& t = g.dist[g.idx(i, j)];
        if (t == -2) {
          t = g.dist[c] + 1;
          queue.push_back(g.idx(i, j));
        }
      }
  }
  return g;
}

inline PolePath descend_to_home(const ChannelGrid& g, cplx start) {
  // nearest reachable cell to the start
  int bi = -1, bj = -1;
  double bd = HUGE_VAL;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (g.dist[g.idx(i, j)] < 0) continue;
      double d = std::abs(g.at(i, j) - start);
      if (d < bd) {
        bd = d;
        bi = i;
        bj = j;
      }
    }
  if (bi < 0) throw GeomError("royden_approximate: no admissible channel path found");
  if (bd > 6.0 * g.step) {
    std::ostringstream msg;
    msg << "royden_approximate: no admissible channel path found (nearest reachable channel "
           "cell is "
        << bd << " away, grid step " << g.step << ")";
    throw GeomError(msg.str());
  }
  PolePath path;
  path.step_bound = 1.5 * g.step;
  path.waypoints.push_back(start);
  if (bd > 1.5 * g.step) {
    // walk straight to the channel entrance in grid-sized steps
    int k = (int)std::ceil(bd / (1.4 * g.step));
    cplx target = g.at(bi, bj);
    for (int s = 1; s < k; ++s) path.waypoints.push_back(start + (target - start) * ((double)s / k));
  }
  int ci = bi, cj = bj;
  path.waypoints.push_back(g.at(ci, cj));
  while (g.dist[g.idx(ci, cj)] > 0) {
    int ni = ci, nj = cj, best = g.dist[g.idx(ci, cj)];
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        int i = ci + di, j = cj + dj;
        if (i < 0 || j < 0 || i >= g.nx || j >= g.ny) continue;
        int t = g.dist[g.idx(i, j)];
        if (t >= 0 && t < best) {
          best = t;
          ni = i;
          nj = j;
        }
      }
    if (ni == ci && nj == cj) throw GeomError("royden_approximate: channel descent stalled");
    ci = ni;
    cj = nj;
    path.waypoints.push_back(g.at(ci, cj));
  }
  return path;
}

// ---------------------------------------------------------------------------
// royden_approximate: the full pipeline (loop quadrature with N doubling,
// then pushing every pole home through the channel, then certified bounds).
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<cplx> region_probes(const ImplicitRegion& r, int rings, int spokes) {
  std::vector<cplx> out;
  cplx c(r.bx.mid(), r.by.mid());
  double rad = 0.5 * std::max(r.bx.width(), r.by.width());
  for (int ri = 1; ri <= rings; ++ri)
    for (int s = 0; s < spokes; ++s) {
      cplx z = c + std::polar(rad * ri / rings, 2.0 * kPi * (s + 0.25 * ri) / spokes);
      if (r.clearance(z) >= 0.0) out.push_back(z);
    }
  if (r.clearance(c) >= 0.0) out.push_back(c);
  return out;
}

}  // namespace detail

inline RationalFunction royden_approximate(const TwoCompactSpec& spec,
                                           const RoydenOptions& opt = {},
                                           RoydenTrace* trace = nullptr) {
  RoydenTrace local;
  RoydenTrace& tr = trace ? *trace : local;

  if (!(spec.tolerance > 0.0)) throw GeomError("royden_approximate: tolerance must be positive");
  RationalFunction zero;
  if (spec.tau == 0.0) {
    tr.quad_nodes = 0;
    tr.raw_error = 0.0;
    tr.cert_A = tr.cert_B = 0.0;
    return zero;
  }

  // spec invariants: disjointness of A and B and of the channel from both
  {
    std::vector<cplx> bp = detail::region_probes(spec.B, 3, 16);
    if (bp.empty()) throw GeomError("royden_approximate: target compact B has no probe points");
    for (cplx z : bp)
      if (spec.A.clearance(z) >= 0.0)
        throw GeomError("royden_approximate: compacts A and B overlap");
  }

  // loop selection: circle about B's bounding-box center, radius between B's
  // enclosing radius and the gap to A
  cplx cB(spec.B.bx.mid(), spec.B.by.mid());
  double rB = 0.5 * std::hypot(spec.B.bx.width(), spec.B.by.width());
  double gapA = -spec.A.clearance(cB) - rB;
  if (!(gapA > 0.0)) throw GeomError("royden_approximate: compacts have no positive gap");
  double rho = rB + 0.4 * gapA;

  std::vector<cplx> probesA = detail::region_probes(spec.A, 3, 16);
  std::vector<cplx> probesB = detail::region_probes(spec.B, 3, 16);
  if (probesA.empty()) throw GeomError("royden_approximate: compact A has no probe points");
  for (cplx z : probesA)
    if (std::abs(z - cB) <= rho)
      throw GeomError("royden_approximate: loop fails to separate A from B");

  // node-count projection: the loop rule error decays like q^N with
  // q = max(|u|, 1/|u|) over probe preimages u = (z - cB)/rho
  double q = 0.0;
  for (cplx z : probesB) q = std::max(q, std::abs(z - cB) / rho);
  for (cplx z : probesA) q = std::max(q, rho / std::abs(z - cB));
  double need = std::log(4.0 * std::abs(spec.tau) / spec.tolerance) / -std::log(q);
  if (!(q < 0.98) || need > (double)opt.max_poles) {
    std::ostringstream msg;
    msg << "royden_approximate: projected quadrature node count "
        << (q < 1.0 ? std::ceil(need) : HUGE_VAL) << " exceeds budgets.max_poles "
        << opt.max_poles << " (loop radius " << rho << ", contrast ratio q = " << q << ")";
    throw FeasibilityError(msg.str());
  }

  auto raw_error = [&](const RationalFunction& f) {
    double e = 0.0;
    for (cplx z : probesA) e = std::max(e, std::abs(rf_eval_raw(f, Pt(z))));
    for (cplx z : probesB) e = std::max(e, std::abs(rf_eval_raw(f, Pt(z)) - spec.tau));
    return e;
  };

  int N = 8;
  RationalFunction f = cauchy_discretize(spec.tau, cB, rho, N);
  tr.raw_error = raw_error(f);
  while (tr.raw_error >= 0.5 * spec.tolerance) {
    if ((std::size_t)(2 * N) > opt.max_poles) {
      std::ostringstream msg;
      msg << "royden_approximate: quadrature budget exhausted at N = " << N
          << " with raw error " << tr.raw_error << " (target " << 0.5 * spec.tolerance << ")";
      throw FeasibilityError(msg.str());
    }
    N *= 2;
    f = cauchy_discretize(spec.tau, cB, rho, N);
    tr.raw_error = raw_error(f);
  }
  tr.quad_nodes = N;

  // push every pole home; the loop collar counts as part of the channel (the
  // channel joins a neighborhood of B's contour to pole_home, and the loop
  // lives in that neighborhood)
  std::vector<ImplicitRegion> protects{spec.A, spec.B};
  ImplicitRegion collar;
  {
    double c_in = rB + 0.05 * gapA, c_out = rho + 0.1 * gapA;
    collar.clearance = [cB, c_in, c_out](cplx z) {
      double t = std::abs(z - cB);
      return std::min(t - c_in, c_out - t);
    };
    collar.bx = Interval(cB.real() - c_out, cB.real() + c_out);
    collar.by = Interval(cB.imag() - c_out, cB.imag() + c_out);
  }
  TwoCompactSpec planned = spec;
  planned.channel = region_union(spec.channel, collar);
  ChannelGrid grid = plan_channel_grid(planned, opt.grid_step, 4000000);
  tr.push_budget_per_pole = 0.45 * spec.tolerance / (double)N;

  // push-step projection before doing any work
  {
    PolePath probe = descend_to_home(grid, f.poles.front().pole.value());
    std::size_t projected = probe.waypoints.size() * (std::size_t)N;
    if (projected > opt.max_push_steps) {
      std::ostringstream msg;
      msg << "royden_approximate: projected push-step count " << projected
          << " (" << probe.waypoints.size() << " waypoints x " << N
          << " poles) exceeds budgets.max_push_steps " << opt.max_push_steps;
      throw FeasibilityError(msg.str());
    }
  }

  RationalFunction pushed;
  pushed.poly = f.poly;
  for (const PoleTerm& t : f.poles) {
    PolePath path = descend_to_home(grid, t.pole.value());
    PushOutcome po = pole_push_term(t, path, tr.push_budget_per_pole, protects, opt);
    tr.push_steps += po.steps;
    tr.worst_push_dev = std::max(tr.worst_push_dev, po.dev_bound);
    if (tr.push_steps > opt.max_push_steps) {
      std::ostringstream msg;
      msg << "royden_approximate: push-step budget " << opt.max_push_steps << " exhausted";
      throw FeasibilityError(msg.str());
    }
    for (const PoleTerm& u : po.f.poles) pushed.poles.push_back(u);
  }

  // merge clusters that landed on the same waypoint
  {
    RationalFunction merged;
    merged.poly = pushed.poly;
    for (const PoleTerm& t : pushed.poles) {
      bool hit = false;
      for (PoleTerm& m : merged.poles) {
        if (m.pole.base == t.pole.base && m.pole.off == t.pole.off) {
          if (t.coef.size() > m.coef.size()) m.coef.resize(t.coef.size(), cplx(0.0));
          for (std::size_t k = 0; k < t.coef.size(); ++k) m.coef[k] += t.coef[k];
          hit = true;
          break;
        }
      }
      if (!hit) merged.poles.push_back(t);
    }
    pushed = std::move(merged);
  }

  // pole containment
  for (const PoleTerm& t : pushed.poles)
    if (!(spec.pole_home.clearance(t.pole.value()) > 0.0))
      throw GeomError("royden_approximate: a pushed pole ended outside pole_home");

  // certified bounds on both compacts
  auto run_cert = [&](const ImplicitRegion& reg, cplx shift, double& out_bound) {
    RationalFunction g = pushed;
    if (shift != cplx(0.0)) {
      if (g.poly.empty()) g.poly.assign(1, cplx(0.0));
      g.poly[0] -= shift;
    }
    auto enclose = [&g](const CoverCell& cell) { return abs(rf_enclose(g, cell)); };
    auto sample = [&g](const Pt& z) { return std::abs(rf_eval_raw(g, z)); };
    double pad = 0.02 * std::max(1.0, std::max(reg.bx.width(), reg.by.width()));
    CertOptions copt;
    copt.max_cells = 400000;
    CertOutcome c =
        certify_sup_below(enclose, sample, cover_region(reg, pad), spec.tolerance, copt);
    if (!c.proven) {
      std::ostringstream msg;
      msg << "royden_approximate: certified bound " << spec.tolerance << " failed ("
          << (c.refuted ? "refuted, witness value " : "exhausted, last value ")
          << c.witness_value << ")";
      throw CertError(msg.str());
    }
    out_bound = c.certified;
  };
  run_cert(spec.A, cplx(0.0), tr.cert_A);
  run_cert(spec.B, cplx(spec.tau, 0.0), tr.cert_B);
  return pushed;
}

}  // namespace harmap
