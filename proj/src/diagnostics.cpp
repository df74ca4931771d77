#include "mfgcn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mfgcn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  // a flat series (up to rounding in the mean) has no slope
  const bool flat = syy <= 1e-24 * n;
  f.slope = sxx > 0 && !flat ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) res += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
  // a flat series is fitted exactly by a zero slope
  f.r2 = flat ? 1.0 : std::clamp(1.0 - res / syy, 0.0, 1.0);
  return f;
}

// log(e^{-w t} + e^{-w (T - t)}) without overflow
double log_two_sided(double w, double t, double T) {
  double a = -w * t, b = -w * (T - t);
  double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& v, std::size_t i, std::size_t j) {
  double s = 0;
  for (std::size_t q = i; q < j; ++q) s += 0.5 * (t[q + 1] - t[q]) * (v[q] + v[q + 1]);
  return s;
}

std::vector<double> cumulative(const std::vector<double>& t, const std::vector<double>& v) {
  std::vector<double> c(t.size(), 0.0);
  for (std::size_t q = 1; q < t.size(); ++q) c[q] = c[q - 1] + 0.5 * (t[q] - t[q - 1]) * (v[q] + v[q - 1]);
  return c;
}

// num / den with the conventions needed by the certificate: a negligible
// numerator never constrains C0, a vanishing denominator forces it to infinity
double need(double num, double den, double floor) {
  if (num <= floor) return 0.0;
  if (den <= 0.0) return kInf;
  return num / den;
}

double l2_diff_sq(std::span<const double> a, std::span<const double> b, double h, bool centered) {
  double mean = 0.0;
  if (centered) {
    for (std::size_t j = 0; j < a.size(); ++j) mean += a[j] - b[j];
    mean /= static_cast<double>(a.size());
  }
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += std::pow(a[j] - b[j] - mean, 2);
  return h * s;
}

double grad_diff_sq(std::span<const double> a, std::span<const double> b, double h) {
  const std::size_t n = a.size();
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t jp = j + 1 == n ? 0 : j + 1;
    double d = ((a[jp] - a[j]) - (b[jp] - b[j])) / h;
    s += d * d;
  }
  return h * s;
}

void require_same_tree(const NoiseTree& a, const NoiseTree& b) {
  if (a.epochs() != b.epochs() || a.total_steps() != b.total_steps() || a.lead_steps() != b.lead_steps() || a.step() != b.step() ||
      a.dt() != b.dt())
    throw Error("diagnostics: solutions live on different trees");
}

}  // namespace

// ---------------------------------------------------------------------------

DecayFit fit_exponential_decay(const Series& s, double t1, double t2) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.t[i] < t1 || s.t[i] > t2) continue;
    if (s.value[i] < 0.0 || !std::isfinite(s.value[i])) throw Error("decay fit: values must be finite and nonnegative");
    x.push_back(s.t[i]);
    y.push_back(std::log(std::max(s.value[i], kSeriesFloor)));
  }
  if (x.size() < 2) throw Error("decay fit: fewer than two samples in the window");
  LineFit f = least_squares(x, y);
  return {std::max(0.0, -f.slope), std::exp(f.intercept), f.r2, x.front(), x.back(), static_cast<int>(x.size())};
}

DecayFit fit_exponential_decay(const Series& s) {
  if (s.size() < 2) throw Error("decay fit: fewer than two samples");
  return fit_exponential_decay(s, s.t.front(), s.t.back());
}

DecayFit fit_two_sided_decay(const Series& s, double horizon, double floor) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s.value[i] > floor)) continue;
    x.push_back(s.t[i]);
    y.push_back(std::log(s.value[i]));
  }
  if (x.size() < 3) throw Error("two-sided fit: fewer than three samples above the floor");
  double my = 0;
  for (double v : y) my += v;
  my /= static_cast<double>(y.size());
  double syy = 0;
  for (double v : y) syy += (v - my) * (v - my);

  auto cost = [&](double w, double* log_amp) {
    double c = 0;
    for (std::size_t i = 0; i < x.size(); ++i) c += y[i] - log_two_sided(w, x[i], horizon);
    c /= static_cast<double>(x.size());
    double r = 0;
    for (std::size_t i = 0; i < x.size(); ++i) r += std::pow(y[i] - c - log_two_sided(w, x[i], horizon), 2);
    if (log_amp) *log_amp = c;
    return r;
  };
  // coarse log-spaced scan, then golden section around the best cell
  const int cells = 400;
  const double lo = std::log(1e-4), hi = std::log(1e3);
  int best = 0;
  double best_cost = kInf;
  for (int i = 0; i <= cells; ++i) {
    double w = std::exp(lo + (hi - lo) * i / cells);
    double c = cost(w, nullptr);
    if (c < best_cost) best_cost = c, best = i;
  }
  double a = lo + (hi - lo) * std::max(0, best - 1) / cells, b = lo + (hi - lo) * std::min(cells, best + 1) / cells;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 80; ++it) {
    double c1 = b - g * (b - a), c2 = a + g * (b - a);
    if (cost(std::exp(c1), nullptr) < cost(std::exp(c2), nullptr))
      b = c2;
    else
      a = c1;
  }
  const double w = std::exp(0.5 * (a + b));
  double log_amp = 0;
  double res = cost(w, &log_amp);
  DecayFit f;
  f.rate = w;
  f.amplitude = std::exp(log_amp);
  f.r2 = syy > 1e-300 ? std::clamp(1.0 - res / syy, 0.0, 1.0) : 1.0;
  f.t1 = x.front();
  f.t2 = x.back();
  f.points = static_cast<int>(x.size());
  return f;
}

double series_at(const Series& s, double t) {
  if (s.size() == 0) throw Error("series_at: empty series");
  if (t <= s.t.front()) return s.value.front();
  if (t >= s.t.back()) return s.value.back();
  auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  std::size_t i = static_cast<std::size_t>(it - s.t.begin());
  double w = (t - s.t[i - 1]) / (s.t[i] - s.t[i - 1]);
  return (1 - w) * s.value[i - 1] + w * s.value[i];
}

// ---------------------------------------------------------------------------

MFGTreeSolution solve_turnpike_proxy(const CouplingSpec& c, const MFGTreeSolution& sol, const DensityField& m0_other, int pad,
                                     const SolveParams& p) {
  if (pad < 0) throw Error("turnpike proxy: negative padding");
  const NoiseTree& t = sol.tree;
  NoiseTree ext = t;
  if (t.epochs() == 0) {
    // a single branch: pad by whole multiples of the horizon
    const int steps = t.total_steps() * (1 + pad);
    ext = NoiseTree::build(0.0, t.dt() * steps, 0, steps);
  } else if (pad > 0) {
    if (t.epochs() + pad > kMaxEpochs) throw Error("turnpike proxy: padded tree exceeds the epoch cap");
    ext = NoiseTree::build_with_lead(t.sigma(), t.epoch_len(), t.epochs() + pad, t.fine_steps(), t.lead_steps());
  }
  Terminal term = sol.terminal;
  if (!term.use_coupling && term.leaf_fields.size() != 1 && pad > 0) throw Error("turnpike proxy: per-leaf terminal cannot be extended");
  return solve_mfg_tree(c, ext, m0_other, term, p);
}

TurnpikeReport turnpike_report(const MFGTreeSolution& sol, const MFGTreeSolution& proxy, double noise_floor) {
  const NoiseTree& t = sol.tree;
  const NoiseTree& q = proxy.tree;
  if (!(sol.grid() == proxy.grid())) throw GridMismatch();
  if (q.dt() != t.dt() || q.step() != t.step() || q.total_steps() < t.total_steps() || q.epochs() < t.epochs())
    throw Error("turnpike: proxy tree does not extend the solution tree");
  const int N = t.total_steps();
  if (N < 4) throw Error("turnpike: window too short");
  const double h = sol.grid().h();
  TurnpikeReport rep;
  rep.noise_floor = noise_floor;
  for (int k = 0; k <= N; ++k) {
    const int depth = t.depth_at_step(k);
    const int first = NoiseTree::node_id(depth, 0);
    const double w = std::ldexp(1.0, -depth);
    double dm = 0.0, dv = 0.0;
    for (int i = 0; i < (1 << depth); ++i) {
      const int id = first + i;
      const int js = local_slice(t, id, k), jq = local_slice(q, id, k);
      if (js < 0 || jq < 0) throw Error("turnpike: trees disagree on node " + std::to_string(id));
      dm += w * wasserstein1_samples(sol.m.slice(id, js), proxy.m.slice(id, jq), h);
      dv += w * std::sqrt(grad_diff_sq(sol.u.slice(id, js), proxy.u.slice(id, jq), h));
    }
    const double tk = k * t.dt();
    rep.density_gap.push(tk, dm);
    rep.gradient_gap.push(tk, dv);
  }
  const double T = N * t.dt();
  // a series that never leaves the floor has nothing to fit
  auto fit = [&](const Series& s) {
    int above = 0;
    for (double v : s.value) above += v > noise_floor;
    return above >= 3 ? fit_two_sided_decay(s, T, noise_floor) : DecayFit{};
  };
  rep.density_fit = fit(rep.density_gap);
  rep.gradient_fit = fit(rep.gradient_gap);
  const double mid = std::max(series_at(rep.density_gap, 0.5 * T), std::numeric_limits<double>::min());
  rep.contrast = std::min(rep.density_gap.value.front(), rep.density_gap.value.back()) / mid;
  return rep;
}

// ---------------------------------------------------------------------------

LasryLionsReport lasry_lions_functional(const MFGTreeSolution& s1, const MFGTreeSolution& s2) {
  require_same_tree(s1.tree, s2.tree);
  if (!(s1.grid() == s2.grid())) throw GridMismatch();
  const NoiseTree& t = s1.tree;
  const Grid g = s1.grid();
  const double h = g.h(), dt = t.dt(), ih = 1.0 / h;
  const std::size_t n = static_cast<std::size_t>(g.n());
  const int N = t.total_steps();
  DiffusionSolver S(g, dt);
  std::vector<double> p1(n), p2(n);

  auto bracket_at = [&](int k) {
    return s1.expect_at_step(k, [&](int id, std::span<const double> u1, std::span<const double> m1) {
      const int j = local_slice(t, id, k);
      auto u2 = s2.u.slice(id, j);
      auto m2 = s2.m.slice(id, j);
      double acc = 0;
      for (std::size_t q = 0; q < n; ++q) acc += (u1[q] - u2[q]) * (m1[q] - m2[q]);
      return h * acc;
    });
  };
  auto breg_plus = [](double q, double p) {  // phi(x) = 1/2 max(x, 0)^2
    double mq = std::max(q, 0.0), mp = std::max(p, 0.0);
    return 0.5 * mq * mq - 0.5 * mp * mp - mp * (q - p);
  };
  auto breg_minus = [](double q, double p) {  // phi(x) = 1/2 min(x, 0)^2
    double mq = std::min(q, 0.0), mp = std::min(p, 0.0);
    return 0.5 * mq * mq - 0.5 * mp * mp - mp * (q - p);
  };

  LasryLionsReport rep;
  double cum = 0.0, cumq = 0.0;
  double prev = bracket_at(0);
  rep.bracket.push(0.0, prev);
  rep.dissipation.push(0.0, 0.0);
  rep.quadratic.push(0.0, 0.0);
  rep.magnitude = std::abs(prev);
  for (int k = 0; k < N; ++k) {
    const int depth = t.depth_at_step(k);
    const int first = NoiseTree::node_id(depth, 0);
    const double w = std::ldexp(1.0, -depth);
    double dis = 0.0, quad = 0.0;
    for (int i = 0; i < (1 << depth); ++i) {
      const int id = first + i;
      const int j = local_slice(t, id, k);
      auto m1 = s1.m.slice(id, j), m2 = s2.m.slice(id, j);
      auto u1 = s1.u.slice(id, j + 1), u2 = s2.u.slice(id, j + 1);
      std::copy(m1.begin(), m1.end(), p1.begin());
      std::copy(m2.begin(), m2.end(), p2.begin());
      S.solve_in_place(p1);
      S.solve_in_place(p2);
      double acc = 0.0, accq = 0.0;
      for (std::size_t q = 0; q < n; ++q) {
        std::size_t qp = q + 1 == n ? 0 : q + 1;
        std::size_t qm = q == 0 ? n - 1 : q - 1;
        double dm1 = (u1[q] - u1[qm]) * ih, dm2 = (u2[q] - u2[qm]) * ih;
        double dp1 = (u1[qp] - u1[q]) * ih, dp2 = (u2[qp] - u2[q]) * ih;
        acc += p1[q] * (breg_plus(dm2, dm1) + breg_minus(dp2, dp1)) + p2[q] * (breg_plus(dm1, dm2) + breg_minus(dp1, dp2));
        double da = std::max(dm1, 0.0) - std::max(dm2, 0.0), db = std::min(dp1, 0.0) - std::min(dp2, 0.0);
        accq += 0.5 * (p1[q] + p2[q]) * (da * da + db * db);
      }
      dis += w * dt * h * acc;
      quad += w * dt * h * accq;
    }
    const double next = bracket_at(k + 1);
    rep.max_violation = std::max(rep.max_violation, next - prev + dis);
    cum += dis;
    cumq += quad;
    const double tk = (k + 1) * dt;
    rep.bracket.push(tk, next);
    rep.dissipation.push(tk, cum);
    rep.quadratic.push(tk, cumq);
    rep.magnitude = std::max({rep.magnitude, std::abs(next), cum});
    prev = next;
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<NamedDrift> drift_presets() {
  constexpr double tp = 2.0 * std::numbers::pi;
  return {
      {"zero", [](double, double) { return 0.0; }},
      {"constant", [](double, double) { return 1.5; }},
      {"sine", [tp](double, double x) { return 2.0 * std::sin(tp * x); }},
      {"traveling", [tp](double t, double x) { return 2.0 * std::cos(tp * (x - t)); }},
      {"switching", [tp](double t, double x) { return (std::sin(2.0 * tp * t) >= 0.0 ? 1.5 : -1.5) * std::cos(tp * x); }},
  };
}

ForwardProbe fp_decay_probe(const Drift& v, const SignedMeasure& mu0, double horizon, double dt, double fit_from) {
  const Grid g = mu0.grid();
  const double h = g.h();
  const int n = g.n();
  if (std::abs(integral(mu0)) > 1e-10) throw Error("fp probe: mu0 must be centered");
  const int steps = static_cast<int>(std::lround(horizon / dt));
  if (steps < 2) throw Error("fp probe: horizon shorter than two steps");
  DiffusionSolver S(g, dt);
  std::vector<double> mu(mu0.values().begin(), mu0.values().end()), flux(static_cast<std::size_t>(n));
  ForwardProbe out;
  out.norm.push(0.0, l2_norm(mu, h));
  for (int k = 0; k < steps; ++k) {
    const double tk = k * dt;
    S.solve_in_place(mu);
    for (int j = 0; j < n; ++j) {
      // face j+1/2 carries velocity -V
      const double w = -v(tk, g.x(j) + 0.5 * h);
      if (std::abs(w) * dt > h) throw Error("fp probe: drift violates the CFL bound");
      const std::size_t jp = static_cast<std::size_t>((j + 1) % n);
      flux[static_cast<std::size_t>(j)] = std::max(w, 0.0) * mu[static_cast<std::size_t>(j)] + std::min(w, 0.0) * mu[jp];
    }
    for (int j = n - 1; j >= 0; --j) {
      const std::size_t jm = static_cast<std::size_t>((j + n - 1) % n);
      mu[static_cast<std::size_t>(j)] -= dt / h * (flux[static_cast<std::size_t>(j)] - flux[jm]);
    }
    out.norm.push((k + 1) * dt, l2_norm(mu, h));
    out.max_mass = std::max(out.max_mass, std::abs(integral(mu, h)));
  }
  out.fit = fit_exponential_decay(out.norm, fit_from * horizon, horizon);
  return out;
}

double BackwardProbe::constant_for(double lam) const {
  const std::size_t m = norm.size();
  const double T = norm.t.back();
  // discounted source integral int_{t0}^T e^{-lam (s - t0)} |A(s)| ds, trapezoid
  double best = 0.0;
  double acc = 0.0;
  for (std::size_t i = m; i-- > 0;) {
    if (i + 1 < m) {
      const double d = norm.t[i + 1] - norm.t[i];
      acc = std::exp(-lam * d) * acc + 0.5 * d * (source.value[i] + std::exp(-lam * d) * source.value[i + 1]);
    }
    const double den = std::exp(-lam * (T - norm.t[i])) * norm.value.back() + acc;
    best = std::max(best, need(norm.value[i], den, 1e-13));
  }
  return best;
}

BackwardProbe backward_decay_probe(const Drift& v, const Drift& source, const ValueField& terminal, double horizon, double dt) {
  const Grid g = terminal.grid();
  const double h = g.h();
  const int n = g.n();
  const int steps = static_cast<int>(std::lround(horizon / dt));
  if (steps < 2) throw Error("backward probe: horizon shorter than two steps");
  DiffusionSolver S(g, dt);
  std::vector<double> cur(terminal.values().begin(), terminal.values().end()), nxt(static_cast<std::size_t>(n)),
      a(static_cast<std::size_t>(n));
  auto centered_norm = [&](const std::vector<double>& x) {
    double mean = 0;
    for (double y : x) mean += y;
    mean /= n;
    double s = 0;
    for (double y : x) s += (y - mean) * (y - mean);
    return std::sqrt(h * s);
  };
  auto source_at = [&](double t) {
    for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(j)] = source(t, g.x(j));
    return l2_norm(a, h);
  };
  std::vector<double> tt{horizon}, nv{centered_norm(cur)}, sv{source_at(horizon)};
  for (int k = steps - 1; k >= 0; --k) {
    const double tn = (k + 1) * dt, tk = k * dt;
    source_at(tk);
    for (int j = 0; j < n; ++j) {
      const std::size_t q = static_cast<std::size_t>(j), qp = static_cast<std::size_t>((j + 1) % n), qm = static_cast<std::size_t>((j + n - 1) % n);
      const double vv = v(tn, g.x(j));
      if (std::abs(vv) * dt > h) throw Error("backward probe: drift violates the CFL bound");
      const double tr = std::max(vv, 0.0) * (cur[q] - cur[qm]) / h + std::min(vv, 0.0) * (cur[qp] - cur[q]) / h;
      nxt[q] = cur[q] - dt * tr - dt * a[q];
    }
    S.solve_in_place(nxt);
    std::swap(cur, nxt);
    tt.push_back(tk);
    nv.push_back(centered_norm(cur));
    sv.push_back(l2_norm(a, h));
  }
  BackwardProbe out;
  for (std::size_t i = tt.size(); i-- > 0;) {
    out.norm.push(tt[i], nv[i]);
    out.source.push(tt[i], sv[i]);
  }
  // decay measured in the backward time tau = T - t
  Series tau;
  for (std::size_t i = 0; i < tt.size(); ++i) tau.push(horizon - tt[i], nv[i]);
  out.fit = fit_exponential_decay(tau);
  return out;
}

// ---------------------------------------------------------------------------

bool CertificateReport::hypotheses_hold() const {
  for (bool b : holds)
    if (!b) return false;
  return !holds.empty();
}

CertificateReport certificate_check(const Series& alpha, const Series& beta, const Series& gamma, const CertificateOptions& opt) {
  const std::size_t m = alpha.size();
  if (m < 3 || beta.size() != m || gamma.size() != m) throw Error("certificate: series must share a grid of at least 3 samples");
  for (std::size_t i = 0; i < m; ++i) {
    if (beta.t[i] != alpha.t[i] || gamma.t[i] != alpha.t[i]) throw Error("certificate: series must share a time grid");
    for (double v : {alpha.value[i], beta.value[i], gamma.value[i]})
      if (!std::isfinite(v) || v < 0.0) throw Error("certificate: series must be finite and nonnegative");
  }
  if (opt.mode == CertificateMode::discounted && !(opt.delta > 0.0)) throw Error("certificate: discounted mode needs delta > 0");
  const auto& t = alpha.t;
  const auto& a = alpha.value;
  const auto& b = beta.value;
  const auto& c = gamma.value;
  const double fl = opt.floor;
  const std::vector<double> Ib = cumulative(t, b);

  // lambda-free hypotheses
  double req4 = 0.0;
  for (std::size_t i = 0; i < m; ++i) req4 = std::max(req4, need(a[i], b[i], fl));
  double req1 = 0.0;
  if (opt.mode == CertificateMode::finite) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) req1 = std::max(req1, need(Ib[j] - Ib[i], std::sqrt(a[i] * c[i]) + std::sqrt(a[j] * c[j]), fl));
  } else {
    // int_{t_i}^{end} e^{-delta t} beta, accumulated backward
    std::vector<double> eb(m);
    for (std::size_t i = 0; i < m; ++i) eb[i] = std::exp(-opt.delta * t[i]) * b[i];
    const std::vector<double> Ie = cumulative(t, eb);
    for (std::size_t i = 0; i < m; ++i)
      req1 = std::max(req1, need(Ie.back() - Ie[i], std::exp(-opt.delta * t[i]) * std::sqrt(a[i] * c[i]), fl));
  }

  auto req2 = [&](double lam) {
    double r = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i; j < m; ++j) r = std::max(r, need(c[j], std::exp(-lam * (t[j] - t[i])) * c[i] + (Ib[j] - Ib[i]), fl));
    return r;
  };
  auto req3 = [&](double lam) {
    double r = 0.0;
    if (opt.mode == CertificateMode::finite) {
      for (std::size_t i = 0; i < m; ++i) {
        double sup = 0.0;
        for (std::size_t j = i; j < m; ++j) {
          sup = std::max(sup, c[j]);
          r = std::max(r, need(a[i], std::exp(-lam * (t[j] - t[i])) * a[j] + (Ib[j] - Ib[i]) + sup, fl));
        }
      }
    } else {
      for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> w(m - i);
        double sup = 0.0;
        for (std::size_t j = i; j < m; ++j) {
          const double e = std::exp(-lam * (t[j] - t[i]));
          w[j - i] = e * b[j];
          sup = std::max(sup, e * c[j]);
        }
        std::vector<double> tt(t.begin() + static_cast<std::ptrdiff_t>(i), t.end());
        r = std::max(r, need(a[i], trapezoid(tt, w, 0, w.size() - 1) + sup, fl));
      }
    }
    return r;
  };

  CertificateReport rep;
  double lam_star = -1.0, c0_star = kInf;
  std::vector<double> at_star;
  const int count = static_cast<int>(std::floor((opt.lam_max - opt.lam_min) / opt.lam_step + 1e-9)) + 1;
  for (int q = 0; q < count; ++q) {
    const double lam = opt.lam_min + q * opt.lam_step;
    std::vector<double> req{req1, req2(lam), req3(lam), req4};
    const double c0 = *std::max_element(req.begin(), req.end());
    if (q == 0 || c0 <= opt.c0_cap) {
      if (q == 0 || lam > lam_star) {
        lam_star = lam;
        c0_star = c0;
        at_star = req;
      }
    }
    // C0(lambda) is nondecreasing in lambda
    if (c0 > opt.c0_cap) break;
  }
  rep.lambda = lam_star;
  rep.c0 = c0_star;
  rep.required = at_star;
  for (double r : at_star) {
    rep.margins.push_back(std::isfinite(r) ? std::clamp(1.0 - r / opt.c0_cap, -1.0, 1.0) : -1.0);
    rep.holds.push_back(r <= opt.c0_cap);
  }

  // conclusion of the decay lemma, with a fitted rate and the smallest constant
  Series s;
  for (std::size_t i = 0; i < m; ++i) s.push(t[i], a[i] + c[i]);
  const double T = t.back() - t.front();
  double cbest = 0.0;
  if (opt.mode == CertificateMode::finite) {
    rep.conclusion_rate = fit_two_sided_decay(s, T, fl).rate;
    const double data = a.back() + c.front();
    for (std::size_t i = 0; i < m; ++i) {
      const double env = std::exp(-rep.conclusion_rate * (t[i] - t.front())) + std::exp(-rep.conclusion_rate * (t.back() - t[i]));
      cbest = std::max(cbest, need(s.value[i], env * data, fl));
    }
  } else {
    Series above;
    for (std::size_t i = 0; i < m; ++i)
      if (s.value[i] > fl) above.push(t[i], s.value[i]);
    rep.conclusion_rate = above.size() >= 2 ? fit_exponential_decay(above).rate : 0.0;
    for (std::size_t i = 0; i < m; ++i) cbest = std::max(cbest, need(s.value[i], std::exp(-rep.conclusion_rate * (t[i] - t.front())) * c.front(), fl));
  }
  rep.conclusion_c = cbest;
  // nonnegative iff the fitted rate is at least lam_min and the constant stays within the cap
  rep.conclusion_margin = std::isfinite(cbest) && rep.conclusion_rate > 0.0 && cbest > 0.0
                              ? std::min(std::log(rep.conclusion_rate / opt.lam_min), std::log(opt.c0_cap / cbest))
                              : -1.0;
  return rep;
}

void certificate_series(const MFGTreeSolution& s1, const MFGTreeSolution& s2, Series& alpha, Series& beta, Series& gamma) {
  require_same_tree(s1.tree, s2.tree);
  const NoiseTree& t = s1.tree;
  const double h = s1.grid().h();
  alpha = {}, beta = {}, gamma = {};
  for (int k = 0; k <= t.total_steps(); ++k) {
    double av = 0, bv = 0, gv = 0;
    const int depth = t.depth_at_step(k);
    const double w = std::ldexp(1.0, -depth);
    for (int i = 0; i < (1 << depth); ++i) {
      const int id = NoiseTree::node_id(depth, i);
      const int j = local_slice(t, id, k);
      av += w * l2_diff_sq(s1.u.slice(id, j), s2.u.slice(id, j), h, true);
      bv += w * grad_diff_sq(s1.u.slice(id, j), s2.u.slice(id, j), h);
      gv += w * l2_diff_sq(s1.m.slice(id, j), s2.m.slice(id, j), h, false);
    }
    const double tk = k * t.dt();
    alpha.push(tk, av);
    beta.push(tk, bv);
    gamma.push(tk, gv);
  }
}

}  // namespace mfgcn
