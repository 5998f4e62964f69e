#include "gkcv/estimate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "gkcv/kernels.hpp"
#include "gkcv/quadrature.hpp"
#include "json.hpp"

namespace gkcv {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double clock_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

const std::vector<double>& select_series(const Trajectory& t, SeriesId id) {
  switch (id) {
    case SeriesId::F:
      return t.f_series;
    case SeriesId::G:
      return t.g_series;
    case SeriesId::GCorr:
      return t.g_corr;
    case SeriesId::FCorr:
      return t.f_corr;
    case SeriesId::PsiG:
      return t.psi_g_series;
    case SeriesId::PsiF:
      return t.psi_f_series;
  }
  throw std::invalid_argument("unknown series id");
}

const std::vector<double>& f_side(const Trajectory& t, CvKind kind) {
  const bool corrected = kind == CvKind::Adjoint || kind == CvKind::Combined;
  const std::vector<double>& s = corrected ? t.f_corr : t.f_series;
  if (s.empty()) throw std::invalid_argument("estimator: missing corrected f stream");
  return s;
}

const std::vector<double>& g_side(const Trajectory& t, CvKind kind) {
  const bool corrected = kind == CvKind::Forward || kind == CvKind::Combined;
  const std::vector<double>& s = corrected ? t.g_corr : t.g_series;
  if (s.empty()) throw std::invalid_argument("estimator: missing corrected g stream");
  return s;
}

std::vector<std::size_t> make_eval_indices(std::size_t n, std::size_t stride) {
  std::vector<std::size_t> idx;
  for (std::size_t m = 0; m <= n; m += stride) idx.push_back(m);
  if (idx.back() != n) idx.push_back(n);
  return idx;
}

void check_shape(double& dt, std::size_t& n, const Trajectory& t) {
  if (t.n_points() < 2) throw std::invalid_argument("estimator: trajectory has fewer than 2 points");
  if (dt < 0.0) {
    dt = t.dt;
    n = t.n_points() - 1;
  } else if (t.dt != dt || t.n_points() != n + 1) {
    throw std::invalid_argument("estimator: trajectories must share dt and horizon");
  }
}

struct Moments {
  double mean = 0.0;
  double var = kNan;  // unbiased; NaN when count < 2
};

Moments replica_moments(const std::vector<std::vector<double>>& partials, std::size_t eval) {
  const std::size_t k = partials.size();
  Moments m;
  double acc = 0.0;
  for (const auto& p : partials) acc += p[eval];
  m.mean = acc / static_cast<double>(k);
  if (k >= 2) {
    double ss = 0.0;
    for (const auto& p : partials) {
      const double d = p[eval] - m.mean;
      ss += d * d;
    }
    m.var = ss / static_cast<double>(k - 1);
  }
  return m;
}

EstimatorReport build_report(std::string name, double dt,
                             const std::vector<std::size_t>& eval_idx,
                             const std::vector<std::vector<double>>& partials,
                             double accum_seconds) {
  if (partials.empty()) throw std::invalid_argument("estimator: no replicas");
  EstimatorReport report;
  report.estimator = std::move(name);
  report.variance_vs_time.reserve(eval_idx.size());
  for (std::size_t e = 0; e < eval_idx.size(); ++e) {
    const Moments m = replica_moments(partials, e);
    report.variance_vs_time.emplace_back(static_cast<double>(eval_idx[e]) * dt, m.var);
    if (e + 1 == eval_idx.size()) report.rho_hat = m.mean;
  }
  report.set_runtime(accum_seconds);
  return report;
}

}  // namespace

// ---------------------------------------------------------------------------
// weight functions

const std::vector<WeightFunction>& weight_catalog() {
  static const std::vector<WeightFunction> catalog = [] {
    std::vector<WeightFunction> list;
    auto add = [&list](const char* name, std::function<double(double)> body) {
      list.push_back({name, [body = std::move(body)](double u) {
                        return u > 1.0 ? 0.0 : body(u);
                      }});
    };
    add("constant", [](double) { return 1.0; });
    add("bartlett", [](double u) { return 1.0 - u; });
    add("parzen", [](double u) {
      if (u <= 0.5) return 1.0 - 6.0 * u * u + 6.0 * u * u * u;
      const double r = 1.0 - u;
      return 2.0 * r * r * r;
    });
    add("tukey_hanning", [](double u) { return 0.5 * (1.0 + std::cos(M_PI * u)); });
    add("parzen_riesz", [](double u) { return 1.0 - u * u; });
    add("parzen_geometric", [](double u) { return 1.0 / (1.0 + u); });
    add("parzen_cauchy", [](double u) { return 1.0 / (1.0 + u * u); });
    return list;
  }();
  return catalog;
}

const WeightFunction* find_weight(const std::string& name) {
  for (const auto& w : weight_catalog())
    if (w.name == name) return &w;
  return nullptr;
}

double zeta(const WeightFunction& w) {
  return quad::adaptive([&w](double v) {
    const double wv = w.eval(v);
    return (1.0 - v) * wv * wv;
  }, 0.0, 1.0, 1e-8);
}

// ---------------------------------------------------------------------------
// reports

double EstimatorReport::final_variance() const {
  return variance_vs_time.empty() ? kNan : variance_vs_time.back().second;
}

void EstimatorReport::set_runtime(double seconds) {
  runtime_seconds = seconds;
  cost = runtime_seconds * final_variance();
}

std::string report_to_json(const EstimatorReport& report) {
  nlohmann::json j;
  j["estimator"] = report.estimator;
  j["rho_hat"] = report.rho_hat;
  nlohmann::json series = nlohmann::json::array();
  for (const auto& [t, v] : report.variance_vs_time) {
    // NaN (K=1) serializes as null
    series.push_back({t, std::isfinite(v) ? nlohmann::json(v) : nlohmann::json()});
  }
  j["variance_vs_time"] = std::move(series);
  j["runtime_seconds"] = report.runtime_seconds;
  j["cost"] = std::isfinite(report.cost) ? nlohmann::json(report.cost) : nlohmann::json();
  return j.dump();
}

EstimatorReport report_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EstimatorReport report;
  report.estimator = j.at("estimator").get<std::string>();
  report.rho_hat = j.at("rho_hat").get<double>();
  for (const auto& entry : j.at("variance_vs_time")) {
    const double t = entry.at(0).get<double>();
    const double v = entry.at(1).is_null() ? kNan : entry.at(1).get<double>();
    report.variance_vs_time.emplace_back(t, v);
  }
  report.runtime_seconds = j.at("runtime_seconds").get<double>();
  report.cost = j.at("cost").is_null() ? kNan : j.at("cost").get<double>();
  return report;
}

void report_variance_csv(const EstimatorReport& report, std::ostream& os) {
  os << "t,variance\n";
  char buf[64];
  for (const auto& [t, v] : report.variance_vs_time) {
    std::snprintf(buf, sizeof buf, "%.17g", t);
    os << buf << ',';
    if (std::isfinite(v)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << buf;
    } else {
      os << "undefined (K=1)";
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Green-Kubo

GkAccumulator::GkAccumulator(CvKind kind, std::size_t eval_stride)
    : kind_(kind), stride_(eval_stride == 0 ? 1 : eval_stride) {}

void GkAccumulator::process(std::span<const Trajectory> trajs) {
  const double t0 = clock_seconds();
  for (const Trajectory& t : trajs) check_shape(dt_, n_, t);
  if (eval_idx_.empty()) eval_idx_ = make_eval_indices(n_, stride_);

  base_ = partials_.size();
  partials_.resize(base_ + trajs.size());
  parallel_for(trajs.size(), [&](std::size_t r) {
    const Trajectory& traj = trajs[r];
    const std::vector<double>& gs = g_side(traj, kind_);
    const std::vector<double>& fs = f_side(traj, kind_);
    const double factor = fs[0];  // evaluated once, at initial time
    std::vector<double>& out = partials_[base_ + r];
    out.resize(eval_idx_.size());
    double integral = 0.0;
    std::size_t e = 0;
    for (std::size_t m = 0; m <= n_; ++m) {
      if (m > 0) integral += 0.5 * dt_ * (gs[m - 1] + gs[m]);
      if (e < eval_idx_.size() && eval_idx_[e] == m) out[e++] = factor * integral;
    }
    if (!std::isfinite(out.back()))
      throw NumericError("gk estimator: non-finite partial for replica " +
                         std::to_string(base_ + r));
  });
  accum_seconds_ += clock_seconds() - t0;
}

EstimatorReport GkAccumulator::finalize(std::string name) {
  return build_report(std::move(name), dt_, eval_idx_, partials_, accum_seconds_);
}

// ---------------------------------------------------------------------------
// half-Einstein
//
// The double time integral is evaluated in lag form: with u = j dt,
//   (1/T) sum_j w(u/T) c_j [ sum_i f(X_i) g(X_{i+j}) dt ] dt,
// with trapezoidal edge weights on both the lag and the inner sums. The
// running lag sums D[j] = sum_i f_i g_{i+j} are maintained with one reversed
// axpy per step, so one pass costs O(N^2) per replica.

HeAccumulator::HeAccumulator(CvKind kind, WeightFunction w, std::size_t eval_stride)
    : kind_(kind), weight_(std::move(w)), stride_(eval_stride == 0 ? 1 : eval_stride) {}

void HeAccumulator::process(std::span<const Trajectory> trajs) {
  const double t0 = clock_seconds();
  for (const Trajectory& t : trajs) check_shape(dt_, n_, t);
  if (eval_idx_.empty()) {
    eval_idx_ = make_eval_indices(n_, stride_);
    weights_at_eval_.resize(eval_idx_.size());
    for (std::size_t e = 0; e < eval_idx_.size(); ++e) {
      const std::size_t m = eval_idx_[e];
      if (m == 0) continue;
      std::vector<double>& wc = weights_at_eval_[e];
      wc.resize(m + 1);
      for (std::size_t j = 0; j <= m; ++j) {
        const double edge = (j == 0 || j == m) ? 0.5 : 1.0;
        wc[j] = edge * weight_.eval(static_cast<double>(j) / static_cast<double>(m));
      }
    }
  }

  base_ = partials_.size();
  partials_.resize(base_ + trajs.size());
  parallel_for(trajs.size(), [&](std::size_t r) {
    const Trajectory& traj = trajs[r];
    const std::vector<double>& fsv = f_side(traj, kind_);
    const std::vector<double>& gsv = g_side(traj, kind_);
    if (fsv.size() != n_ + 1 || gsv.size() != n_ + 1)
      throw std::invalid_argument("he estimator: streams must cover the whole grid");
    const double* fs = fsv.data();
    const double* gs = gsv.data();
    std::vector<double>& out = partials_[base_ + r];
    out.resize(eval_idx_.size());
    std::vector<double> lag(n_ + 1, 0.0);
    std::size_t e = 0;
    for (std::size_t m = 0; m <= n_; ++m) {
      kernels::axpy_rev(gs[m], fs, lag.data(), m + 1);
      if (e < eval_idx_.size() && eval_idx_[e] == m) {
        if (m == 0) {
          out[e++] = 0.0;
          continue;
        }
        const double* wc = weights_at_eval_[e].data();
        double raw = kernels::dot(wc, lag.data(), m + 1);
        raw -= 0.5 * fs[0] * kernels::dot(wc, gs, m + 1);
        raw -= 0.5 * gs[m] * kernels::dot_rev(wc, fs, m + 1);
        out[e++] = raw * dt_ / static_cast<double>(m);
      }
    }
    if (!std::isfinite(out.back()))
      throw NumericError("he estimator: non-finite partial for replica " +
                         std::to_string(base_ + r));
  });
  accum_seconds_ += clock_seconds() - t0;
}

EstimatorReport HeAccumulator::finalize(std::string name) {
  return build_report(std::move(name), dt_, eval_idx_, partials_, accum_seconds_);
}

EstimatorReport report_from_partials(std::string name, double dt,
                                     std::span<const std::size_t> eval_indices,
                                     const std::vector<std::vector<double>>& partials,
                                     double runtime_seconds) {
  const std::vector<std::size_t> idx(eval_indices.begin(), eval_indices.end());
  return build_report(std::move(name), dt, idx, partials, runtime_seconds);
}

// ---------------------------------------------------------------------------
// one-shot wrappers

namespace {

EstimatorReport run_gk(std::span<const Trajectory> trajs, CvKind kind, const char* name) {
  GkAccumulator acc(kind);
  acc.process(trajs);
  return acc.finalize(name);
}

EstimatorReport run_he(std::span<const Trajectory> trajs, CvKind kind, const WeightFunction& w,
                       const char* name) {
  HeAccumulator acc(kind, w);
  acc.process(trajs);
  return acc.finalize(name);
}

}  // namespace

EstimatorReport gk_estimate(std::span<const Trajectory> trajs) {
  return run_gk(trajs, CvKind::Plain, "gk_plain");
}
EstimatorReport gk_cv_forward(std::span<const Trajectory> trajs) {
  return run_gk(trajs, CvKind::Forward, "gk_forward");
}
EstimatorReport gk_cv_adjoint(std::span<const Trajectory> trajs) {
  return run_gk(trajs, CvKind::Adjoint, "gk_adjoint");
}
EstimatorReport gk_cv_combined(std::span<const Trajectory> trajs) {
  return run_gk(trajs, CvKind::Combined, "gk_combined");
}
EstimatorReport he_estimate(std::span<const Trajectory> trajs, const WeightFunction& w) {
  return run_he(trajs, CvKind::Plain, w, "he_plain");
}
EstimatorReport he_cv_forward(std::span<const Trajectory> trajs, const WeightFunction& w) {
  return run_he(trajs, CvKind::Forward, w, "he_forward");
}
EstimatorReport he_cv_adjoint(std::span<const Trajectory> trajs, const WeightFunction& w) {
  return run_he(trajs, CvKind::Adjoint, w, "he_adjoint");
}
EstimatorReport he_cv_combined(std::span<const Trajectory> trajs, const WeightFunction& w) {
  return run_he(trajs, CvKind::Combined, w, "he_combined");
}

// ---------------------------------------------------------------------------
// static terms

double static_term_mc(std::span<const Trajectory> trajs, SeriesId a, SeriesId b) {
  if (trajs.empty()) throw std::invalid_argument("static_term_mc: no trajectories");
  double dt = -1.0;
  std::size_t n = 0;
  double acc = 0.0;
  for (const Trajectory& t : trajs) {
    check_shape(dt, n, t);
    const std::vector<double>& sa = select_series(t, a);
    const std::vector<double>& sb = select_series(t, b);
    if (sa.empty() || sb.empty()) throw std::invalid_argument("static_term_mc: missing stream");
    double integral = kernels::dot(sa.data(), sb.data(), n + 1);
    integral -= 0.5 * (sa[0] * sb[0] + sa[n] * sb[n]);
    acc += integral * dt / t.horizon;
  }
  return acc / static_cast<double>(trajs.size());
}

double static_term_quadrature(const DynamicsModel& model, const ScalarField& a,
                              const ScalarField& b) {
  if (!model.gaussian_invariant || model.dim_state > 2)
    throw std::invalid_argument(
        "static_term_quadrature: model '" + model.name +
        "' has no low-dimensional Gaussian invariant measure; use static_term_mc");
  const auto& variance = model.gaussian_invariant->variance_diag;
  if (model.dim_state == 1) {
    return quad::gaussian_expect_1d(
        [&](double x) {
          const double s[1] = {x};
          return a(std::span<const double>(s, 1)) * b(std::span<const double>(s, 1));
        },
        variance[0], 1e-6);
  }
  return quad::gaussian_expect_2d(
      [&](double x, double y) {
        const double s[2] = {x, y};
        return a(std::span<const double>(s, 2)) * b(std::span<const double>(s, 2));
      },
      variance[0], variance[1], 1e-6);
}

// ---------------------------------------------------------------------------
// estimator kinds

const char* estimator_kind_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::GkPlain:
      return "gk_plain";
    case EstimatorKind::GkForward:
      return "gk_forward";
    case EstimatorKind::GkAdjoint:
      return "gk_adjoint";
    case EstimatorKind::GkCombined:
      return "gk_combined";
    case EstimatorKind::HePlain:
      return "he_plain";
    case EstimatorKind::HeForward:
      return "he_forward";
    case EstimatorKind::HeAdjoint:
      return "he_adjoint";
    case EstimatorKind::HeCombined:
      return "he_combined";
  }
  throw std::invalid_argument("unknown estimator kind");
}

EstimatorKind estimator_kind_from_name(const std::string& name) {
  for (int k = 0; k < 8; ++k) {
    const EstimatorKind kind = static_cast<EstimatorKind>(k);
    if (name == estimator_kind_name(kind)) return kind;
  }
  throw ConfigError("unknown estimator '" + name + "'");
}

bool estimator_kind_is_he(EstimatorKind kind) {
  return kind == EstimatorKind::HePlain || kind == EstimatorKind::HeForward ||
         kind == EstimatorKind::HeAdjoint || kind == EstimatorKind::HeCombined;
}

CvKind estimator_cv_kind(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::GkPlain:
    case EstimatorKind::HePlain:
      return CvKind::Plain;
    case EstimatorKind::GkForward:
    case EstimatorKind::HeForward:
      return CvKind::Forward;
    case EstimatorKind::GkAdjoint:
    case EstimatorKind::HeAdjoint:
      return CvKind::Adjoint;
    case EstimatorKind::GkCombined:
    case EstimatorKind::HeCombined:
      return CvKind::Combined;
  }
  throw std::invalid_argument("unknown estimator kind");
}

double asymptotic_variance_prediction(EstimatorKind kind, double factor_f, double factor_g,
                                      double zeta_w) {
  return estimator_kind_is_he(kind) ? 4.0 * zeta_w * factor_f * factor_g
                                    : 2.0 * factor_f * factor_g;
}

}  // namespace gkcv
