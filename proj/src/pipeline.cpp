#include "ssmrom/pipeline.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace ssmrom {

namespace {

constexpr int kExitIo = 1;
constexpr int kExitFit = 2;
constexpr int kExitNormalForm = 3;
constexpr int kExitAnalytics = 4;

// Deterministic Gaussian noise (Box-Muller on the seeded engine), pinned here
// rather than relying on std::normal_distribution's unspecified algorithm.
class GaussianNoise {
public:
  explicit GaussianNoise(std::uint64_t seed) : engine_(seed) {}
  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform_();
    } while (u1 <= 1e-300);
    const double u2 = uniform_();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586;
    spare_ = radius * std::sin(two_pi * u2);
    have_spare_ = true;
    return radius * std::cos(two_pi * u2);
  }

private:
  double uniform_() {
    return static_cast<double>(engine_()) / static_cast<double>(std::mt19937_64::max());
  }
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

PolynomialObservable parse_observable(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "identity") {
    return PolynomialObservable::identity(j.at("dim").get<int>());
  }
  if (type == "scalar_poly") {
    const int input_dim = static_cast<int>(j.at("terms").at(0).at("exponents").size());
    std::vector<std::pair<Eigen::VectorXi, double>> terms;
    for (const auto& term : j.at("terms")) {
      Eigen::VectorXi expo(input_dim);
      for (int i = 0; i < input_dim; ++i) expo[i] = term.at("exponents")[i].get<int>();
      terms.emplace_back(expo, term.at("coeff").get<double>());
    }
    return PolynomialObservable::scalar(input_dim, j.at("degree").get<int>(), terms);
  }
  if (type == "select") {
    const int dim = j.at("dim").get<int>();
    const auto channels = j.at("channels").get<std::vector<int>>();
    PolynomialObservable obs;
    obs.input_dim = dim;
    obs.output_dim = static_cast<int>(channels.size());
    obs.degree = 1;
    obs.coeffs = Eigen::MatrixXd::Zero(obs.output_dim, dim);
    for (size_t r = 0; r < channels.size(); ++r) obs.coeffs(static_cast<Eigen::Index>(r), channels[r]) = 1.0;
    return obs;
  }
  throw ArgumentError("unknown observable type: " + type);
}

}  // namespace

PipelineConfig parse_pipeline_config(const Json& j) {
  PipelineConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{0});

  if (j.contains("input")) {
    const auto& in = j.at("input");
    if (in.contains("train_csv")) cfg.train_csv = in.at("train_csv").get<std::vector<std::string>>();
    if (in.contains("test_csv")) cfg.test_csv = in.at("test_csv").get<std::vector<std::string>>();
    if (in.contains("synth")) {
      const auto& sj = in.at("synth");
      SynthSpec spec;
      spec.system = sj.at("system").get<std::string>();
      spec.params = sj.value("params", Json::object());
      if (sj.contains("observable")) spec.observable = parse_observable(sj.at("observable"));
      if (sj.contains("initial_conditions"))
        for (const auto& row : sj.at("initial_conditions"))
          spec.state_ics.push_back(real_vector_from_json(row));
      if (sj.contains("initial_conditions_polar"))
        for (const auto& row : sj.at("initial_conditions_polar"))
          spec.manifold_ics.emplace_back(row[0].get<double>(), row[1].get<double>());
      spec.roles = sj.at("roles").get<std::vector<std::string>>();
      spec.tspan = sj.at("tspan").get<double>();
      spec.dt = sj.at("dt").get<double>();
      spec.trim = sj.value("trim", 0.0);
      if (sj.contains("noise")) {
        spec.noise_level = sj.at("noise").value("level", 0.0);
        spec.noise_roles = sj.at("noise").value("roles", std::string("all"));
      }
      spec.manifold_ic_order = sj.value("manifold_ic_order", 7);
      cfg.synth = std::move(spec);
    }
  }

  if (j.contains("embedding")) {
    const auto& e = j.at("embedding");
    cfg.auto_embedding = e.value("auto", true);
    cfg.p = e.value("p", 0);
    cfg.shift = e.value("shift", 1);
    if (cfg.p > 0 && !e.contains("auto")) cfg.auto_embedding = false;
  }
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    cfg.d = g.value("d", 2);
    cfg.M = g.value("M", 3);
    cfg.ridge = g.value("ridge", 0.0);
    cfg.refine_iters = g.value("refine_iters", 0);
    if (g.value("mode", std::string("default")) == "fixed" || g.contains("U1"))
      cfg.fixed_projection = real_matrix_from_json(g.at("U1"));
  }
  if (j.contains("normalform")) {
    const auto& n = j.at("normalform");
    cfg.N = n.value("N", 3);
    cfg.delta = n.value("delta", 1e-8);
    cfg.nf_mode = n.value("mode", std::string("derivative"));
    cfg.jacobian_estimator = n.value("jacobian", std::string("poly"));
    cfg.cutoff_fraction = n.value("cutoff_fraction", 0.15);
    if (n.contains("cutoff")) cfg.cutoff_abs = n.at("cutoff").get<double>();
    cfg.max_iterations = n.value("max_iterations", 500);
    cfg.tolerance = n.value("tolerance", 1e-9);
    cfg.max_fit_samples = n.value("max_fit_samples", Eigen::Index{20000});
  }
  if (j.contains("forcing")) {
    const auto& f = j.at("forcing");
    if (f.contains("calibration"))
      cfg.forcing.calibration = {f.at("calibration").at("Omega").get<double>(),
                                 f.at("calibration").at("rho0").get<double>()};
    if (f.contains("amplitudes"))
      cfg.forcing.amplitudes = f.at("amplitudes").get<std::vector<double>>();
    if (f.contains("rho_grid")) {
      cfg.forcing.rho_min = f.at("rho_grid").at("min").get<double>();
      cfg.forcing.rho_max = f.at("rho_grid").at("max").get<double>();
      cfg.forcing.rho_count = f.at("rho_grid").at("count").get<int>();
    }
  }
  if (j.contains("outputs")) cfg.out_dir = j.at("outputs").value("dir", std::string("out"));
  if (j.contains("orderscan"))
    cfg.orderscan_orders = j.at("orderscan").at("orders").get<std::vector<int>>();
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    cfg.oracle_M = o.value("M", 7);
    cfg.oracle_delta = o.value("delta", 1e-8);
    cfg.compare_channel = o.value("channel", 0);
    cfg.threshold_linear = o.value("threshold_linear", 0.02);
    cfg.threshold_cubic = o.value("threshold_cubic", 0.02);
  }
  return cfg;
}

// --- data loading / generation -----------------------------------------------

namespace {

VectorField build_field(const SynthSpec& spec, std::optional<ModalSystem>& modal_out) {
  const auto& p = spec.params;
  if (spec.system == "stuart_landau")
    return stuart_landau(p.at("alpha0").get<double>(), p.at("beta").get<double>(),
                         p.at("gamma").get<double>(), p.at("omega0").get<double>());
  if (spec.system == "duffing")
    return duffing(p.value("damping", 1.0), p.value("stiffness", 1.0),
                   p.at("beta").get<double>(), p.value("f_amp", 0.0), p.value("f_omega", 1.0));
  if (spec.system == "modal_linear") {
    std::vector<std::complex<double>> modes;
    for (const auto& row : p.at("modes"))
      modes.emplace_back(row[0].get<double>(), row[1].get<double>());
    return modal_linear(modes);
  }
  if (spec.system == "modal" || spec.system == "slow_fast_poly") {
    std::vector<std::complex<double>> modes;
    for (const auto& row : p.at("modes"))
      modes.emplace_back(row[0].get<double>(), row[1].get<double>());
    ModalSystemBuilder builder(modes);
    if (p.contains("couplings"))
      for (const auto& c : p.at("couplings")) {
        Eigen::VectorXi expo(static_cast<Eigen::Index>(c.at("exponents").size()));
        for (Eigen::Index i = 0; i < expo.size(); ++i) expo[i] = c.at("exponents")[i].get<int>();
        builder.coupling(c.at("row").get<int>(), expo,
                         {c.at("coeff")[0].get<double>(), c.at("coeff")[1].get<double>()});
      }
    modal_out = builder.build();
    return modal_out->realified();
  }
  throw ArgumentError("unknown synthetic system: " + spec.system);
}

void add_noise(TimeSeries& series, double level, GaussianNoise& rng) {
  const double scale = level * series.values.cwiseAbs().maxCoeff();
  for (Eigen::Index c = 0; c < series.values.cols(); ++c)
    for (Eigen::Index r = 0; r < series.values.rows(); ++r)
      series.values(r, c) += scale * rng();
}

}  // namespace

LoadedData load_input_data(const PipelineConfig& cfg) {
  LoadedData data;
  try {
    for (const auto& path : cfg.train_csv) data.train.push_back(load_time_series_csv(path));
    for (const auto& path : cfg.test_csv) data.test.push_back(load_time_series_csv(path));

    if (cfg.synth) {
      const SynthSpec& spec = *cfg.synth;
      const VectorField field = build_field(spec, data.modal);

      std::vector<Eigen::VectorXd> ics = spec.state_ics;
      if (!spec.manifold_ics.empty()) {
        if (!data.modal)
          throw ArgumentError("on-manifold initial conditions need a modal system");
        const OracleModel seed_model =
            solve_autonomous_ssm(*data.modal, 1, spec.manifold_ic_order, cfg.oracle_delta);
        for (const auto& [rho, theta] : spec.manifold_ics) {
          Eigen::VectorXcd z(2);
          z[0] = std::polar(rho, theta);
          z[1] = std::conj(z[0]);
          ics.push_back((data.modal->T * seed_model.lift(z)).real());
        }
      }
      if (ics.size() != spec.roles.size())
        throw ArgumentError("synthetic input: one role per initial condition required");

      const PolynomialObservable observable =
          spec.observable ? *spec.observable : PolynomialObservable::identity(field.dimension);

      GaussianNoise rng(cfg.seed == 0 ? 1 : cfg.seed);
      for (size_t i = 0; i < ics.size(); ++i) {
        TimeSeries states = integrate_rk4(field, ics[i], 0.0, spec.tspan, spec.dt);
        if (spec.trim > 0.0) {
          const auto drop = static_cast<Eigen::Index>(std::llround(spec.trim / spec.dt));
          if (drop >= states.samples() - 2)
            throw ArgumentError("synthetic input: trim leaves too few samples");
          states.values = states.values.rightCols(states.samples() - drop).eval();
          states.t0 = 0.0;
        }
        TimeSeries observed = observable.observe(states);
        const bool is_train = spec.roles[i] == "train";
        const bool noisy = spec.noise_level > 0.0 &&
                           (spec.noise_roles == "all" ||
                            (spec.noise_roles == "train" && is_train) ||
                            (spec.noise_roles == "test" && !is_train));
        if (noisy) add_noise(observed, spec.noise_level, rng);
        if (is_train)
          data.train.push_back(std::move(observed));
        else if (spec.roles[i] == "test")
          data.test.push_back(std::move(observed));
        else
          throw ArgumentError("synthetic input: role must be train or test, got " + spec.roles[i]);
      }
    }
  } catch (const IoError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kExitIo, "input", e.what());
  }
  if (data.train.empty()) throw StageError(kExitIo, "input", "no training trajectories");
  return data;
}

// --- core fitting --------------------------------------------------------------

namespace {

int resolve_delay_blocks(const PipelineConfig& cfg, Eigen::Index channels,
                         std::vector<std::string>& warnings) {
  const int target = 2 * cfg.d + 1;
  int blocks;
  if (cfg.auto_embedding) {
    blocks = static_cast<int>((target + channels - 1) / channels);
  } else {
    blocks = cfg.p > 0 ? cfg.p : 1;
    if (blocks * channels < target)
      warnings.push_back("embedding dimension " + std::to_string(blocks * channels) +
                         " is below the generically sufficient " + std::to_string(target) +
                         "; proceeding (the bound is sufficient, not necessary)");
  }
  return blocks;
}

struct ReducedData {
  std::vector<Eigen::MatrixXd> states;  // per trajectory
  Eigen::MatrixXd all_states;
  Eigen::MatrixXd all_derivs;
};

ReducedData project_and_differentiate(const SsmChart& chart,
                                      const std::vector<EmbeddedTrajectory>& trajs) {
  ReducedData out;
  Eigen::Index total = 0;
  for (const auto& t : trajs) total += t.size();
  out.all_states.resize(chart.d, total);
  out.all_derivs.resize(chart.d, total);
  Eigen::Index at = 0;
  for (const auto& t : trajs) {
    Eigen::MatrixXd eta = chart.project(t.points);
    out.all_states.middleCols(at, t.size()) = eta;
    out.all_derivs.middleCols(at, t.size()) = finite_difference_derivative(eta, t.dt);
    out.states.push_back(std::move(eta));
    at += t.size();
  }
  return out;
}

// Linear block of a least-squares polynomial model of the reduced dynamics.
// Unlike the plain low-amplitude regression this estimator is unbiased
// against the low-order polynomial content of the field, which matters in
// the strongly anisotropic charts produced by short-lag delay embeddings.
Eigen::MatrixXd estimate_jacobian_poly(const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& targets, int order) {
  const int d = static_cast<int>(states.rows());
  MonomialBasis basis(d, 2, std::max(2, order));
  Eigen::MatrixXd feats(d + basis.count(), states.cols());
  feats.topRows(d) = states;
  feats.bottomRows(basis.count()) = basis.eval_batch<double>(states);

  const Eigen::MatrixXd gram = feats * feats.transpose();
  if (gram.diagonal().minCoeff() <= 0.0)
    throw SingularFitError("jacobian regression: degenerate feature matrix");
  const Eigen::VectorXd dinv = gram.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = dinv.asDiagonal() * gram * dinv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.eigenvalues().minCoeff() < 1e-13)
    throw SingularFitError("jacobian regression: feature matrix is rank deficient; "
                           "supply richer trajectories");
  const Eigen::MatrixXd rhs = dinv.asDiagonal() * (feats * targets.transpose());
  const Eigen::MatrixXd coef = (dinv.asDiagonal() * corr.ldlt().solve(rhs)).transpose();
  return coef.leftCols(d);
}

// Discrete-time Jacobian: polynomial regression of the one-step map over
// successor pairs, then the matrix logarithm of its linear block scaled by
// the sampling time.
Eigen::MatrixXd estimate_jacobian_map(const std::vector<Eigen::MatrixXd>& trajectories,
                                      double dt, int order) {
  Eigen::Index pairs = 0;
  for (const auto& t : trajectories) pairs += t.cols() - 1;
  if (pairs < 2) throw ArgumentError("map jacobian: need at least 2 successor pairs");
  const int d = static_cast<int>(trajectories.front().rows());
  Eigen::MatrixXd from(d, pairs), to(d, pairs);
  Eigen::Index at = 0;
  for (const auto& t : trajectories) {
    from.middleCols(at, t.cols() - 1) = t.leftCols(t.cols() - 1);
    to.middleCols(at, t.cols() - 1) = t.rightCols(t.cols() - 1);
    at += t.cols() - 1;
  }
  const Eigen::MatrixXd step = estimate_jacobian_poly(from, to, order);
  const Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(step.cast<std::complex<double>>());
  if (es.info() != Eigen::Success)
    throw SingularFitError("map jacobian: eigendecomposition failed");
  Eigen::VectorXcd log_eigs(d);
  for (int i = 0; i < d; ++i) {
    if (std::abs(es.eigenvalues()[i]) <= 0.0)
      throw SingularFitError("map jacobian: singular one-step map");
    log_eigs[i] = std::log(es.eigenvalues()[i]) / dt;
  }
  const Eigen::MatrixXcd A = es.eigenvectors() * log_eigs.asDiagonal() *
                             es.eigenvectors().inverse();
  if (A.imag().cwiseAbs().maxCoeff() > 1e-8 * (1.0 + A.real().cwiseAbs().maxCoeff()))
    throw SingularFitError("map jacobian: matrix logarithm is not real; sampling may "
                           "alias the fastest frequency");
  return A.real();
}

void subsample_columns(Eigen::MatrixXd& a, Eigen::MatrixXd& b, Eigen::Index max_cols) {
  if (a.cols() <= max_cols) return;
  const auto stride = static_cast<Eigen::Index>((a.cols() + max_cols - 1) / max_cols);
  const Eigen::Index kept = (a.cols() + stride - 1) / stride;
  Eigen::MatrixXd a2(a.rows(), kept), b2(b.rows(), kept);
  Eigen::Index at = 0;
  for (Eigen::Index j = 0; j < a.cols(); j += stride, ++at) {
    a2.col(at) = a.col(j);
    b2.col(at) = b.col(j);
  }
  a = std::move(a2);
  b = std::move(b2);
}

}  // namespace

double physical_amplitude_scale(const SsmChart& chart, const ReducedModel& model, int channel,
                                int mode) {
  if (channel < 0 || channel >= chart.p)
    throw ArgumentError("physical_amplitude_scale: channel out of range");
  const Eigen::MatrixXcd map = chart.V1.cast<std::complex<double>>() * model.linear.B;
  return 2.0 * std::abs(map(channel, 2 * mode));
}

double ChannelResponse::amplitude(double rho) const {
  const std::complex<double> first = m1 * rho + m3 * rho * rho * rho;
  return 2.0 * std::abs(first);
}

namespace {

// Coefficients over the monomial family of orders 1..3 in the normal-form
// variables, with degree-capped multiplication. Small and local: only the
// channel response composition needs it.
struct CubicPoly {
  const MonomialBasis* basis;
  Eigen::VectorXcd c;

  static CubicPoly zero(const MonomialBasis& basis) {
    return {&basis, Eigen::VectorXcd::Zero(basis.count())};
  }
};

CubicPoly cubic_mul(const CubicPoly& a, const CubicPoly& b) {
  CubicPoly out = CubicPoly::zero(*a.basis);
  const auto& basis = *a.basis;
  for (int i = 0; i < basis.count(); ++i) {
    if (a.c[i] == std::complex<double>(0.0)) continue;
    for (int j = 0; j < basis.count(); ++j) {
      if (b.c[j] == std::complex<double>(0.0)) continue;
      if (basis.order_of(i) + basis.order_of(j) > basis.max_order()) continue;
      const int target = basis.find(Eigen::VectorXi(basis.exponents().col(i) +
                                                    basis.exponents().col(j)));
      out.c[target] += a.c[i] * b.c[j];
    }
  }
  return out;
}

}  // namespace

ChannelResponse channel_response(const SsmChart& chart, const ReducedModel& model, int channel,
                                 int mode) {
  if (channel < 0 || channel >= chart.p)
    throw ArgumentError("channel_response: channel out of range");
  const int d = model.dim();
  if (mode < 0 || 2 * mode + 1 >= d) throw ArgumentError("channel_response: mode out of range");

  // Composition y_ch(z) = V1_ch . B (z + H m(z)) + V_ch . m_geo(eta(z)),
  // truncated at cubic order in the normal-form variables.
  MonomialBasis basis(d, 1, 3);
  const MonomialBasis& nf_basis = model.basis();

  // Components of z + H m(z) as cubic polynomials.
  std::vector<CubicPoly> hz(static_cast<size_t>(d), CubicPoly::zero(basis));
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXi unit = Eigen::VectorXi::Zero(d);
    unit[i] = 1;
    hz[static_cast<size_t>(i)].c[basis.find(unit)] = 1.0;
    for (int col = 0; col < nf_basis.count(); ++col) {
      if (nf_basis.order_of(col) > 3) break;
      if (model.H(i, col) == std::complex<double>(0.0)) continue;
      hz[static_cast<size_t>(i)].c[basis.find(Eigen::VectorXi(nf_basis.exponents().col(col)))] +=
          model.H(i, col);
    }
  }
  std::vector<CubicPoly> mixed(static_cast<size_t>(d), CubicPoly::zero(basis));
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k)
      mixed[static_cast<size_t>(i)].c += model.linear.B(i, k) * hz[static_cast<size_t>(k)].c;

  CubicPoly y_ch = CubicPoly::zero(basis);
  for (int i = 0; i < d; ++i) y_ch.c += chart.V1(channel, i) * mixed[static_cast<size_t>(i)].c;

  const MonomialBasis geo_basis = chart.basis();
  for (int col = 0; col < geo_basis.count(); ++col) {
    if (geo_basis.order_of(col) > 3) break;
    if (chart.V(channel, col) == 0.0) continue;
    CubicPoly term = CubicPoly::zero(basis);
    bool first = true;
    for (int i = 0; i < d; ++i)
      for (int e = 0; e < geo_basis.exponents()(i, col); ++e) {
        if (first) {
          term = mixed[static_cast<size_t>(i)];
          first = false;
        } else {
          term = cubic_mul(term, mixed[static_cast<size_t>(i)]);
        }
      }
    y_ch.c += chart.V(channel, col) * term.c;
  }

  ChannelResponse response;
  Eigen::VectorXi lin = Eigen::VectorXi::Zero(d);
  lin[2 * mode] = 1;
  response.m1 = y_ch.c[basis.find(lin)];
  Eigen::VectorXi res = Eigen::VectorXi::Zero(d);
  res[2 * mode] = 2;
  res[2 * mode + 1] = 1;
  response.m3 = y_ch.c[basis.find(res)];
  return response;
}

PolarModel physical_polar(const PolarModel& polar, const Eigen::VectorXcd& lambda,
                          const ChannelResponse& response, int mode) {
  if (std::abs(response.m1) == 0.0)
    throw ArgumentError("physical_polar: channel has no linear response on this mode");
  // z -> z + s z^2 zbar with s = m3/m1 maps the resonant cubic coefficient
  // c to c + 2 Re(lambda) s while zeroing the channel's cubic amplitude term.
  const std::complex<double> shift =
      2.0 * lambda[2 * mode].real() * (response.m3 / response.m1);
  PolarModel gauged = polar;
  auto& pm = gauged.modes.at(static_cast<size_t>(mode));
  if (pm.alpha.size() > 1) {
    pm.alpha[1] += shift.real();
    pm.omega[1] += shift.imag();
  }
  return gauged.rescaled_amplitude(response.kappa());
}

Eigen::MatrixXd reconstruct_trajectory(const SsmChart& chart, const ReducedModel& model,
                                       const Eigen::MatrixXd& embedded_points, double dt) {
  const Eigen::MatrixXd eta = chart.project(embedded_points);
  const Eigen::VectorXcd z0 = to_normal_coordinates(model, Eigen::VectorXd(eta.col(0)));
  const Eigen::MatrixXcd zs = integrate_normal_form(model, z0, eta.cols() - 1, dt);
  const Eigen::MatrixXd eta_hat = to_reduced_coordinates(model, zs).real();
  return chart.lift(eta_hat);
}

PipelineResult fit_pipeline(const PipelineConfig& cfg, const LoadedData& data) {
  PipelineResult result;

  // Stage 1: embed.
  std::vector<EmbeddedTrajectory> train_emb, test_emb;
  try {
    const Eigen::Index channels = data.train.front().channels();
    const int blocks = resolve_delay_blocks(cfg, channels, result.warnings);
    for (const auto& t : data.train) train_emb.push_back(delay_embed(t, blocks, cfg.shift));
    for (const auto& t : data.test) test_emb.push_back(delay_embed(t, blocks, cfg.shift));
  } catch (const std::exception& e) {
    throw StageError(kExitIo, "embedding", e.what());
  }

  // Stage 2: manifold geometry.
  try {
    FitSsmOptions opts;
    opts.d = cfg.d;
    opts.M = cfg.M;
    opts.ridge = cfg.ridge;
    opts.refine_iters = cfg.refine_iters;
    opts.fixed_projection = cfg.fixed_projection;
    result.chart = fit_ssm(train_emb, opts);
    for (const auto& w : result.chart.warnings) result.warnings.push_back(w);
  } catch (const std::exception& e) {
    throw StageError(kExitFit, "manifold fit", e.what());
  }

  // Stage 3: reduced dynamics.
  ReducedData train_red, test_red;
  try {
    train_red = project_and_differentiate(result.chart, train_emb);
    if (!test_emb.empty()) test_red = project_and_differentiate(result.chart, test_emb);

    LinearPart linear = [&] {
      if (cfg.nf_mode == "map")
        return linear_part_from_jacobian(
            estimate_jacobian_map(train_red.states, data.train.front().dt, cfg.N));
      if (cfg.jacobian_estimator == "cutoff") {
        double cutoff;
        if (cfg.cutoff_abs) {
          cutoff = *cfg.cutoff_abs;
        } else {
          double max_norm = 0.0;
          for (Eigen::Index j = 0; j < train_red.all_states.cols(); ++j)
            max_norm = std::max(max_norm, train_red.all_states.col(j).norm());
          cutoff = cfg.cutoff_fraction * max_norm;
        }
        return estimate_linear_part(train_red.all_states, train_red.all_derivs, cutoff);
      }
      if (cfg.jacobian_estimator != "poly")
        throw ArgumentError("normalform.jacobian must be 'poly' or 'cutoff', got " +
                            cfg.jacobian_estimator);
      return linear_part_from_jacobian(
          estimate_jacobian_poly(train_red.all_states, train_red.all_derivs, cfg.N));
    }();
    const ResonanceStructure structure = resonance_structure(linear, cfg.N, cfg.delta);

    NormalFormOptions nf_opts;
    nf_opts.max_iterations = cfg.max_iterations;
    nf_opts.tolerance = cfg.tolerance;
    if (cfg.nf_mode == "map") {
      result.model = fit_normal_form_map(train_red.states, data.train.front().dt, linear,
                                         structure, nf_opts);
    } else if (cfg.nf_mode == "derivative") {
      Eigen::MatrixXd fit_states = train_red.all_states;
      Eigen::MatrixXd fit_derivs = train_red.all_derivs;
      subsample_columns(fit_states, fit_derivs, cfg.max_fit_samples);
      result.model = fit_normal_form(fit_states, fit_derivs, linear, structure, nf_opts);
    } else {
      throw ArgumentError("normalform mode must be 'derivative' or 'map', got " + cfg.nf_mode);
    }
    if (result.model->marginal_linear_part)
      result.warnings.push_back("linear part has a near-zero decay rate (marginal mode)");

    result.polar = to_polar(*result.model);
    result.response = channel_response(result.chart, *result.model, 0);
    result.kappa = result.response.kappa();
    result.polar_physical =
        physical_polar(result.polar, result.model->linear.Lambda, result.response);
    result.conjugacy_train =
        conjugacy_error(*result.model, train_red.all_states, train_red.all_derivs) /
        static_cast<double>(train_red.all_states.cols());
    if (!test_emb.empty())
      result.conjugacy_test =
          conjugacy_error(*result.model, test_red.all_states, test_red.all_derivs) /
          static_cast<double>(test_red.all_states.cols());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kExitNormalForm, "normal form", e.what());
  }

  // Reconstruction metrics.
  try {
    for (const auto& t : train_emb) {
      const Eigen::MatrixXd rec = reconstruct_trajectory(result.chart, *result.model, t.points, t.dt);
      result.train_nmte.push_back(nmte(t.points, rec, largest_norm_point(t.points)));
    }
    for (const auto& t : test_emb) {
      const Eigen::MatrixXd rec = reconstruct_trajectory(result.chart, *result.model, t.points, t.dt);
      result.test_nmte.push_back(nmte(t.points, rec, largest_norm_point(t.points)));
    }
  } catch (const std::exception& e) {
    throw StageError(kExitAnalytics, "analytics", e.what());
  }

  result.embedded_train = std::move(train_emb);
  result.embedded_test = std::move(test_emb);
  return result;
}

// --- file outputs ----------------------------------------------------------------

namespace {

void write_frc_csv(const std::vector<FrcPoint>& points, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "Omega,rho0,psi0,stable,branch\n";
  for (const auto& pt : points)
    out << format_double(pt.Omega) << "," << format_double(pt.rho0) << ","
        << format_double(pt.psi0) << "," << (pt.stable ? 1 : 0) << ","
        << (pt.branch_sign > 0 ? "+" : "-") << "\n";
}

void write_backbone_csv(const std::vector<std::pair<double, double>>& curve,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "rho,omega\n";
  for (const auto& [rho, omega] : curve)
    out << format_double(rho) << "," << format_double(omega) << "\n";
}

Eigen::VectorXd resolve_rho_grid(const ForcingConfig& forcing, const PolarModel& polar) {
  double lo = forcing.rho_min, hi = forcing.rho_max;
  int count = forcing.rho_count;
  if (count <= 0) {
    const double rho_max = polar.modes.at(0).rho_max;
    lo = 0.02 * (rho_max > 0.0 ? rho_max : 1.0);
    hi = 1.05 * (rho_max > 0.0 ? rho_max : 1.0);
    count = 200;
  }
  return Eigen::VectorXd::LinSpaced(count, lo, hi);
}

std::vector<double> resolve_amplitudes(const ForcingConfig& forcing, const PolarModel& polar) {
  std::vector<double> amps = forcing.amplitudes;
  if (forcing.calibration)
    amps.insert(amps.begin(), calibrate_forcing(polar, forcing.calibration->first,
                                                forcing.calibration->second));
  return amps;
}

Json metrics_to_json(const PipelineConfig& cfg, const PipelineResult& result,
                     const std::vector<double>& amplitudes) {
  Json j;
  j["train_nmte"] = result.train_nmte;
  j["test_nmte"] = result.test_nmte;
  j["conjugacy_error_per_sample"] =
      Json{{"train", result.conjugacy_train}, {"test", result.conjugacy_test}};
  j["chart_residual"] = result.chart.residual;
  j["eigenvalues"] = to_json(result.model->linear.Lambda);
  j["polar"] = polar_to_json(result.polar);
  j["polar_physical"] = polar_to_json(result.polar_physical);
  j["kappa"] = result.kappa;
  j["channel_response"] = Json{{"m1", Json::array({result.response.m1.real(), result.response.m1.imag()})},
                               {"m3", Json::array({result.response.m3.real(), result.response.m3.imag()})}};
  j["forcing_amplitudes"] = amplitudes;
  {
    Json echo;
    if (cfg.forcing.calibration)
      echo["calibration"] = Json{{"Omega", cfg.forcing.calibration->first},
                                 {"rho0", cfg.forcing.calibration->second}};
    if (!cfg.forcing.amplitudes.empty()) echo["amplitudes"] = cfg.forcing.amplitudes;
    if (cfg.forcing.rho_count > 0)
      echo["rho_grid"] = Json{{"min", cfg.forcing.rho_min},
                              {"max", cfg.forcing.rho_max},
                              {"count", cfg.forcing.rho_count}};
    j["forcing"] = std::move(echo);
  }
  j["normal_form"] = Json{{"iterations", result.model->iterations},
                          {"converged", result.model->converged},
                          {"N", cfg.N},
                          {"M", cfg.M},
                          {"d", cfg.d}};
  j["warnings"] = result.warnings;
  return j;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  const LoadedData data = load_input_data(cfg);
  PipelineResult result = fit_pipeline(cfg, data);

  try {
    std::filesystem::create_directories(cfg.out_dir);
    write_json_file(chart_to_json(result.chart), cfg.out_dir + "/chart.json");
    write_json_file(model_to_json(*result.model), cfg.out_dir + "/model.json");

    std::vector<double> amplitudes;
    if (cfg.forcing.present()) {
      amplitudes = resolve_amplitudes(cfg.forcing, result.polar);
      const Eigen::VectorXd rho_grid = resolve_rho_grid(cfg.forcing, result.polar);
      for (size_t i = 0; i < amplitudes.size(); ++i) {
        const auto points = frc_sweep(result.polar, amplitudes[i], rho_grid);
        if (points.empty())
          result.warnings.push_back("FRC sweep at f=" + format_double(amplitudes[i]) +
                                    " produced no points (forcing below the response floor)");
        const std::string name = amplitudes.size() == 1
                                     ? cfg.out_dir + "/frc.csv"
                                     : cfg.out_dir + "/frc_" + std::to_string(i) + ".csv";
        write_frc_csv(points, name);
      }
      write_backbone_csv(backbone(result.polar, rho_grid), cfg.out_dir + "/backbone.csv");
    }
    write_json_file(metrics_to_json(cfg, result, amplitudes), cfg.out_dir + "/metrics.json");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kExitAnalytics, "analytics", e.what());
  }
  return result;
}

std::vector<OrderScanRow> run_orderscan(const PipelineConfig& cfg) {
  if (cfg.orderscan_orders.empty())
    throw StageError(kExitIo, "input", "orderscan requires a nonempty order list");
  std::vector<int> orders = cfg.orderscan_orders;
  for (size_t i = 1; i < orders.size(); ++i)
    if (orders[i] <= orders[i - 1])
      throw StageError(kExitIo, "input", "orderscan orders must be strictly increasing");

  const LoadedData data = load_input_data(cfg);

  PipelineConfig base = cfg;
  base.N = orders.front();
  PipelineResult first = fit_pipeline(base, data);
  const SsmChart& chart = first.chart;

  ReducedData train_red = project_and_differentiate(chart, first.embedded_train);
  ReducedData test_red;
  if (!first.embedded_test.empty())
    test_red = project_and_differentiate(chart, first.embedded_test);

  const LinearPart linear = first.model->linear;
  std::vector<OrderScanRow> rows;
  Eigen::MatrixXcd warm_h, warm_n;
  int warm_N = 0;

  for (const int N : orders) {
    try {
      const ResonanceStructure structure = resonance_structure(linear, N, cfg.delta);
      NormalFormOptions opts;
      opts.max_iterations = cfg.max_iterations;
      opts.tolerance = cfg.tolerance;
      if (warm_N > 0) {
        // Graded ordering makes the lower-order basis a prefix of the larger.
        Eigen::MatrixXcd h0 = Eigen::MatrixXcd::Zero(linear.dim(), structure.basis.count());
        Eigen::MatrixXcd n0 = h0;
        h0.leftCols(warm_h.cols()) = warm_h;
        n0.leftCols(warm_n.cols()) = warm_n;
        opts.initial = {h0, n0};
      }
      Eigen::MatrixXd fit_states = train_red.all_states;
      Eigen::MatrixXd fit_derivs = train_red.all_derivs;
      subsample_columns(fit_states, fit_derivs, cfg.max_fit_samples);
      const ReducedModel model = fit_normal_form(fit_states, fit_derivs, linear, structure, opts);
      warm_h = model.Hstar;
      warm_n = model.Ncoef;
      warm_N = N;

      OrderScanRow row;
      row.N = N;
      row.train_error = conjugacy_error(model, train_red.all_states, train_red.all_derivs) /
                        static_cast<double>(train_red.all_states.cols());
      row.test_error = test_red.all_states.cols() > 0
                           ? conjugacy_error(model, test_red.all_states, test_red.all_derivs) /
                                 static_cast<double>(test_red.all_states.cols())
                           : 0.0;
      rows.push_back(row);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(kExitNormalForm, "normal form (N=" + std::to_string(N) + ")", e.what());
    }
  }

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/orderscan.csv");
  if (!out) throw StageError(kExitAnalytics, "analytics", "cannot write orderscan.csv");
  out << "N,train_error,test_error\n";
  for (const auto& row : rows)
    out << row.N << "," << format_double(row.train_error) << ","
        << format_double(row.test_error) << "\n";
  return rows;
}

namespace {

// First-harmonic response of an observable channel through the oracle chain
// x = T w(z), truncated at cubic order.
ChannelResponse oracle_channel_response(const ModalSystem& system, const OracleModel& oracle,
                                        const PolynomialObservable& observable, int channel,
                                        int mode) {
  const int d = 2 * oracle.m;
  MonomialBasis basis(d, 1, 3);

  std::vector<CubicPoly> x(static_cast<size_t>(system.n), CubicPoly::zero(basis));
  for (int j = 1; j <= std::min(3, oracle.M); ++j) {
    const MonomialBasis order_basis = oracle.basis(j);
    const Eigen::MatrixXcd tw = system.T * oracle.W[static_cast<size_t>(j - 1)];
    for (int i = 0; i < system.n; ++i)
      for (int col = 0; col < order_basis.count(); ++col)
        x[static_cast<size_t>(i)].c[basis.find(Eigen::VectorXi(order_basis.exponents().col(col)))] +=
            tw(i, col);
  }

  CubicPoly y_ch = CubicPoly::zero(basis);
  MonomialBasis obs_basis(observable.input_dim, 1, observable.degree);
  for (int col = 0; col < obs_basis.count(); ++col) {
    if (obs_basis.order_of(col) > 3) break;
    if (observable.coeffs(channel, col) == 0.0) continue;
    CubicPoly term = CubicPoly::zero(basis);
    bool first = true;
    for (int i = 0; i < observable.input_dim; ++i)
      for (int e = 0; e < obs_basis.exponents()(i, col); ++e) {
        if (first) {
          term = x[static_cast<size_t>(i)];
          first = false;
        } else {
          term = cubic_mul(term, x[static_cast<size_t>(i)]);
        }
      }
    y_ch.c += observable.coeffs(channel, col) * term.c;
  }

  ChannelResponse response;
  Eigen::VectorXi lin = Eigen::VectorXi::Zero(d);
  lin[2 * mode] = 1;
  response.m1 = y_ch.c[basis.find(lin)];
  Eigen::VectorXi res = Eigen::VectorXi::Zero(d);
  res[2 * mode] = 2;
  res[2 * mode + 1] = 1;
  response.m3 = y_ch.c[basis.find(res)];
  return response;
}

}  // namespace

OracleComparison run_oracle_compare(const PipelineConfig& cfg) {
  const LoadedData data = load_input_data(cfg);
  if (!data.modal)
    throw StageError(kExitIo, "input", "oracle-compare requires a modal synthetic system");

  OracleComparison cmp;
  OracleModel oracle;
  try {
    oracle = solve_autonomous_ssm(*data.modal, cfg.d / 2, cfg.oracle_M, cfg.oracle_delta);
    cmp.oracle_residuals = invariance_residual(*data.modal, oracle);
  } catch (const std::exception& e) {
    throw StageError(kExitNormalForm, "oracle", e.what());
  }

  const PipelineResult fit = fit_pipeline(cfg, data);

  try {
    const PolynomialObservable observable =
        cfg.synth && cfg.synth->observable ? *cfg.synth->observable
                                           : PolynomialObservable::identity(data.modal->n);
    const ChannelResponse oracle_response =
        oracle_channel_response(*data.modal, oracle, observable, cfg.compare_channel, 0);
    cmp.kappa_data = fit.kappa;
    cmp.kappa_oracle = oracle_response.kappa();
    cmp.data_physical = fit.polar_physical;
    cmp.oracle_physical =
        physical_polar(to_polar(oracle), data.modal->Lambda.head(2 * oracle.m),
                       oracle_response);

    const auto& dm = cmp.data_physical.modes.at(0);
    const auto& om = cmp.oracle_physical.modes.at(0);
    // Relative errors with a floor so exactly-zero oracle coefficients
    // (linear systems) compare against the mode's frequency scale instead.
    const double floor = 1e-3 * std::abs(om.omega[0]);
    auto rel = [floor](double got, double want) {
      return std::abs(got - want) / std::max(std::abs(want), floor);
    };
    cmp.alpha0_rel = rel(dm.alpha[0], om.alpha[0]);
    cmp.omega0_rel = rel(dm.omega[0], om.omega[0]);
    cmp.alpha2_rel = dm.alpha.size() > 1 && om.alpha.size() > 1 ? rel(dm.alpha[1], om.alpha[1]) : 0.0;
    cmp.omega2_rel = dm.omega.size() > 1 && om.omega.size() > 1 ? rel(dm.omega[1], om.omega[1]) : 0.0;
    cmp.pass = cmp.alpha0_rel <= cfg.threshold_linear && cmp.omega0_rel <= cfg.threshold_linear &&
               cmp.alpha2_rel <= cfg.threshold_cubic && cmp.omega2_rel <= cfg.threshold_cubic;

    std::filesystem::create_directories(cfg.out_dir);
    Json j;
    j["pass"] = cmp.pass;
    j["thresholds"] =
        Json{{"linear", cfg.threshold_linear}, {"cubic", cfg.threshold_cubic}};
    j["relative_errors"] = Json{{"alpha0", cmp.alpha0_rel},
                                {"omega0", cmp.omega0_rel},
                                {"alpha_rho2", cmp.alpha2_rel},
                                {"omega_rho2", cmp.omega2_rel}};
    j["data_polar_physical"] = polar_to_json(cmp.data_physical);
    j["oracle_polar_physical"] = polar_to_json(cmp.oracle_physical);
    j["kappa"] = Json{{"data", cmp.kappa_data}, {"oracle", cmp.kappa_oracle}};
    j["oracle_invariance_residual"] = cmp.oracle_residuals;
    write_json_file(j, cfg.out_dir + "/comparison.json");
    write_json_file(oracle_model_to_json(oracle), cfg.out_dir + "/oracle_model.json");
    write_json_file(modal_system_to_json(*data.modal), cfg.out_dir + "/modal_system.json");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kExitAnalytics, "analytics", e.what());
  }
  return cmp;
}

void run_simulate(const PipelineConfig& cfg) {
  if (!cfg.synth) throw StageError(kExitIo, "input", "simulate requires a synth block");
  const LoadedData data = load_input_data(cfg);
  try {
    std::filesystem::create_directories(cfg.out_dir);
    for (size_t i = 0; i < data.train.size(); ++i)
      save_time_series_csv(data.train[i], cfg.out_dir + "/train_" + std::to_string(i) + ".csv");
    for (size_t i = 0; i < data.test.size(); ++i)
      save_time_series_csv(data.test[i], cfg.out_dir + "/test_" + std::to_string(i) + ".csv");
  } catch (const std::exception& e) {
    throw StageError(kExitIo, "output", e.what());
  }
}

void run_frc(const Json& config) {
  PipelineConfig cfg = parse_pipeline_config(config);
  if (!config.contains("model"))
    throw StageError(kExitIo, "input", "frc requires a 'model' path to a fitted model file");
  ReducedModel model = [&] {
    try {
      return model_from_json(read_json_file(config.at("model").get<std::string>()));
    } catch (const std::exception& e) {
      throw StageError(kExitIo, "input", e.what());
    }
  }();

  try {
    const PolarModel polar = to_polar(model);
    if (!cfg.forcing.present())
      throw ArgumentError("frc requires a forcing block (calibration or amplitudes)");
    const auto amplitudes = resolve_amplitudes(cfg.forcing, polar);
    const Eigen::VectorXd rho_grid = resolve_rho_grid(cfg.forcing, polar);
    std::filesystem::create_directories(cfg.out_dir);
    for (size_t i = 0; i < amplitudes.size(); ++i) {
      const auto points = frc_sweep(polar, amplitudes[i], rho_grid);
      const std::string name = amplitudes.size() == 1
                                   ? cfg.out_dir + "/frc.csv"
                                   : cfg.out_dir + "/frc_" + std::to_string(i) + ".csv";
      write_frc_csv(points, name);
    }
    write_backbone_csv(backbone(polar, rho_grid), cfg.out_dir + "/backbone.csv");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(kExitAnalytics, "analytics", e.what());
  }
}

}  // namespace ssmrom
