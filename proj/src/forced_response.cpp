#include "ssmrom/forced_response.hpp"

#include <cmath>

namespace ssmrom {

namespace {

double poly_in_rho2(const std::vector<double>& coeffs, double rho) {
  const double r2 = rho * rho;
  double acc = 0.0;
  for (size_t k = coeffs.size(); k-- > 0;) acc = acc * r2 + coeffs[k];
  return acc;
}

double dpoly_drho(const std::vector<double>& coeffs, double rho) {
  // d/drho sum c_k rho^{2k} = sum 2k c_k rho^{2k-1}
  double acc = 0.0;
  const double r2 = rho * rho;
  for (size_t k = coeffs.size(); k-- > 1;)
    acc = acc * r2 + 2.0 * static_cast<double>(k) * coeffs[k];
  return acc * rho;
}

constexpr double kAmplitudeGuard = 1e-12;
constexpr double kMarginalRealPart = 1e-10;

}  // namespace

double PolarModel::alpha_at(int mode, double rho) const {
  return poly_in_rho2(modes.at(static_cast<size_t>(mode)).alpha, rho);
}
double PolarModel::omega_at(int mode, double rho) const {
  return poly_in_rho2(modes.at(static_cast<size_t>(mode)).omega, rho);
}
double PolarModel::dalpha_drho(int mode, double rho) const {
  return dpoly_drho(modes.at(static_cast<size_t>(mode)).alpha, rho);
}
double PolarModel::domega_drho(int mode, double rho) const {
  return dpoly_drho(modes.at(static_cast<size_t>(mode)).omega, rho);
}

PolarModel PolarModel::rescaled_amplitude(double kappa) const {
  if (kappa <= 0.0) throw ArgumentError("PolarModel::rescaled_amplitude: kappa must be positive");
  PolarModel out = *this;
  for (auto& mode : out.modes) {
    double factor = 1.0;
    for (size_t k = 1; k < mode.alpha.size(); ++k) {
      factor /= kappa * kappa;
      mode.alpha[k] *= factor;
      mode.omega[k] *= factor;
    }
    mode.rho_max *= kappa;
  }
  return out;
}

void ForcingSpec::validate(int modes) const {
  for (const auto& h : harmonics) {
    if (h.mode < 0 || h.mode >= modes)
      throw ArgumentError("ForcingSpec: harmonic references mode " + std::to_string(h.mode));
    if (h.amplitude < 0.0) throw ArgumentError("ForcingSpec: negative amplitude");
    if (h.k.size() != Omega.size())
      throw ArgumentError("ForcingSpec: harmonic index length does not match Omega");
    if (h.sign != +1 && h.sign != -1) throw ArgumentError("ForcingSpec: sign must be +/-1");
  }
  // K+ and K- must be disjoint per mode.
  for (size_t a = 0; a < harmonics.size(); ++a)
    for (size_t b = a + 1; b < harmonics.size(); ++b)
      if (harmonics[a].mode == harmonics[b].mode && harmonics[a].sign != harmonics[b].sign &&
          harmonics[a].k == harmonics[b].k)
        throw ArgumentError("ForcingSpec: the same harmonic index appears in both K+ and K-");
}

std::vector<FrcPoint> frc_sweep(const PolarModel& polar, double f,
                                const Eigen::VectorXd& rho_grid) {
  if (polar.mode_count() != 1)
    throw UnsupportedStructureError("frc_sweep: closed-form FRC requires a single-mode model; "
                                    "use simulate_polar for coupled modes");
  if (f <= 0.0) throw ArgumentError("frc_sweep: forcing amplitude must be positive");
  if (rho_grid.size() == 0) throw ArgumentError("frc_sweep: empty amplitude grid");
  for (Eigen::Index i = 0; i < rho_grid.size(); ++i) {
    if (rho_grid[i] <= 0.0) throw ArgumentError("frc_sweep: amplitudes must be positive");
    if (i > 0 && rho_grid[i] <= rho_grid[i - 1])
      throw ArgumentError("frc_sweep: amplitude grid must be ascending");
  }

  std::vector<FrcPoint> points;
  for (Eigen::Index i = 0; i < rho_grid.size(); ++i) {
    const double rho = rho_grid[i];
    const double alpha = polar.alpha_at(0, rho);
    const double omega = polar.omega_at(0, rho);
    const double radicand = f * f / (rho * rho) - alpha * alpha;
    if (radicand < 0.0) continue;  // outside the response region
    const double root = std::sqrt(radicand);
    for (const int sign : {+1, -1}) {
      FrcPoint pt;
      pt.rho0 = rho;
      pt.branch_sign = sign;
      pt.Omega = omega + sign * root;
      // Phase from the fixed-point equations: f sin(psi) = -alpha rho,
      // f cos(psi) = (Omega - omega) rho; atan2 keeps the branch right.
      pt.psi0 = std::atan2(-alpha * rho / f, (pt.Omega - omega) * rho / f);
      pt.stable = frc_stability(polar, f, pt);
      points.push_back(pt);
      if (root == 0.0) break;  // branches coincide at the fold
    }
  }
  return points;
}

bool frc_stability(const PolarModel& polar, double f, FrcPoint& point) {
  const double rho = point.rho0;
  const double alpha = polar.alpha_at(0, rho);
  const double sin_psi = std::sin(point.psi0);
  const double cos_psi = std::cos(point.psi0);

  Eigen::Matrix2d jac;
  jac(0, 0) = polar.dalpha_drho(0, rho) * rho + alpha;
  jac(0, 1) = f * cos_psi;
  jac(1, 0) = polar.domega_drho(0, rho) - f * cos_psi / (rho * rho);
  jac(1, 1) = -f * sin_psi / rho;

  const double tr = jac(0, 0) + jac(1, 1);
  const double det = jac(0, 0) * jac(1, 1) - jac(0, 1) * jac(1, 0);
  const double disc = tr * tr - 4.0 * det;
  double max_re;
  if (disc >= 0.0)
    max_re = 0.5 * (tr + std::sqrt(disc));
  else
    max_re = 0.5 * tr;

  point.growth_rate = max_re;
  point.marginal = std::abs(max_re) < kMarginalRealPart;
  point.stable = max_re < -kMarginalRealPart;  // marginal counts as unstable
  return point.stable;
}

std::vector<std::pair<double, double>> backbone(const PolarModel& polar,
                                                const Eigen::VectorXd& rho_grid) {
  if (polar.mode_count() < 1) throw ArgumentError("backbone: empty model");
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<size_t>(rho_grid.size()));
  for (Eigen::Index i = 0; i < rho_grid.size(); ++i)
    out.emplace_back(rho_grid[i], polar.omega_at(0, rho_grid[i]));
  return out;
}

double calibrate_forcing(const PolarModel& polar, double Omega, double rho0_measured) {
  if (rho0_measured <= 0.0)
    throw ArgumentError("calibrate_forcing: measured amplitude must be positive");
  const double alpha = polar.alpha_at(0, rho0_measured);
  const double omega = polar.omega_at(0, rho0_measured);
  return rho0_measured * std::hypot(Omega - omega, alpha);
}

PolarSimResult simulate_polar(const PolarModel& polar, const ForcingSpec& forcing,
                              const Eigen::VectorXd& rho0, const Eigen::VectorXd& theta0,
                              double t0, double t_end, double dt) {
  const int m = polar.mode_count();
  forcing.validate(m);
  if (rho0.size() != m || theta0.size() != m)
    throw ArgumentError("simulate_polar: initial condition size mismatch");
  if (dt <= 0.0 || t_end <= t0) throw ArgumentError("simulate_polar: bad time span");

  // dt must resolve the fastest angular rate present.
  double fastest = 0.0;
  for (int j = 0; j < m; ++j) fastest = std::max(fastest, std::abs(polar.omega_at(j, 0.0)));
  for (const auto& h : forcing.harmonics)
    fastest = std::max(fastest, std::abs(h.k.cast<double>().dot(forcing.Omega)));
  if (dt * fastest >= 0.5)
    throw ArgumentError("simulate_polar: dt does not resolve the fastest frequency "
                        "(need dt * max rate < 0.5)");

  PolarSimResult result;
  const auto steps = static_cast<Eigen::Index>(std::llround((t_end - t0) / dt));
  result.trajectory.t0 = t0;
  result.trajectory.dt = dt;
  result.trajectory.values.resize(2 * m, steps + 1);

  Eigen::VectorXd state(2 * m);
  state.head(m) = rho0;
  state.tail(m) = theta0;
  result.trajectory.values.col(0) = state;

  auto rhs = [&](const Eigen::VectorXd& s, double t) {
    Eigen::VectorXd ds(2 * m);
    for (int j = 0; j < m; ++j) {
      const double rho = std::max(s[j], kAmplitudeGuard);
      ds[j] = polar.alpha_at(j, rho) * rho;
      ds[m + j] = polar.omega_at(j, rho);
    }
    for (const auto& h : forcing.harmonics) {
      const double carrier = h.k.cast<double>().dot(forcing.Omega) * t + h.phase;
      const double rho = std::max(s[h.mode], kAmplitudeGuard);
      const double angle = carrier - h.sign * s[m + h.mode];
      ds[h.mode] -= h.amplitude * std::sin(angle);
      ds[m + h.mode] += h.amplitude / rho * std::cos(angle);
    }
    return ds;
  };

  for (Eigen::Index i = 0; i < steps; ++i) {
    const double t = t0 + dt * static_cast<double>(i);
    const Eigen::VectorXd k1 = rhs(state, t);
    const Eigen::VectorXd k2 = rhs(state + 0.5 * dt * k1, t + 0.5 * dt);
    const Eigen::VectorXd k3 = rhs(state + 0.5 * dt * k2, t + 0.5 * dt);
    const Eigen::VectorXd k4 = rhs(state + dt * k3, t + dt);
    state += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    for (int j = 0; j < m; ++j) {
      if (state[j] < kAmplitudeGuard) {
        state[j] = kAmplitudeGuard;
        if (!result.hit_amplitude_guard) {
          result.hit_amplitude_guard = true;
          result.guard_time = t + dt;
        }
      }
    }
    result.trajectory.values.col(i + 1) = state;
  }
  return result;
}

namespace {

// Enumerates canonical half-lattice representatives: |k|_1 <= kmax, k != 0,
// first nonzero component positive. Each +/- pair of the integer lattice is
// visited once; the sign conditions sort it into K+ or K-.
void enumerate_half_lattice(int ell, int kmax, Eigen::VectorXi& k, int pos, int budget,
                            std::vector<Eigen::VectorXi>& out) {
  if (pos == ell) {
    for (int i = 0; i < ell; ++i) {
      if (k[i] > 0) {
        out.push_back(k);
        return;
      }
      if (k[i] < 0) return;
    }
    return;  // all zero
  }
  for (int v = -budget; v <= budget; ++v) {
    k[pos] = v;
    enumerate_half_lattice(ell, kmax, k, pos + 1, budget - std::abs(v), out);
  }
  k[pos] = 0;
}

}  // namespace

std::vector<ResonantHarmonics> resonant_harmonics(const PolarModel& polar,
                                                  const Eigen::VectorXd& Omega, int kmax,
                                                  double delta) {
  if (kmax < 1) throw ArgumentError("resonant_harmonics: kmax must be >= 1");
  if (delta < 0.0) throw ArgumentError("resonant_harmonics: delta must be >= 0");
  const int ell = static_cast<int>(Omega.size());
  std::vector<Eigen::VectorXi> lattice;
  Eigen::VectorXi k = Eigen::VectorXi::Zero(ell);
  enumerate_half_lattice(ell, kmax, k, 0, kmax, lattice);

  std::vector<ResonantHarmonics> out(static_cast<size_t>(polar.mode_count()));
  for (int j = 0; j < polar.mode_count(); ++j) {
    const double omega0 = polar.omega_at(j, 0.0);
    for (const auto& kvec : lattice) {
      const double dot = kvec.cast<double>().dot(Omega);
      if (std::abs(omega0 - dot) <= delta) out[static_cast<size_t>(j)].k_plus.push_back(kvec);
      if (std::abs(omega0 + dot) <= delta) out[static_cast<size_t>(j)].k_minus.push_back(kvec);
    }
  }
  return out;
}

}  // namespace ssmrom
