#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssmrom/geometry.hpp"
#include "ssmrom/json_io.hpp"
#include "ssmrom/normal_form.hpp"
#include "ssmrom/oracle.hpp"
#include "ssmrom/systems.hpp"
#include "ssmrom/trajectory.hpp"

namespace ssmrom {

// Failure annotated with the pipeline stage it occurred in; the CLI maps the
// stage to its exit code (1 I/O, 2 manifold fit, 3 normal form, 4 analytics).
class StageError : public std::runtime_error {
public:
  StageError(int exit_code, std::string stage, const std::string& msg)
      : std::runtime_error(stage + ": " + msg), exit_code(exit_code), stage(std::move(stage)) {}
  int exit_code;
  std::string stage;
};

struct SynthSpec {
  std::string system;  // stuart_landau | duffing | modal_linear | modal
  Json params;
  std::optional<PolynomialObservable> observable;  // identity when absent
  std::vector<Eigen::VectorXd> state_ics;
  std::vector<std::pair<double, double>> manifold_ics;  // (rho, theta); modal systems only
  std::vector<std::string> roles;                       // train | test, one per IC
  double tspan = 0.0;
  double dt = 0.0;
  double trim = 0.0;
  double noise_level = 0.0;
  std::string noise_roles = "all";  // all | train | test
  int manifold_ic_order = 7;        // expansion order for on-manifold seeding
};

struct ForcingConfig {
  std::optional<std::pair<double, double>> calibration;  // (Omega, rho0)
  std::vector<double> amplitudes;                        // explicit f values
  double rho_min = 0.0, rho_max = 0.0;
  int rho_count = 0;
  bool present() const { return calibration.has_value() || !amplitudes.empty(); }
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::vector<std::string> train_csv, test_csv;
  std::optional<SynthSpec> synth;

  bool auto_embedding = true;
  int p = 0;      // delay blocks when auto_embedding is off
  int shift = 1;

  int d = 2;
  int M = 3;
  double ridge = 0.0;
  int refine_iters = 0;
  std::optional<Eigen::MatrixXd> fixed_projection;

  int N = 3;
  double delta = 1e-8;
  std::string nf_mode = "derivative";  // derivative | map
  std::string jacobian_estimator = "poly";  // poly | cutoff
  double cutoff_fraction = 0.15;
  std::optional<double> cutoff_abs;
  int max_iterations = 500;
  double tolerance = 1e-9;
  Eigen::Index max_fit_samples = 20000;

  ForcingConfig forcing;
  std::string out_dir = "out";
  std::vector<int> orderscan_orders;

  int oracle_M = 7;
  double oracle_delta = 1e-8;
  int compare_channel = 0;
  double threshold_linear = 0.02;
  double threshold_cubic = 0.02;
  bool verbose = false;
};

PipelineConfig parse_pipeline_config(const Json& j);

struct LoadedData {
  std::vector<TimeSeries> train, test;
  std::optional<ModalSystem> modal;  // populated for modal synthetic systems
};

LoadedData load_input_data(const PipelineConfig& cfg);

// First-harmonic response of one observable channel along a mode's circles
// z_j = rho e^{i theta}: channel ~ 2 Re(m1 rho e^{i th} + m3 rho^3 e^{i th}) + other
// harmonics. m3/m1 carries the resonant cubic content of the chart, which the
// extended normal form cannot distinguish from reduced-dynamics coefficients.
struct ChannelResponse {
  std::complex<double> m1{0.0, 0.0};
  std::complex<double> m3{0.0, 0.0};

  double kappa() const { return 2.0 * std::abs(m1); }
  // First-harmonic observable amplitude at model amplitude rho.
  double amplitude(double rho) const;
};

struct PipelineResult {
  SsmChart chart;
  std::optional<ReducedModel> model;
  PolarModel polar;      // coefficients in model (reduced-coordinate) units
  PolarModel polar_physical;  // observable-amplitude gauge, channel-0 units
  ChannelResponse response;   // channel-0 response of the fitted chain
  double kappa = 1.0;    // observable amplitude of channel 0 per unit rho
  std::vector<double> train_nmte, test_nmte;
  double conjugacy_train = 0.0, conjugacy_test = 0.0;  // per-sample means
  std::vector<std::string> warnings;
  std::vector<EmbeddedTrajectory> embedded_train, embedded_test;
};

// Stages 1-3 (embed, manifold, reduced dynamics) plus reconstruction metrics.
PipelineResult fit_pipeline(const PipelineConfig& cfg, const LoadedData& data);

// Full `pipeline` command: fit + analytics + files (chart.json, model.json,
// metrics.json, frc*.csv, backbone.csv) under cfg.out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// Model-based reconstruction of an embedded trajectory from its first sample.
Eigen::MatrixXd reconstruct_trajectory(const SsmChart& chart, const ReducedModel& model,
                                       const Eigen::MatrixXd& embedded_points, double dt);

// Observable amplitude of one unit of rho for the given mode, at the given
// embedded channel: the leading-order gain of channel `ch` under z -> y.
double physical_amplitude_scale(const SsmChart& chart, const ReducedModel& model, int channel,
                                int mode = 0);

// First-harmonic response (m1, m3) of an embedded channel through the full
// fitted chain y = lift(h(z)).
ChannelResponse channel_response(const SsmChart& chart, const ReducedModel& model, int channel,
                                 int mode = 0);

// Polar model in the observable-amplitude gauge: the resonant cubic
// reparametrization z -> z + (m3/m1) z^2 zbar makes the channel's
// first-harmonic amplitude map linear through cubic order, shifting each
// rho^2 coefficient by 2 Re/Im(lambda m3/m1); the result is then rescaled to
// channel-amplitude units. This removes the chart-gauge ambiguity of the
// extended normal form, making coefficients comparable across charts.
PolarModel physical_polar(const PolarModel& polar, const Eigen::VectorXcd& lambda,
                          const ChannelResponse& response, int mode = 0);

struct OrderScanRow {
  int N = 0;
  double train_error = 0.0;  // conjugacy objective per sample
  double test_error = 0.0;
};

// Refits the normal form over cfg.orderscan_orders (warm-started, so training
// error is non-increasing) and writes orderscan.csv.
std::vector<OrderScanRow> run_orderscan(const PipelineConfig& cfg);

struct OracleComparison {
  bool pass = false;
  double kappa_data = 1.0, kappa_oracle = 1.0;
  PolarModel data_physical, oracle_physical;  // both in observable-amplitude units
  double alpha0_rel = 0.0, omega0_rel = 0.0;
  double alpha2_rel = 0.0, omega2_rel = 0.0;  // rho^2 coefficients
  std::vector<double> oracle_residuals;       // invariance residual per order
};

// Equation-driven vs data-driven cross-validation on a modal synthetic system;
// writes comparison.json.
OracleComparison run_oracle_compare(const PipelineConfig& cfg);

// Data generation only: integrates the synthetic system and writes
// train_k.csv / test_k.csv under cfg.out_dir.
void run_simulate(const PipelineConfig& cfg);

// FRC + backbone from a stored model file (the `frc` command).
void run_frc(const Json& config);

}  // namespace ssmrom
