#pragma once

#include <Eigen/Core>
#include <string>

#include "ssmrom/errors.hpp"

namespace ssmrom {

// Uniformly sampled multichannel signal. One column per time instant,
// one row per observable channel.
struct TimeSeries {
  double t0 = 0.0;
  double dt = 0.0;
  Eigen::MatrixXd values;

  Eigen::Index channels() const { return values.rows(); }
  Eigen::Index samples() const { return values.cols(); }
  double time_at(Eigen::Index i) const { return t0 + dt * static_cast<double>(i); }

  // Throws ArgumentError unless dt > 0, at least 2 samples, all entries finite.
  void validate() const;
};

// Delay-embedded view of a TimeSeries. Column c stacks the samples at
// indices c, c + shift, ..., c + (p-1)*shift, channel-major within each
// delay block, so for a scalar signal row r of column c is sample c + r*shift.
// The embedded state is timestamped at its first sample.
struct EmbeddedTrajectory {
  double t0 = 0.0;
  double dt = 0.0;
  int p = 0;        // number of delay blocks
  int shift = 0;    // samples per embedding lag
  int channels = 0; // channels of the source series
  Eigen::MatrixXd points;

  Eigen::Index dim() const { return points.rows(); }
  Eigen::Index size() const { return points.cols(); }
};

EmbeddedTrajectory delay_embed(const TimeSeries& series, int p, int shift = 1);

// Sufficient embedding dimension for a d-dimensional manifold observed under
// ell-frequency forcing: 2(d+ell)+1, improved to 2d+1 for unforced data or
// for stroboscopic (Poincare-map) sampling of periodic forcing.
int min_embedding_dimension(int d, int ell, bool periodic_sampling);

// Second-order finite differences along columns: central at interior points,
// one-sided three-point stencils at the ends. Same shape as the input.
Eigen::MatrixXd finite_difference_derivative(const Eigen::MatrixXd& states, double dt);

// Normalized mean trajectory error between two equally shaped sample sets:
// mean over columns of ||reference - reconstruction|| divided by the norm
// of the normalizer vector.
double nmte(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& reconstruction,
            const Eigen::VectorXd& normalizer);

// Default normalizer: the data point (column) with the largest norm.
Eigen::VectorXd largest_norm_point(const Eigen::MatrixXd& data);

// CSV trajectory format: header "t,ch0,ch1,...", one row per sample.
// Loading validates a uniform timestep to 1e-6 relative tolerance.
TimeSeries load_time_series_csv(const std::string& path);
void save_time_series_csv(const TimeSeries& series, const std::string& path);

}  // namespace ssmrom
