#include "ssmrom/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace ssmrom {

void TimeSeries::validate() const {
  if (dt <= 0.0) throw ArgumentError("TimeSeries: dt must be positive");
  if (samples() < 2) throw ArgumentError("TimeSeries: need at least 2 samples");
  if (!values.allFinite()) throw ArgumentError("TimeSeries: non-finite entries");
}

EmbeddedTrajectory delay_embed(const TimeSeries& series, int p, int shift) {
  series.validate();
  if (p < 1) throw ArgumentError("delay_embed: p must be >= 1");
  if (shift < 1) throw ArgumentError("delay_embed: shift must be >= 1");

  const Eigen::Index n = series.samples();
  const Eigen::Index nch = series.channels();
  const Eigen::Index cols = n - static_cast<Eigen::Index>(p - 1) * shift;
  if (cols < 1)
    throw ArgumentError("delay_embed: series too short for p=" + std::to_string(p) +
                        ", shift=" + std::to_string(shift));

  EmbeddedTrajectory out;
  out.t0 = series.t0;
  out.dt = series.dt;
  out.p = p;
  out.shift = shift;
  out.channels = static_cast<int>(nch);
  out.points.resize(nch * p, cols);
  for (int k = 0; k < p; ++k)
    out.points.middleRows(k * nch, nch) =
        series.values.middleCols(static_cast<Eigen::Index>(k) * shift, cols);
  return out;
}

int min_embedding_dimension(int d, int ell, bool periodic_sampling) {
  if (d < 1) throw ArgumentError("min_embedding_dimension: d must be >= 1");
  if (ell < 0) throw ArgumentError("min_embedding_dimension: ell must be >= 0");
  if (ell == 0 || periodic_sampling) return 2 * d + 1;
  return 2 * (d + ell) + 1;
}

Eigen::MatrixXd finite_difference_derivative(const Eigen::MatrixXd& states, double dt) {
  if (states.cols() < 3)
    throw ArgumentError("finite_difference_derivative: need at least 3 columns");
  if (dt <= 0.0) throw ArgumentError("finite_difference_derivative: dt must be positive");

  const Eigen::Index n = states.cols();
  Eigen::MatrixXd deriv(states.rows(), n);
  deriv.col(0) = (-3.0 * states.col(0) + 4.0 * states.col(1) - states.col(2)) / (2.0 * dt);
  deriv.middleCols(1, n - 2) =
      (states.middleCols(2, n - 2) - states.middleCols(0, n - 2)) / (2.0 * dt);
  deriv.col(n - 1) =
      (3.0 * states.col(n - 1) - 4.0 * states.col(n - 2) + states.col(n - 3)) / (2.0 * dt);
  return deriv;
}

double nmte(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& reconstruction,
            const Eigen::VectorXd& normalizer) {
  if (reference.rows() != reconstruction.rows() || reference.cols() != reconstruction.cols())
    throw ArgumentError("nmte: shape mismatch between reference and reconstruction");
  if (normalizer.size() != reference.rows())
    throw ArgumentError("nmte: normalizer length does not match the number of channels");
  const double scale = normalizer.norm();
  if (scale == 0.0) throw ArgumentError("nmte: normalizer has zero norm");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < reference.cols(); ++j)
    acc += (reference.col(j) - reconstruction.col(j)).norm();
  return acc / (scale * static_cast<double>(reference.cols()));
}

Eigen::VectorXd largest_norm_point(const Eigen::MatrixXd& data) {
  if (data.cols() == 0) throw ArgumentError("largest_norm_point: empty data");
  Eigen::Index best = 0;
  data.colwise().squaredNorm().maxCoeff(&best);
  return data.col(best);
}

TimeSeries load_time_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trajectory file: " + path);
  // Header row "t,ch0,..." is required; count its fields.
  Eigen::Index ncols = 1 + static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  if (ncols < 2) throw IoError("trajectory file needs a time column and at least one channel: " + path);

  std::vector<double> flat;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    Eigen::Index got = 0;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (res.ec != std::errc())
        throw IoError("bad numeric field '" + field + "' in " + path);
      if (got == 0)
        times.push_back(v);
      else
        flat.push_back(v);
      ++got;
    }
    if (got != ncols)
      throw IoError("row with " + std::to_string(got) + " fields, expected " +
                    std::to_string(ncols) + " in " + path);
  }
  if (times.size() < 2) throw IoError("trajectory file needs at least 2 samples: " + path);

  const Eigen::Index nch = ncols - 1;
  const Eigen::Index n = static_cast<Eigen::Index>(times.size());
  TimeSeries out;
  out.t0 = times.front();
  out.dt = times[1] - times[0];
  if (out.dt <= 0.0) throw IoError("non-increasing time column in " + path);
  for (Eigen::Index i = 1; i < n; ++i) {
    const double step = times[i] - times[i - 1];
    if (std::abs(step - out.dt) > 1e-6 * std::abs(out.dt))
      throw IoError("non-uniform timestep at row " + std::to_string(i) + " in " + path);
  }
  out.values.resize(nch, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < nch; ++c) out.values(c, i) = flat[i * nch + c];
  out.validate();
  return out;
}

void save_time_series_csv(const TimeSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  out << "t";
  for (Eigen::Index c = 0; c < series.channels(); ++c) out << ",ch" << c;
  out << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < series.samples(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", series.time_at(i));
    out << buf;
    for (Eigen::Index c = 0; c < series.channels(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", series.values(c, i));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace ssmrom
