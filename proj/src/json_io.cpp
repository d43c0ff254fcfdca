#include "ssmrom/json_io.hpp"

#include <fstream>

namespace ssmrom {

Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Eigen::MatrixXcd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json to_json(const Eigen::VectorXcd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out.push_back(Json::array({v[i].real(), v[i].imag()}));
  return out;
}

Eigen::MatrixXd real_matrix_from_json(const Json& j) {
  if (!j.is_array()) throw IoError("expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw IoError("ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Eigen::MatrixXcd complex_matrix_from_json(const Json& j) {
  if (!j.is_array()) throw IoError("expected a complex matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw IoError("ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = std::complex<double>(j[r][c][0].get<double>(), j[r][c][1].get<double>());
  }
  return m;
}

Eigen::VectorXd real_vector_from_json(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Eigen::VectorXcd complex_vector_from_json(const Json& j) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = std::complex<double>(j[i][0].get<double>(), j[i][1].get<double>());
  return v;
}

Json chart_to_json(const SsmChart& chart) {
  Json j;
  j["p"] = chart.p;
  j["d"] = chart.d;
  j["M"] = chart.M;
  j["U1"] = to_json(chart.U1);
  j["V1"] = to_json(chart.V1);
  j["V"] = to_json(chart.V);
  j["ordering"] = "graded-lex";
  j["residual"] = chart.residual;
  return j;
}

SsmChart chart_from_json(const Json& j) {
  SsmChart chart;
  chart.p = j.at("p").get<int>();
  chart.d = j.at("d").get<int>();
  chart.M = j.at("M").get<int>();
  chart.U1 = real_matrix_from_json(j.at("U1"));
  chart.V1 = real_matrix_from_json(j.at("V1"));
  chart.V = real_matrix_from_json(j.at("V"));
  chart.residual = j.at("residual").get<double>();
  if (j.at("ordering").get<std::string>() != "graded-lex")
    throw IoError("chart file uses an unknown monomial ordering");
  return chart;
}

Json model_to_json(const ReducedModel& model) {
  Json j;
  j["Lambda"] = to_json(model.linear.Lambda);
  j["B"] = to_json(model.linear.B);
  j["N"] = model.structure.N;
  j["delta"] = model.structure.delta;
  Json s_entries = Json::array();
  for (const auto& [r, c] : model.structure.resonant_entries)
    s_entries.push_back(Json::array({r, c}));
  j["S"] = std::move(s_entries);
  j["Ncoef"] = to_json(model.Ncoef);
  j["Hstar"] = to_json(model.Hstar);
  j["H"] = to_json(model.H);
  try {
    const PolarModel polar = to_polar(model);
    Json alpha = Json::array(), omega = Json::array();
    for (const auto& mode : polar.modes) {
      alpha.push_back(mode.alpha);
      omega.push_back(mode.omega);
    }
    j["polar"] = Json{{"alpha_coeffs", std::move(alpha)}, {"omega_coeffs", std::move(omega)}};
  } catch (const UnsupportedStructureError&) {
    j["polar"] = nullptr;  // cross-mode resonant structure has no rho-only polar form
  }
  j["residuals"] =
      Json{{"conjugacy", model.conjugacy_residual}, {"iterations", model.iterations},
           {"converged", model.converged}};
  j["metadata"] = Json{{"jacobian", to_json(model.linear.jacobian)},
                       {"marginal_linear_part", model.marginal_linear_part},
                       {"training_rho_max", model.training_rho_max}};
  return j;
}

ReducedModel model_from_json(const Json& j) {
  LinearPart linear;
  linear.Lambda = complex_vector_from_json(j.at("Lambda"));
  linear.B = complex_matrix_from_json(j.at("B"));
  linear.jacobian = real_matrix_from_json(j.at("metadata").at("jacobian"));
  const int d = static_cast<int>(linear.Lambda.size());
  linear.partner.assign(static_cast<size_t>(d), 0);
  for (int i = 0; i < d; ++i) {
    if (linear.Lambda[i].imag() == 0.0) {
      linear.partner[static_cast<size_t>(i)] = i;
      continue;
    }
    for (int k = 0; k < d; ++k)
      if (k != i && linear.Lambda[k] == std::conj(linear.Lambda[i]) &&
          (k == i + 1 || k == i - 1)) {
        linear.partner[static_cast<size_t>(i)] = k;
        break;
      }
  }

  ResonanceStructure structure =
      resonance_structure(linear, j.at("N").get<int>(), j.at("delta").get<double>());
  // The stored resonant set must agree with the recomputed one.
  Json s_entries = Json::array();
  for (const auto& [r, c] : structure.resonant_entries) s_entries.push_back(Json::array({r, c}));
  if (s_entries != j.at("S")) throw IoError("model file: stored resonant set is inconsistent");

  ReducedModel model{std::move(linear), std::move(structure), complex_matrix_from_json(j.at("Ncoef")),
                     complex_matrix_from_json(j.at("Hstar")), complex_matrix_from_json(j.at("H")),
                     j.at("residuals").at("conjugacy").get<double>(),
                     j.at("residuals").at("iterations").get<int>(),
                     j.at("residuals").at("converged").get<bool>(),
                     j.at("metadata").at("marginal_linear_part").get<bool>(),
                     j.at("metadata").at("training_rho_max").get<std::vector<double>>()};
  return model;
}

Json polar_to_json(const PolarModel& polar) {
  Json alpha = Json::array(), omega = Json::array(), rho_max = Json::array();
  for (const auto& mode : polar.modes) {
    alpha.push_back(mode.alpha);
    omega.push_back(mode.omega);
    rho_max.push_back(mode.rho_max);
  }
  return Json{{"alpha_coeffs", std::move(alpha)},
              {"omega_coeffs", std::move(omega)},
              {"rho_max", std::move(rho_max)}};
}

PolarModel polar_from_json(const Json& j) {
  PolarModel polar;
  const auto& alpha = j.at("alpha_coeffs");
  const auto& omega = j.at("omega_coeffs");
  if (alpha.size() != omega.size()) throw IoError("polar block: coefficient list size mismatch");
  for (size_t m = 0; m < alpha.size(); ++m) {
    PolarMode mode;
    mode.alpha = alpha[m].get<std::vector<double>>();
    mode.omega = omega[m].get<std::vector<double>>();
    if (j.contains("rho_max")) mode.rho_max = j.at("rho_max")[m].get<double>();
    polar.modes.push_back(std::move(mode));
  }
  return polar;
}

Json modal_system_to_json(const ModalSystem& system) {
  Json j;
  j["n"] = system.n;
  j["Lambda"] = to_json(system.Lambda);
  j["partner"] = system.partner;
  Json couplings = Json::array();
  for (const auto& mat : system.G) couplings.push_back(to_json(mat));
  j["G"] = std::move(couplings);
  j["T"] = to_json(system.T);
  return j;
}

ModalSystem modal_system_from_json(const Json& j) {
  ModalSystem system;
  system.n = j.at("n").get<int>();
  system.Lambda = complex_vector_from_json(j.at("Lambda"));
  system.partner = j.at("partner").get<std::vector<int>>();
  for (const auto& mat : j.at("G")) system.G.push_back(complex_matrix_from_json(mat));
  system.T = complex_matrix_from_json(j.at("T"));
  system.validate();
  return system;
}

Json oracle_model_to_json(const OracleModel& model) {
  Json j;
  j["n"] = model.n;
  j["m"] = model.m;
  j["M"] = model.M;
  Json w = Json::array(), nf = Json::array();
  for (const auto& mat : model.W) w.push_back(to_json(mat));
  for (const auto& mat : model.N) nf.push_back(to_json(mat));
  j["W"] = std::move(w);
  j["N"] = std::move(nf);
  if (!model.harmonics.empty()) {
    Json harmonics = Json::array();
    for (const auto& h : model.harmonics)
      harmonics.push_back(Json{{"k", std::vector<int>(h.k.data(), h.k.data() + h.k.size())},
                               {"w_plus", to_json(h.w_plus)},
                               {"w_minus", to_json(h.w_minus)},
                               {"n_plus", to_json(h.n_plus)},
                               {"n_minus", to_json(h.n_minus)}});
    j["harmonics"] = std::move(harmonics);
    j["Omega"] = to_json(model.Omega);
  }
  return j;
}

OracleModel oracle_model_from_json(const Json& j) {
  OracleModel model;
  model.n = j.at("n").get<int>();
  model.m = j.at("m").get<int>();
  model.M = j.at("M").get<int>();
  for (const auto& mat : j.at("W")) model.W.push_back(complex_matrix_from_json(mat));
  for (const auto& mat : j.at("N")) model.N.push_back(complex_matrix_from_json(mat));
  if (j.contains("harmonics")) {
    for (const auto& h : j.at("harmonics")) {
      OracleModel::Harmonic harmonic;
      const auto k = h.at("k").get<std::vector<int>>();
      harmonic.k = Eigen::Map<const Eigen::VectorXi>(k.data(), static_cast<Eigen::Index>(k.size()));
      harmonic.w_plus = complex_vector_from_json(h.at("w_plus"));
      harmonic.w_minus = complex_vector_from_json(h.at("w_minus"));
      harmonic.n_plus = complex_vector_from_json(h.at("n_plus"));
      harmonic.n_minus = complex_vector_from_json(h.at("n_minus"));
      model.harmonics.push_back(std::move(harmonic));
    }
    model.Omega = real_vector_from_json(j.at("Omega"));
  }
  return model;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open JSON file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write JSON file: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed while writing " + path);
}

}  // namespace ssmrom
