#pragma once

#include <Eigen/Core>
#include <complex>
#include <string>

#include <json.hpp>

#include "ssmrom/forced_response.hpp"
#include "ssmrom/geometry.hpp"
#include "ssmrom/normal_form.hpp"
#include "ssmrom/oracle.hpp"

namespace ssmrom {

// Insertion-ordered documents keep output byte-stable across runs.
using Json = nlohmann::ordered_json;

// Complex numbers serialize as [re, im]; matrices as arrays of rows.
Json to_json(const Eigen::MatrixXd& m);
Json to_json(const Eigen::MatrixXcd& m);
Json to_json(const Eigen::VectorXd& v);
Json to_json(const Eigen::VectorXcd& v);

Eigen::MatrixXd real_matrix_from_json(const Json& j);
Eigen::MatrixXcd complex_matrix_from_json(const Json& j);
Eigen::VectorXd real_vector_from_json(const Json& j);
Eigen::VectorXcd complex_vector_from_json(const Json& j);

Json chart_to_json(const SsmChart& chart);
SsmChart chart_from_json(const Json& j);

Json model_to_json(const ReducedModel& model);
ReducedModel model_from_json(const Json& j);

Json polar_to_json(const PolarModel& polar);
PolarModel polar_from_json(const Json& j);

Json modal_system_to_json(const ModalSystem& system);
ModalSystem modal_system_from_json(const Json& j);

Json oracle_model_to_json(const OracleModel& model);
OracleModel oracle_model_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_json_file(const Json& j, const std::string& path);

}  // namespace ssmrom
