// Copyright 2026 The apsbo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "apsbo/oracle.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "apsbo/csv.hpp"
#include "apsbo/error.hpp"

namespace apsbo::oracle {

void SurrogateNet::validate() const {
  if (hidden_weights.rows() != hidden_bias.size() ||
      output_weights.cols() != hidden_weights.rows() ||
      output_weights.rows() != output_bias.size()) {
    throw InvalidArgument("surrogate net: inconsistent layer shapes");
  }
  if (output_bias.size() != 2) {
    throw InvalidArgument("surrogate net: expected 2 outputs");
  }
}

SurrogateNet SurrogateNet::zeros(Eigen::Index inputs, Eigen::Index hidden,
                                 Eigen::Index outputs) {
  return {gp::Matrix::Zero(hidden, inputs), gp::Vector::Zero(hidden),
          gp::Matrix::Zero(outputs, hidden), gp::Vector::Zero(outputs)};
}

gp::Vector forward(const SurrogateNet& net, const gp::VectorRef& x) {
  if (x.size() != net.hidden_weights.cols()) {
    throw InvalidArgument("forward: expected " +
                          std::to_string(net.hidden_weights.cols()) +
                          " inputs, got " + std::to_string(x.size()));
  }
  const gp::Vector h =
      (net.hidden_weights * x + net.hidden_bias).array().tanh().matrix();
  return net.output_weights * h + net.output_bias;
}

NetOutputs forward(const SurrogateNet& net, const InputVector& x) {
  const gp::Vector y = forward(net, x.flatten());
  return {y[0], y[1]};
}

double VoltageTruth::evaluate(const ControllableInputs& x, Powder powder) const {
  const auto a = x.to_array();
  double v = intercept;
  for (std::size_t i = 0; i < kControllableDim; ++i) v += slopes[i] * a[i];
  if (powder == Powder::kB) v += powder_slope;
  return v;
}

void NoiseSpec::validate() const {
  if (microhardness_sd < 0 || porosity_sd < 0) {
    throw InvalidArgument("noise standard deviations must be >= 0");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> row_major(const gp::Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

gp::Matrix from_row_major(const std::vector<double>& v, Eigen::Index rows,
                          Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw ValidationError("weight file: array size does not match shape");
  }
  gp::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return m;
}

gp::Vector to_vec(const std::vector<double>& v) {
  return Eigen::Map<const gp::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const gp::Vector& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace

nlohmann::json to_json(const OracleData& data) {
  const SurrogateNet& net = data.net;
  nlohmann::json doc;
  doc["format_version"] = kWeightFormatVersion;
  doc["description"] = data.description;
  doc["activation"] = "tanh";
  doc["shapes"] = {{"input", net.hidden_weights.cols()},
                   {"hidden", net.hidden_weights.rows()},
                   {"output", net.output_weights.rows()}};
  std::vector<std::string> names(kControllableNames.begin(), kControllableNames.end());
  names.emplace_back("powder");
  names.emplace_back("voltage");
  doc["input_names"] = names;
  doc["output_names"] = {"microhardness_HV", "porosity_pct"};
  doc["hidden_weights"] = row_major(net.hidden_weights);
  doc["hidden_bias"] = to_std(net.hidden_bias);
  doc["output_weights"] = row_major(net.output_weights);
  doc["output_bias"] = to_std(net.output_bias);
  nlohmann::json slopes;
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    slopes[std::string(kControllableNames[i])] = data.voltage.slopes[i];
  }
  doc["voltage_truth"] = {{"intercept", data.voltage.intercept},
                          {"slopes", slopes},
                          {"powder_B", data.voltage.powder_slope}};
  doc["self_test"] = {
      {"input", to_std(data.self_test.input.flatten())},
      {"output", {data.self_test.output.microhardness, data.self_test.output.porosity}}};
  doc["reachability"] = {
      {"voltage_offset", data.reachability.voltage_offset},
      {"candidate_count", data.reachability.candidate_count},
      {"candidate_seed", data.reachability.candidate_seed},
      {"feasible_count", data.reachability.feasible_count},
      {"min_feasible_cost", data.reachability.min_feasible_cost}};
  return doc;
}

OracleData oracle_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version > kWeightFormatVersion) {
      throw MigrationRequired("weight file format version " + std::to_string(version) +
                              " is newer than supported version " +
                              std::to_string(kWeightFormatVersion));
    }
    if (doc.at("activation") != "tanh") {
      throw ValidationError("weight file: unsupported activation");
    }
    const auto in = doc.at("shapes").at("input").get<Eigen::Index>();
    const auto hid = doc.at("shapes").at("hidden").get<Eigen::Index>();
    const auto out = doc.at("shapes").at("output").get<Eigen::Index>();
    OracleData d;
    d.description = doc.value("description", "");
    d.net.hidden_weights = from_row_major(doc.at("hidden_weights"), hid, in);
    d.net.hidden_bias = to_vec(doc.at("hidden_bias"));
    d.net.output_weights = from_row_major(doc.at("output_weights"), out, hid);
    d.net.output_bias = to_vec(doc.at("output_bias"));
    d.net.validate();
    const auto& vt = doc.at("voltage_truth");
    d.voltage.intercept = vt.at("intercept").get<double>();
    for (std::size_t i = 0; i < kControllableDim; ++i) {
      d.voltage.slopes[i] = vt.at("slopes").at(std::string(kControllableNames[i])).get<double>();
    }
    d.voltage.powder_slope = vt.at("powder_B").get<double>();
    const auto st_in = doc.at("self_test").at("input").get<std::vector<double>>();
    d.self_test.input = InputVector::from_flat(to_vec(st_in));
    const auto st_out = doc.at("self_test").at("output").get<std::vector<double>>();
    if (st_out.size() != 2) throw ValidationError("weight file: bad self-test output");
    d.self_test.output = {st_out[0], st_out[1]};
    const auto& r = doc.at("reachability");
    d.reachability.voltage_offset = r.at("voltage_offset").get<double>();
    d.reachability.candidate_count = r.at("candidate_count").get<std::size_t>();
    d.reachability.candidate_seed = r.at("candidate_seed").get<std::uint64_t>();
    d.reachability.feasible_count = r.at("feasible_count").get<std::size_t>();
    d.reachability.min_feasible_cost = r.at("min_feasible_cost").get<double>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("weight file: ") + e.what());
  }
}

OracleData load_oracle(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open weight file " + path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("weight file " + path.string() + ": " + e.what());
  }
  OracleData d = oracle_from_json(doc);
  if (self_test_error(d) > 1e-10) {
    throw ValidationError("weight file " + path.string() + " failed its self-test");
  }
  return d;
}

void save_oracle(const OracleData& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write weight file " + path.string());
  os << to_json(data).dump(2) << '\n';
}

double self_test_error(const OracleData& data) {
  const NetOutputs y = forward(data.net, data.self_test.input);
  return std::max(std::abs(y.microhardness - data.self_test.output.microhardness),
                  std::abs(y.porosity - data.self_test.output.porosity));
}

std::vector<DesignPoint> parse_design_csv(std::istream& is) {
  const csv::Table t = csv::read(is);
  std::array<std::size_t, kControllableDim> cols{};
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    cols[i] = t.column(kControllableNames[i]);
  }
  const auto powder_col = t.find("powder");
  std::vector<DesignPoint> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::array<double, kControllableDim> a{};
    for (std::size_t i = 0; i < kControllableDim; ++i) {
      const auto v = cols[i] < row.size() ? csv::parse_double(row[cols[i]]) : std::nullopt;
      if (!v) {
        throw ValidationError("design csv line " + std::to_string(t.line_numbers[r]) +
                              ": bad value for " + std::string(kControllableNames[i]));
      }
      a[i] = *v;
    }
    DesignPoint p{ControllableInputs::from_array(a), Powder::kA};
    if (powder_col && *powder_col < row.size()) p.powder = powder_from_string(row[*powder_col]);
    out.push_back(p);
  }
  return out;
}

std::vector<DesignPoint> read_design_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open design file " + path.string());
  return parse_design_csv(is);
}

void write_design_csv(std::ostream& os, std::span<const DesignPoint> design) {
  for (const auto& name : kControllableNames) os << name << ',';
  os << "powder\n";
  for (const auto& p : design) {
    for (double v : p.controllable.to_array()) os << csv::format_double(v) << ',';
    os << to_string(p.powder) << '\n';
  }
}

// ---------------------------------------------------------------------------

SimulatedProcess::SimulatedProcess(OracleData data, NoiseSpec noise,
                                   EquipmentState state,
                                   ConstraintSpec constraints, CostConfig cost)
    : data_(std::move(data)),
      noise_(noise),
      state_(state),
      constraints_(std::move(constraints)),
      cost_(std::move(cost)) {
  data_.net.validate();
  noise_.validate();
  constraints_.validate();
  cost_.validate();
  if (state_.voltage_sd < 0) throw InvalidArgument("voltage sd must be >= 0");
}

SimulatedProcess SimulatedProcess::with_state(EquipmentState state) const {
  return SimulatedProcess(data_, noise_, state, constraints_, cost_);
}

SimulatedProcess SimulatedProcess::with_noise(NoiseSpec noise) const {
  return SimulatedProcess(data_, noise, state_, constraints_, cost_);
}

double SimulatedProcess::session_voltage(const ControllableInputs& x,
                                         Powder powder) const {
  return data_.voltage.evaluate(x, powder) + state_.voltage_offset;
}

double SimulatedProcess::ignite(const ControllableInputs& x, Powder powder,
                                std::mt19937_64& rng) const {
  std::normal_distribution<double> z(0.0, 1.0);
  return session_voltage(x, powder) + state_.voltage_sd * z(rng);
}

NetOutputs SimulatedProcess::noiseless(const InputVector& x) const {
  return forward(data_.net, x);
}

EvaluatedExperiment SimulatedProcess::measure(const ControllableInputs& x,
                                              Powder powder, std::mt19937_64& rng,
                                              const std::string& session_id) const {
  std::normal_distribution<double> z(0.0, 1.0);
  const double dv = z(rng);
  const double dh = z(rng);
  const double dp = z(rng);
  EvaluatedExperiment e;
  e.x = {x, powder, session_voltage(x, powder) + state_.voltage_sd * dv};
  const NetOutputs y = forward(data_.net, e.x);
  e.measurements.microhardness = y.microhardness + noise_.microhardness_sd * dh;
  e.measurements.porosity = y.porosity + noise_.porosity_sd * dp;
  e.feasible = constraints_.satisfied(e.measurements);
  e.cost = stress_index_unchecked(x, cost_);
  e.session_id = session_id;
  return e;
}

EvaluatedExperiment SimulatedProcess::measure(const ControllableInputs& x,
                                              Powder powder, std::uint64_t seed,
                                              const std::string& session_id) const {
  std::mt19937_64 rng(seed);
  return measure(x, powder, rng, session_id);
}

std::vector<EvaluatedExperiment> generate_initialization(
    const SimulatedProcess& process, std::span<const DesignPoint> design,
    std::uint64_t seed, const std::string& session_id) {
  if (design.empty()) throw InvalidArgument("generate_initialization: empty design");
  EquipmentState baseline = process.state();
  baseline.voltage_offset = 0.0;
  const SimulatedProcess session = process.with_state(baseline);
  std::mt19937_64 rng(seed);
  std::vector<EvaluatedExperiment> out;
  out.reserve(design.size());
  for (const auto& p : design) {
    out.push_back(session.measure(p.controllable, p.powder, rng, session_id));
  }
  return out;
}

}  // namespace apsbo::oracle
