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

#include "apsbo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "apsbo/csv.hpp"
#include "apsbo/error.hpp"

namespace apsbo {

void OptimizerConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (!(pi >= 0.0 && pi <= 1.0)) throw InvalidArgument("pi must lie in [0, 1]");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
}

gp::LinearMeanParams ModelConfig::microhardness_mean() {
  std::vector<gp::SignConstraint> mask(kModelInputDim, gp::SignConstraint::kZero);
  mask[kSecondaryGasIndex] = gp::SignConstraint::kNegative;
  mask[kVoltageIndex] = gp::SignConstraint::kPositive;
  return gp::LinearMeanParams::zeros(std::move(mask));
}

std::optional<gp::LinearMeanParams> ModelConfig::mean_for(QualityOutput output) const {
  if (hybrid_microhardness && output == QualityOutput::kMicrohardness) {
    return microhardness_mean();
  }
  return std::nullopt;
}

CandidatePool CandidatePool::from_inputs(std::vector<InputVector> inputs,
                                         const CostConfig& cost) {
  CandidatePool pool;
  pool.costs.reserve(inputs.size());
  for (const auto& x : inputs) {
    pool.costs.push_back(stress_index_unchecked(x.controllable, cost));
  }
  pool.inputs = std::move(inputs);
  return pool;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

gp::Dataset constraint_dataset(std::span<const EvaluatedExperiment> history,
                               QualityOutput output) {
  gp::Dataset data;
  data.inputs.resize(0, static_cast<Eigen::Index>(kModelInputDim));
  for (const auto& e : history) {
    if (const auto v = e.measurements.value(output)) data.append(e.x.flatten(), *v);
  }
  return data;
}

std::vector<gp::GPModel> fit_constraint_models(
    std::span<const EvaluatedExperiment> history, const ConstraintSpec& spec,
    const ModelConfig& models, std::uint64_t seed) {
  std::vector<gp::GPModel> out;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const QualityOutput output = spec.bands[k].output;
    const gp::Dataset data = constraint_dataset(history, output);
    if (data.size() < 2) {
      throw InvalidArgument("need at least 2 measurements of " +
                            std::string(to_string(output)) + " to fit its model");
    }
    gp::FitOptions fo;
    fo.restarts = models.restarts;
    fo.max_iterations = models.max_iterations;
    fo.seed = mix_seed(seed, k);
    fo.input_lower = models.bounds.model_lower();
    fo.input_upper = models.bounds.model_upper();
    out.push_back(gp::fit(data, models.mean_for(output), models.init, fo));
  }
  return out;
}

Incumbent best_feasible(std::span<const EvaluatedExperiment> history,
                        double fallback_cost) {
  Incumbent inc;
  inc.cost = fallback_cost;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& e = history[i];
    if (!e.feasible) continue;
    // Strict comparison keeps the earliest of equal-cost entries.
    if (!inc.point || e.cost < inc.cost) {
      inc.point = e.x;
      inc.cost = e.cost;
      inc.history_index = i;
    }
  }
  return inc;
}

namespace {

std::vector<gp::BatchPosterior> batch_posteriors(const std::vector<gp::GPModel>& models,
                                                 const gp::Matrix& queries) {
  std::vector<gp::BatchPosterior> out;
  out.reserve(models.size());
  for (const auto& m : models) out.emplace_back(m, queries);
  return out;
}

}  // namespace

BatchProposal propose_batch_with_models(
    std::span<const EvaluatedExperiment> history, const CandidatePool& pool,
    const ConstraintSpec& spec, const OptimizerConfig& config,
    const ModelConfig& models, std::vector<gp::GPModel> fitted,
    std::uint64_t seed) {
  config.validate();
  spec.validate();
  if (pool.size() == 0) throw InvalidArgument("propose_batch: empty candidate pool");
  if (pool.costs.size() != pool.size()) {
    throw InvalidArgument("propose_batch: pool costs and inputs differ in length");
  }
  if (pool.size() < config.batch_size) {
    throw InvalidArgument("propose_batch: pool smaller than batch size");
  }
  if (fitted.size() != spec.size()) {
    throw InvalidArgument("propose_batch: need one model per constraint");
  }

  const std::size_t m = pool.size();
  const double fallback = *std::max_element(pool.costs.begin(), pool.costs.end()) + 1.0;
  const Incumbent incumbent = best_feasible(history, fallback);
  const bool any_feasible = incumbent.point.has_value();

  gp::Matrix queries(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(kModelInputDim));
  for (std::size_t j = 0; j < m; ++j) {
    queries.row(static_cast<Eigen::Index>(j)) = pool.inputs[j].flatten().transpose();
  }

  // Improvement is fixed for the whole batch; no real evaluation happens
  // until the batch is complete.
  std::vector<double> improvements(m);
  for (std::size_t j = 0; j < m; ++j) {
    improvements[j] = improvement(pool.costs[j], incumbent.cost);
  }

  std::vector<gp::BatchPosterior> post = batch_posteriors(fitted, queries);
  std::vector<gp::Dataset> virtual_data;
  if (config.refit_on_virtual) {
    for (const auto& band : spec.bands) {
      virtual_data.push_back(constraint_dataset(history, band.output));
    }
  }

  std::vector<char> removed(m, 0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const SelectionOptions sel_opts{config.pi, config.hfi_requires_threshold};

  BatchProposal proposal;
  proposal.incumbent_cost = incumbent.cost;
  std::vector<ScoredCandidate> scored;
  std::vector<gp::PosteriorPrediction> preds(spec.size());
  scored.reserve(m);

  for (std::size_t step = 0; step < config.batch_size; ++step) {
    scored.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (removed[j]) continue;
      for (std::size_t k = 0; k < spec.size(); ++k) {
        preds[k] = post[k].at(static_cast<Eigen::Index>(j));
      }
      const double fp = feasibility_probability(preds, spec);
      ScoredCandidate c;
      c.pool_index = j;
      c.cost = pool.costs[j];
      c.improvement = improvements[j];
      c.fp = fp;
      c.alpha_fip = alpha_fip(fp, c.improvement);
      c.alpha_hfi = alpha_hfi(fp, c.improvement, config.pi);
      scored.push_back(c);
    }
    const Selection sel = select_candidate(scored, any_feasible, sel_opts);
    const ScoredCandidate& win = scored[sel.position];
    const std::size_t j = win.pool_index;

    CandidateDiagnostics d;
    d.pool_index = j;
    d.x = pool.inputs[j];
    d.cost = win.cost;
    d.improvement = win.improvement;
    d.fp = win.fp;
    d.alpha_fip = win.alpha_fip;
    d.alpha_hfi = win.alpha_hfi;
    d.alpha = sel.alpha;
    d.acquisition = sel.acquisition;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      d.predictions.push_back(post[k].at(static_cast<Eigen::Index>(j)));
    }
    proposal.candidates.push_back(pool.inputs[j]);
    proposal.fip_values.push_back(win.alpha_fip);
    removed[j] = 1;

    if (step + 1 == config.batch_size) {
      proposal.diagnostics.push_back(std::move(d));
      break;
    }

    // Virtual expansion with the predicted constraint values.
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const gp::PosteriorPrediction& p = d.predictions[k];
      double y = p.mean;
      if (config.fantasy == FantasyMode::kSample) {
        y += std::sqrt(p.variance) * normal(rng);
      }
      if (config.refit_on_virtual) {
        virtual_data[k].append(pool.inputs[j].flatten(), y);
      } else {
        post[k].condition_on_query(static_cast<Eigen::Index>(j), y);
      }
    }
    if (config.refit_on_virtual) {
      for (std::size_t k = 0; k < spec.size(); ++k) {
        gp::FitOptions fo;
        fo.restarts = models.restarts;
        fo.max_iterations = models.max_iterations;
        fo.seed = mix_seed(seed, k, step + 1);
        fo.input_lower = models.bounds.model_lower();
        fo.input_upper = models.bounds.model_upper();
        fitted[k] = gp::fit(virtual_data[k], models.mean_for(spec.bands[k].output),
                            models.init, fo);
      }
      post = batch_posteriors(fitted, queries);
    }
    proposal.diagnostics.push_back(std::move(d));
  }
  return proposal;
}

BatchProposal propose_batch(std::span<const EvaluatedExperiment> history,
                            const CandidatePool& pool, const ConstraintSpec& spec,
                            const OptimizerConfig& config,
                            const ModelConfig& models, std::uint64_t seed) {
  auto fitted = fit_constraint_models(history, spec, models, mix_seed(seed, 1));
  return propose_batch_with_models(history, pool, spec, config, models,
                                   std::move(fitted), mix_seed(seed, 2));
}

bool check_termination(const BatchProposal& proposal, const OptimizerConfig& config) {
  const std::size_t n = proposal.fip_values.size();
  if (n == 0) return false;
  const auto below = static_cast<std::size_t>(std::count_if(
      proposal.fip_values.begin(), proposal.fip_values.end(),
      [&](double v) { return v < config.epsilon; }));
  return below >= (n + 1) / 2;
}

std::vector<VoltageObservation> baseline_voltages(
    std::span<const EvaluatedExperiment> history,
    const std::map<std::string, double>& session_offsets) {
  std::vector<VoltageObservation> out;
  out.reserve(history.size());
  for (const auto& e : history) {
    const auto it = session_offsets.find(e.session_id);
    const double offset = it == session_offsets.end() ? 0.0 : it->second;
    out.push_back({e.x.controllable, e.x.powder, e.x.voltage - offset});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t CampaignTrace::evaluations() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.results.size();
  return n;
}

std::optional<std::size_t> CampaignTrace::first_feasible_batch() const {
  for (const auto& b : batches) {
    for (const auto& r : b.results) {
      if (r.feasible) return b.batch;
    }
  }
  return std::nullopt;
}

CampaignTrace run_simulated_campaign(std::span<const EvaluatedExperiment> initial,
                                     const oracle::SimulatedProcess& process,
                                     const SimulationSetup& setup,
                                     std::uint64_t seed) {
  setup.optimizer.validate();
  const std::vector<ControllableInputs> grid =
      generate_candidates(setup.bounds, setup.candidates);
  double grid_max = -std::numeric_limits<double>::infinity();
  for (const auto& c : grid) grid_max = std::max(grid_max, stress_index_unchecked(c, setup.cost));
  const double fallback = grid_max + 1.0;

  std::vector<EvaluatedExperiment> history(initial.begin(), initial.end());
  std::map<std::string, double> offsets;
  for (const auto& e : history) offsets.emplace(e.session_id, 0.0);

  CampaignTrace trace;
  trace.seed = seed;
  trace.initial_incumbent = best_feasible(history, fallback);
  trace.final_incumbent = trace.initial_incumbent;
  if (history.empty()) throw InvalidArgument("simulation needs an initialization set");

  std::mt19937_64 rng(mix_seed(seed, 0xA5));
  for (std::size_t b = 1; b <= setup.optimizer.max_batches; ++b) {
    BatchRecord rec;
    rec.batch = b;
    rec.session_id = "sim-" + std::to_string(b);

    // Session start: ignite at a known setting and estimate the drift.
    VoltageFitOptions vfo;
    vfo.restarts = 1;
    vfo.seed = mix_seed(seed, b, 0x56);
    const VoltageModel vmodel =
        fit_voltage_model(baseline_voltages(history, offsets), setup.bounds, vfo);
    const ControllableInputs& ignition_at = history.front().x.controllable;
    std::vector<double> readings;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, setup.ignition_repeats); ++r) {
      readings.push_back(process.ignite(ignition_at, history.front().x.powder, rng));
    }
    rec.ignition_voltage = readings.front();
    rec.delta_b = estimate_offset(vmodel, ignition_at, history.front().x.powder, readings);
    offsets[rec.session_id] = rec.delta_b;

    std::vector<ControllableInputs> open;
    open.reserve(grid.size());
    for (const auto& c : grid) {
      const bool seen = std::any_of(history.begin(), history.end(), [&](const auto& e) {
        return e.x.controllable == c;
      });
      if (!seen) open.push_back(c);
    }
    CandidatePool pool = CandidatePool::from_inputs(
        expand_candidates(open, setup.powder, vmodel, rec.delta_b), setup.cost);

    rec.proposal = propose_batch(history, pool, setup.constraints, setup.optimizer,
                                 setup.models, mix_seed(seed, b, 0xB7));
    for (const auto& x : rec.proposal.candidates) {
      rec.results.push_back(process.measure(x.controllable, x.powder, rng, rec.session_id));
    }
    history.insert(history.end(), rec.results.begin(), rec.results.end());
    rec.incumbent = best_feasible(history, fallback);
    rec.terminated = check_termination(rec.proposal, setup.optimizer);
    trace.final_incumbent = rec.incumbent;
    trace.batches.push_back(std::move(rec));
    if (trace.batches.back().terminated) {
      trace.terminated = true;
      trace.stopping_batch = b;
      break;
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const InputVector& x) {
  nlohmann::json j;
  const auto a = x.controllable.to_array();
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    j[std::string(kControllableNames[i])] = a[i];
  }
  j["powder"] = std::string(to_string(x.powder));
  j["voltage"] = x.voltage;
  return j;
}

InputVector input_from_json(const nlohmann::json& doc) {
  InputVector x;
  std::array<double, kControllableDim> a{};
  for (std::size_t i = 0; i < kControllableDim; ++i) {
    a[i] = doc.at(std::string(kControllableNames[i])).get<double>();
  }
  x.controllable = ControllableInputs::from_array(a);
  x.powder = powder_from_string(doc.at("powder").get<std::string>());
  x.voltage = doc.at("voltage").get<double>();
  return x;
}

namespace {

void put_optional(nlohmann::json& j, const char* key, const std::optional<double>& v) {
  j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> get_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json to_json(const Incumbent& inc) {
  nlohmann::json j;
  j["cost"] = inc.cost;
  j["point"] = inc.point ? to_json(*inc.point) : nlohmann::json(nullptr);
  j["history_index"] = inc.history_index ? nlohmann::json(*inc.history_index)
                                         : nlohmann::json(nullptr);
  return j;
}


nlohmann::json to_json(const EvaluatedExperiment& e) {
  nlohmann::json j;
  j["x"] = to_json(e.x);
  nlohmann::json m;
  put_optional(m, "application_rate", e.measurements.application_rate);
  put_optional(m, "microhardness", e.measurements.microhardness);
  put_optional(m, "porosity", e.measurements.porosity);
  put_optional(m, "deposition_efficiency", e.measurements.deposition_efficiency);
  j["measurements"] = m;
  j["feasible"] = e.feasible;
  j["cost"] = e.cost;
  j["session_id"] = e.session_id;
  return j;
}

Incumbent incumbent_from_json(const nlohmann::json& doc) {
  Incumbent inc;
  inc.cost = doc.at("cost").get<double>();
  if (!doc.at("point").is_null()) inc.point = input_from_json(doc.at("point"));
  if (!doc.at("history_index").is_null()) {
    inc.history_index = doc.at("history_index").get<std::size_t>();
  }
  return inc;
}

EvaluatedExperiment experiment_from_json(const nlohmann::json& doc) {
  EvaluatedExperiment e;
  e.x = input_from_json(doc.at("x"));
  const auto& m = doc.at("measurements");
  e.measurements.application_rate = get_optional(m, "application_rate");
  e.measurements.microhardness = get_optional(m, "microhardness");
  e.measurements.porosity = get_optional(m, "porosity");
  e.measurements.deposition_efficiency = get_optional(m, "deposition_efficiency");
  e.feasible = doc.at("feasible").get<bool>();
  e.cost = doc.at("cost").get<double>();
  e.session_id = doc.at("session_id").get<std::string>();
  return e;
}

nlohmann::json to_json(const BatchProposal& proposal, const ConstraintSpec& spec) {
  nlohmann::json j;
  j["incumbent_cost"] = proposal.incumbent_cost;
  j["fip_values"] = proposal.fip_values;
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& d : proposal.diagnostics) {
    nlohmann::json c;
    c["pool_index"] = d.pool_index;
    c["x"] = to_json(d.x);
    c["cost"] = d.cost;
    c["improvement"] = d.improvement;
    c["fp"] = d.fp;
    c["alpha_fip"] = d.alpha_fip;
    c["alpha_hfi"] = d.alpha_hfi;
    c["alpha"] = d.alpha;
    c["acquisition"] = std::string(to_string(d.acquisition));
    nlohmann::json preds = nlohmann::json::array();
    for (std::size_t k = 0; k < d.predictions.size(); ++k) {
      preds.push_back({{"output", std::string(to_string(spec.bands[k].output))},
                       {"mean", d.predictions[k].mean},
                       {"variance", d.predictions[k].variance}});
    }
    c["predictions"] = preds;
    cands.push_back(c);
  }
  j["candidates"] = cands;
  return j;
}

BatchProposal proposal_from_json(const nlohmann::json& doc) {
  BatchProposal p;
  p.incumbent_cost = doc.at("incumbent_cost").get<double>();
  p.fip_values = doc.at("fip_values").get<std::vector<double>>();
  for (const auto& c : doc.at("candidates")) {
    CandidateDiagnostics d;
    d.pool_index = c.at("pool_index").get<std::size_t>();
    d.x = input_from_json(c.at("x"));
    d.cost = c.at("cost").get<double>();
    d.improvement = c.at("improvement").get<double>();
    d.fp = c.at("fp").get<double>();
    d.alpha_fip = c.at("alpha_fip").get<double>();
    d.alpha_hfi = c.at("alpha_hfi").get<double>();
    d.alpha = c.at("alpha").get<double>();
    const auto kind = c.at("acquisition").get<std::string>();
    if (kind == "FIP") {
      d.acquisition = AcquisitionKind::kFip;
    } else if (kind == "HFI") {
      d.acquisition = AcquisitionKind::kHfi;
    } else {
      throw ValidationError("unknown acquisition '" + kind + "'");
    }
    for (const auto& pr : c.at("predictions")) {
      d.predictions.push_back({pr.at("mean").get<double>(), pr.at("variance").get<double>()});
    }
    p.candidates.push_back(d.x);
    p.diagnostics.push_back(std::move(d));
  }
  if (p.fip_values.size() != p.candidates.size()) {
    throw ValidationError("proposal: fip_values and candidates differ in length");
  }
  return p;
}

nlohmann::json to_json(const CampaignTrace& trace) {
  const ConstraintSpec spec = ConstraintSpec::aps_default();
  nlohmann::json j;
  j["format_version"] = kTraceFormatVersion;
  j["seed"] = trace.seed;
  j["initial_incumbent"] = to_json(trace.initial_incumbent);
  nlohmann::json batches = nlohmann::json::array();
  for (const auto& b : trace.batches) {
    nlohmann::json jb;
    jb["batch"] = b.batch;
    jb["session_id"] = b.session_id;
    jb["ignition_voltage"] = b.ignition_voltage;
    jb["delta_b"] = b.delta_b;
    jb["proposal"] = to_json(b.proposal, spec);
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : b.results) results.push_back(to_json(r));
    jb["results"] = results;
    jb["incumbent"] = to_json(b.incumbent);
    jb["terminated"] = b.terminated;
    batches.push_back(jb);
  }
  j["batches"] = batches;
  j["terminated"] = trace.terminated;
  j["stopping_batch"] = trace.stopping_batch ? nlohmann::json(*trace.stopping_batch)
                                             : nlohmann::json(nullptr);
  j["final_incumbent"] = to_json(trace.final_incumbent);
  return j;
}

void write_batch_csv(std::ostream& os, const CampaignTrace& trace,
                     const ConstraintSpec& spec) {
  os << "batch,candidate_index,acquisition,alpha_fip,alpha_hfi,fp,improvement,"
        "cost,incumbent_cost";
  for (const auto& band : spec.bands) {
    const std::string n(to_string(band.output));
    os << ',' << n << "_pred_mean," << n << "_pred_lo," << n << "_pred_hi," << n
       << "_measured";
  }
  os << ",feasible\n";
  using csv::format_double;
  for (const auto& b : trace.batches) {
    for (std::size_t i = 0; i < b.proposal.diagnostics.size(); ++i) {
      const auto& d = b.proposal.diagnostics[i];
      os << b.batch << ',' << i << ',' << to_string(d.acquisition) << ','
         << format_double(d.alpha_fip) << ',' << format_double(d.alpha_hfi) << ','
         << format_double(d.fp) << ',' << format_double(d.improvement) << ','
         << format_double(d.cost) << ',' << format_double(b.incumbent.cost);
      for (std::size_t k = 0; k < spec.size(); ++k) {
        const double sd = std::sqrt(d.predictions[k].variance);
        const auto measured = i < b.results.size()
                                  ? b.results[i].measurements.value(spec.bands[k].output)
                                  : std::nullopt;
        os << ',' << format_double(d.predictions[k].mean) << ','
           << format_double(d.predictions[k].mean - 2.0 * sd) << ','
           << format_double(d.predictions[k].mean + 2.0 * sd) << ','
           << (measured ? format_double(*measured) : std::string());
      }
      os << ',' << (i < b.results.size() && b.results[i].feasible ? 1 : 0) << '\n';
    }
  }
}

namespace {

constexpr const char* kExperimentColumns[] = {
    "voltage_V", "microhardness_HV", "porosity_pct", "application_rate",
    "deposition_efficiency_pct"};

}  // namespace

void write_experiments_csv(std::ostream& os,
                           std::span<const EvaluatedExperiment> experiments) {
  os << "session_id";
  for (const auto& n : kControllableNames) os << ',' << n;
  os << ",powder";
  for (const char* n : kExperimentColumns) os << ',' << n;
  os << ",feasible,cost\n";
  using csv::format_double;
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& e : experiments) {
    os << e.session_id;
    for (double v : e.x.controllable.to_array()) os << ',' << format_double(v);
    os << ',' << to_string(e.x.powder) << ',' << format_double(e.x.voltage) << ','
       << opt(e.measurements.microhardness) << ',' << opt(e.measurements.porosity)
       << ',' << opt(e.measurements.application_rate) << ','
       << opt(e.measurements.deposition_efficiency) << ',' << (e.feasible ? 1 : 0)
       << ',' << format_double(e.cost) << '\n';
  }
}

std::vector<EvaluatedExperiment> parse_experiments_csv(std::istream& is,
                                                       const ConstraintSpec& spec,
                                                       const CostConfig& cost) {
  const csv::Table t = csv::read(is);
  std::array<std::size_t, kControllableDim> cols{};
  for (std::size_t i = 0; i < kControllableDim; ++i) cols[i] = t.column(kControllableNames[i]);
  const std::size_t voltage_col = t.column("voltage_V");
  const auto session_col = t.find("session_id");
  const auto powder_col = t.find("powder");
  const auto mh_col = t.find("microhardness_HV");
  const auto por_col = t.find("porosity_pct");
  const auto ar_col = t.find("application_rate");
  const auto de_col = t.find("deposition_efficiency_pct");

  std::vector<EvaluatedExperiment> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = "experiments csv line " + std::to_string(t.line_numbers[r]);
    auto field = [&](std::size_t c) -> std::string_view {
      return c < row.size() ? std::string_view(row[c]) : std::string_view();
    };
    auto required = [&](std::size_t c, std::string_view name) {
      const auto v = csv::parse_double(field(c));
      if (!v) throw ValidationError(where + ": bad value for " + std::string(name));
      return *v;
    };
    auto optional = [&](const std::optional<std::size_t>& c,
                        std::string_view name) -> std::optional<double> {
      if (!c || field(*c).empty()) return std::nullopt;
      const auto v = csv::parse_double(field(*c));
      if (!v) throw ValidationError(where + ": bad value for " + std::string(name));
      return v;
    };
    EvaluatedExperiment e;
    std::array<double, kControllableDim> a{};
    for (std::size_t i = 0; i < kControllableDim; ++i) a[i] = required(cols[i], kControllableNames[i]);
    e.x.controllable = ControllableInputs::from_array(a);
    e.x.powder = powder_col ? powder_from_string(field(*powder_col)) : Powder::kA;
    e.x.voltage = required(voltage_col, "voltage_V");
    e.measurements.microhardness = optional(mh_col, "microhardness_HV");
    e.measurements.porosity = optional(por_col, "porosity_pct");
    e.measurements.application_rate = optional(ar_col, "application_rate");
    e.measurements.deposition_efficiency = optional(de_col, "deposition_efficiency_pct");
    e.session_id = session_col ? std::string(field(*session_col)) : "baseline";
    if (e.session_id.empty()) e.session_id = "baseline";
    e.feasible = spec.satisfied(e.measurements);
    e.cost = stress_index_unchecked(e.x.controllable, cost);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace apsbo
