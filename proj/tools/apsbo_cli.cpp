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

// apsbo: simulation studies, model fitting, campaign operation, HTTP service.

#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "apsbo/campaign.hpp"
#include "apsbo/config.hpp"
#include "apsbo/csv.hpp"
#include "apsbo/error.hpp"
#include "apsbo/service.hpp"
#include "apsbo/simulation.hpp"

namespace {

using namespace apsbo;

struct Globals {
  std::string config_path;
};

AppConfig resolve_config(const Globals& g) {
  AppConfig c = g.config_path.empty() ? default_config() : load_config(g.config_path);
  apply_env_overrides(c.paths);
  return c;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return is;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::uint64_t seed = 0;
  std::size_t n_init = 86;
  std::optional<std::size_t> batch_size;
  std::optional<double> pi, epsilon;
  std::optional<std::size_t> max_batches;
  std::string out = "trace.json";
  std::string batch_csv;
  std::string experiments_csv;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  AppConfig c = resolve_config(g);
  if (a.batch_size) c.setup.optimizer.batch_size = *a.batch_size;
  if (a.pi) c.setup.optimizer.pi = *a.pi;
  if (a.epsilon) c.setup.optimizer.epsilon = *a.epsilon;
  if (a.max_batches) c.setup.optimizer.max_batches = *a.max_batches;
  const auto data = oracle::load_oracle(c.paths.weights);
  const auto design = oracle::read_design_csv(c.paths.design);
  const ScenarioResult r = run_scenario(c, data, design, a.n_init, a.seed);

  auto os = open_out(a.out);
  os << scenario_json(r, a.n_init).dump(2) << '\n';
  const std::string stem = a.out.size() > 5 && a.out.ends_with(".json")
                               ? a.out.substr(0, a.out.size() - 5)
                               : a.out;
  auto batches = open_out(a.batch_csv.empty() ? stem + "_batches.csv" : a.batch_csv);
  write_batch_csv(batches, r.trace, c.setup.constraints);
  std::vector<EvaluatedExperiment> all = r.initial;
  for (const auto& b : r.trace.batches) all.insert(all.end(), b.results.begin(), b.results.end());
  auto ex = open_out(a.experiments_csv.empty() ? stem + "_experiments.csv" : a.experiments_csv);
  write_experiments_csv(ex, all);

  const auto& t = r.trace;
  std::cout << "batches=" << t.batches.size()
            << " terminated=" << (t.terminated ? "yes" : "no")
            << " first_feasible_batch="
            << (t.first_feasible_batch() ? std::to_string(*t.first_feasible_batch()) : "none")
            << " final_cost=" << csv::format_double(t.final_incumbent.cost)
            << " feasible=" << (t.final_incumbent.point ? "yes" : "no") << '\n';
  return 0;
}

struct SweepArgs {
  std::vector<std::size_t> n_inits{10, 40, 86};
  std::vector<std::size_t> batch_sizes{5, 10};
  std::size_t seeds = 10;
  std::uint64_t seed_base = 0;
  std::string out = "sweep.csv";
  std::string summary = "sweep_summary.csv";
};

int run_sweep(const Globals& g, const SweepArgs& a) {
  const AppConfig base = resolve_config(g);
  const auto data = oracle::load_oracle(base.paths.weights);
  const auto design = oracle::read_design_csv(base.paths.design);
  std::vector<SweepRow> rows;
  for (std::size_t n : a.batch_sizes) {
    for (std::size_t n_init : a.n_inits) {
      for (std::size_t s = 0; s < a.seeds; ++s) {
        AppConfig c = base;
        c.setup.optimizer.batch_size = n;
        const std::uint64_t seed = a.seed_base + s;
        rows.push_back(sweep_row(run_scenario(c, data, design, n_init, seed), n_init, n, seed));
        std::cerr << "n=" << n << " n_init=" << n_init << " seed=" << seed
                  << " cost=" << csv::format_double(rows.back().final_cost) << '\n';
      }
    }
  }
  auto os = open_out(a.out);
  write_sweep_rows_csv(os, rows);
  const auto cells = summarize(rows);
  auto ss = open_out(a.summary);
  write_sweep_cells_csv(ss, cells);
  write_sweep_cells_csv(std::cout, cells);
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string train;
  std::string validate;
  std::string out;
  std::uint64_t seed = 0;
};

int run_fit(const Globals& g, const FitArgs& a) {
  const AppConfig c = resolve_config(g);
  const auto& spec = c.setup.constraints;
  auto ti = open_in(a.train);
  const auto train = parse_experiments_csv(ti, spec, c.setup.cost);
  auto vi = open_in(a.validate);
  const auto valid = parse_experiments_csv(vi, spec, c.setup.cost);

  std::ostringstream report;
  report << "output,mean_function,n_train,n_valid,rmse,r2\n";
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const QualityOutput output = spec.bands[k].output;
    const gp::Dataset data = constraint_dataset(train, output);
    const gp::Dataset test = constraint_dataset(valid, output);
    if (test.size() == 0) continue;
    for (bool hybrid : {false, true}) {
      ModelConfig m = c.setup.models;
      m.hybrid_microhardness = hybrid;
      const auto mean = m.mean_for(output);
      if (hybrid && !mean) continue;
      gp::FitOptions fo;
      fo.restarts = m.restarts;
      fo.max_iterations = m.max_iterations;
      fo.seed = mix_seed(a.seed, k);
      fo.input_lower = m.bounds.model_lower();
      fo.input_upper = m.bounds.model_upper();
      const gp::GPModel model = gp::fit(data, mean, m.init, fo);
      double sse = 0.0, sst = 0.0;
      const double ybar = test.targets.mean();
      for (Eigen::Index i = 0; i < test.inputs.rows(); ++i) {
        const double e = model.predict_mean(test.inputs.row(i).transpose()) - test.targets[i];
        sse += e * e;
        sst += (test.targets[i] - ybar) * (test.targets[i] - ybar);
      }
      const double n = static_cast<double>(test.size());
      report << to_string(output) << ',' << (mean ? "sign-constrained-linear" : "zero") << ','
             << data.size() << ',' << test.size() << ',' << csv::format_double(std::sqrt(sse / n))
             << ',' << csv::format_double(sst > 0 ? 1.0 - sse / sst : 0.0) << '\n';
    }
  }
  if (!a.out.empty()) {
    auto os = open_out(a.out);
    os << report.str();
  }
  std::cout << report.str();
  return 0;
}

struct MeasureArgs {
  std::uint64_t seed = 0;
  std::size_t n_init = 86;
  double offset = 0.0;
  std::string session = "baseline";
  std::string out;
};

// Simulated measurements of the design points, e.g. for `fit` or `campaign new`.
int run_measure(const Globals& g, const MeasureArgs& a) {
  const AppConfig c = resolve_config(g);
  const auto data = oracle::load_oracle(c.paths.weights);
  auto design = oracle::read_design_csv(c.paths.design);
  if (a.n_init < 1 || a.n_init > design.size()) throw InvalidArgument("bad --n-init");
  design.resize(a.n_init);
  const oracle::SimulatedProcess p(data, c.oracle.noise, {a.offset, c.oracle.voltage_sd},
                                   c.setup.constraints, c.setup.cost);
  std::mt19937_64 rng(a.seed);
  std::vector<EvaluatedExperiment> out;
  for (const auto& d : design) out.push_back(p.measure(d.controllable, d.powder, rng, a.session));
  if (a.out.empty()) {
    write_experiments_csv(std::cout, out);
  } else {
    auto os = open_out(a.out);
    write_experiments_csv(os, out);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct CampaignArgs {
  std::string id;
  std::string initial;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  std::size_t n_init = 86;
  std::string inputs;
  std::optional<std::size_t> history_index;
  std::vector<double> voltages;
  std::string out;
  std::string results;
  std::size_t index = 0;
};

std::filesystem::path campaign_file(const AppConfig& c, const std::string& id) {
  return c.paths.campaign_dir / (id + ".json");
}

int run_campaign(const Globals& g, const std::string& sub, const CampaignArgs& a) {
  const AppConfig c = resolve_config(g);
  const auto path = campaign_file(c, a.id);
  if (sub == "new") {
    if (std::filesystem::exists(path)) throw ValidationError("campaign " + a.id + " exists");
    std::vector<EvaluatedExperiment> initial;
    if (!a.initial.empty()) {
      auto is = open_in(a.initial);
      initial = parse_experiments_csv(is, c.setup.constraints, c.setup.cost);
    } else {
      const auto data = oracle::load_oracle(c.paths.weights);
      auto design = oracle::read_design_csv(c.paths.design);
      if (a.n_init < 2 || a.n_init > design.size()) throw InvalidArgument("bad --n-init");
      design.resize(a.n_init);
      const oracle::SimulatedProcess p(data, c.oracle.noise, {0.0, c.oracle.voltage_sd},
                                       c.setup.constraints, c.setup.cost);
      initial = oracle::generate_initialization(p, design, a.init_seed);
    }
    const CampaignState s = create_campaign(a.id, c.setup, std::move(initial), a.seed);
    save_campaign(s, path);
    std::cout << "created " << path.string() << " phase=" << to_string(s.phase) << '\n';
    return 0;
  }
  CampaignState s = load_campaign(path);
  if (sub == "ignite") {
    ControllableInputs x;
    if (a.history_index) {
      if (*a.history_index >= s.history.size()) throw InvalidArgument("bad --history-index");
      x = s.history[*a.history_index].x.controllable;
    } else {
      const auto fields = csv::split_line(a.inputs);
      if (fields.size() != kControllableDim) {
        throw InvalidArgument("--inputs needs 6 comma-separated values");
      }
      std::array<double, kControllableDim> v{};
      for (std::size_t i = 0; i < kControllableDim; ++i) {
        const auto d = csv::parse_double(fields[i]);
        if (!d) throw InvalidArgument("bad value in --inputs: " + fields[i]);
        v[i] = *d;
      }
      x = ControllableInputs::from_array(v);
    }
    if (a.voltages.empty()) throw InvalidArgument("--voltage is required");
    const double delta = start_session(s, x, a.voltages);
    save_campaign(s, path);
    std::cout << "session=" << s.session->session_id
              << " delta_b=" << csv::format_double(delta) << '\n';
  } else if (sub == "propose") {
    const PendingBatch* b = propose(s);
    save_campaign(s, path);
    if (!b) {
      std::cout << "terminated\n";
    } else if (a.out.empty()) {
      write_proposal_csv(std::cout, *b);
    } else {
      auto os = open_out(a.out);
      write_proposal_csv(os, *b);
    }
  } else if (sub == "drop") {
    drop_candidate(s, a.index);
    save_campaign(s, path);
  } else if (sub == "ingest") {
    auto is = open_in(a.results);
    const auto rows = parse_results_csv(is);
    const IngestReport rep = ingest_results(s, rows);
    save_campaign(s, path);
    for (const auto& r : rep.rows) {
      std::cout << "line " << r.line << ": " << to_string(r.status);
      if (!r.message.empty()) std::cout << ": " << r.message;
      std::cout << '\n';
    }
    std::cout << "phase=" << to_string(s.phase) << '\n';
    if (rep.rejected() > 0) {
      std::cerr << "error: validation: " << rep.rejected() << " row(s) rejected\n";
      return 3;
    }
  } else if (sub == "status") {
    nlohmann::json j;
    j["id"] = s.id;
    j["phase"] = std::string(to_string(s.phase));
    j["revision"] = s.revision;
    j["history"] = s.history.size();
    j["batches"] = s.trace.size();
    j["session"] = s.session ? nlohmann::json{{"session_id", s.session->session_id},
                                              {"delta_b", s.session->delta_b}}
                             : nlohmann::json(nullptr);
    j["incumbent"] = to_json(current_incumbent(s));
    j["pending"] = s.pending ? to_json(*s.pending, s.config.constraints) : nlohmann::json(nullptr);
    std::cout << j.dump(2) << '\n';
  } else if (sub == "finish") {
    const Incumbent inc = finish(s);
    save_campaign(s, path);
    std::cout << to_json(inc).dump(2) << '\n';
  } else {
    throw InvalidArgument("unknown campaign command '" + sub + "'");
  }
  return 0;
}

service::HttpServer* g_server = nullptr;

int run_serve(const Globals& g, const std::string& host, int port) {
  service::CampaignService svc(resolve_config(g));
  service::HttpServer server(svc);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cout << "listening on " << host << ':' << bound << std::endl;
  server.serve();
  g_server = nullptr;
  return 0;
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kValidation: return 3;
    case ErrorCategory::kNotFound: return 4;
    case ErrorCategory::kPhaseViolation:
    case ErrorCategory::kStaleRevision: return 5;
    case ErrorCategory::kMigrationRequired: return 6;
    case ErrorCategory::kIo: return 7;
    default: return 2;
  }
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained batch Bayesian optimization for plasma spray tuning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a simulated campaign against the oracle");
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--n-init", sim.n_init, "Initialization runs (prefix of the design)");
  simulate->add_option("--batch-size", sim.batch_size);
  simulate->add_option("--pi", sim.pi);
  simulate->add_option("--epsilon", sim.epsilon);
  simulate->add_option("--max-batches", sim.max_batches);
  simulate->add_option("--out", sim.out, "Trace JSON");
  simulate->add_option("--batch-csv", sim.batch_csv, "Per-candidate CSV");
  simulate->add_option("--experiments-csv", sim.experiments_csv, "Per-experiment CSV");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Grid of simulated campaigns");
  sweep->add_option("--n-init", sw.n_inits)->delimiter(',');
  sweep->add_option("--batch-size", sw.batch_sizes)->delimiter(',');
  sweep->add_option("--seeds", sw.seeds, "Seeds per cell");
  sweep->add_option("--seed-base", sw.seed_base);
  sweep->add_option("--out", sw.out, "Per-run CSV");
  sweep->add_option("--summary", sw.summary, "Per-cell CSV");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit quality GPs and report validation metrics");
  fit->add_option("--train", fit_args.train)->required()->check(CLI::ExistingFile);
  fit->add_option("--validate", fit_args.validate)->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_args.out);
  fit->add_option("--seed", fit_args.seed);

  MeasureArgs ms;
  auto* measure = app.add_subcommand("measure", "Simulated measurements of the design points");
  measure->add_option("--seed", ms.seed);
  measure->add_option("--n-init", ms.n_init);
  measure->add_option("--offset", ms.offset, "Session voltage offset [V]");
  measure->add_option("--session", ms.session);
  measure->add_option("--out", ms.out);

  CampaignArgs ca;
  auto* campaign = app.add_subcommand("campaign", "Operate a persistent campaign");
  campaign->require_subcommand(1);
  auto add_id = [&](CLI::App* c) { c->add_option("--id", ca.id)->required(); };
  auto* c_new = campaign->add_subcommand("new", "Create a campaign");
  add_id(c_new);
  c_new->add_option("--initial", ca.initial, "Experiments CSV; default: simulated design");
  c_new->add_option("--seed", ca.seed);
  c_new->add_option("--init-seed", ca.init_seed);
  c_new->add_option("--n-init", ca.n_init);
  auto* c_ignite = campaign->add_subcommand("ignite", "Start a session");
  add_id(c_ignite);
  c_ignite->add_option("--inputs", ca.inputs, "Six comma-separated controllable inputs");
  c_ignite->add_option("--history-index", ca.history_index);
  c_ignite->add_option("--voltage", ca.voltages, "Ignition voltage (repeatable)");
  auto* c_propose = campaign->add_subcommand("propose", "Propose the next batch");
  add_id(c_propose);
  c_propose->add_option("--out", ca.out, "Proposal CSV");
  auto* c_drop = campaign->add_subcommand("drop", "Drop a pending candidate");
  add_id(c_drop);
  c_drop->add_option("--index", ca.index)->required();
  auto* c_ingest = campaign->add_subcommand("ingest", "Ingest a results CSV");
  add_id(c_ingest);
  c_ingest->add_option("--results", ca.results)->required()->check(CLI::ExistingFile);
  auto* c_status = campaign->add_subcommand("status", "Show campaign state");
  add_id(c_status);
  auto* c_finish = campaign->add_subcommand("finish", "Stop and report the incumbent");
  add_id(c_finish);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return run_simulate(g, sim);
    if (*sweep) return run_sweep(g, sw);
    if (*fit) return run_fit(g, fit_args);
    if (*measure) return run_measure(g, ms);
    if (*serve) return run_serve(g, host, port);
    if (*campaign) {
      for (auto* sub : campaign->get_subcommands()) {
        if (*sub) return run_campaign(g, sub->get_name(), ca);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.category()) << ": " << one_line(e.what()) << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << '\n';
    return 2;
  }
  return 0;
}
