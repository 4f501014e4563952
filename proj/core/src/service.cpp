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

#include "apsbo/service.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <vector>

#include "httplib.h"

#include "apsbo/error.hpp"
#include "apsbo/oracle.hpp"

namespace apsbo::service {

using nlohmann::json;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

int status_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kNotFound: return 404;
    case ErrorCategory::kPhaseViolation:
    case ErrorCategory::kStaleRevision:
    case ErrorCategory::kMigrationRequired: return 409;
    case ErrorCategory::kInvalidArgument:
    case ErrorCategory::kValidation: return 422;
    default: return 500;
  }
}

Response error_response(int status, std::string_view category, const std::string& message) {
  return {status, {{"error", {{"category", category}, {"message", message}}}}};
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
         });
}

json parse_body(const Request& r) {
  if (r.body.empty()) return json::object();
  try {
    return json::parse(r.body);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

bool looks_like_csv(const Request& r) {
  if (r.content_type.find("csv") != std::string::npos) return true;
  const auto first = r.body.find_first_not_of(" \t\r\n");
  return first != std::string::npos && r.body[first] != '{' && r.body[first] != '[';
}

std::vector<ResultRow> rows_from(const Request& r) {
  if (looks_like_csv(r)) return parse_results_csv(std::string_view(r.body));
  const json body = parse_body(r);
  if (body.is_array()) return results_from_json(body);
  if (!body.contains("rows")) throw ValidationError("expected a 'rows' array");
  return results_from_json(body.at("rows"));
}

std::optional<std::uint64_t> body_revision(const Request& r) {
  if (r.revision) return r.revision;
  if (r.body.empty() || looks_like_csv(r)) return std::nullopt;
  const json body = parse_body(r);
  if (body.is_object() && body.contains("revision") && !body.at("revision").is_null()) {
    return body.at("revision").get<std::uint64_t>();
  }
  return std::nullopt;
}

}  // namespace

json state_view(const CampaignState& state) {
  json j = to_json(state);
  j["incumbent"] = to_json(current_incumbent(state));
  return j;
}

CampaignService::CampaignService(AppConfig config) : config_(std::move(config)) {
  std::filesystem::create_directories(config_.paths.campaign_dir);
}

std::filesystem::path CampaignService::file_for(const std::string& id) const {
  return config_.paths.campaign_dir / (id + ".json");
}

std::shared_ptr<CampaignService::Entry> CampaignService::entry(const std::string& id) {
  if (!valid_id(id)) throw NotFound("unknown campaign '" + id + "'");
  std::lock_guard lock(registry_mutex_);
  auto& e = entries_[id];
  if (!e) e = std::make_shared<Entry>();
  return e;
}

const CampaignState& CampaignService::loaded(Entry& e, const std::string& id) {
  if (!e.state) {
    const auto path = file_for(id);
    if (!std::filesystem::exists(path)) throw NotFound("unknown campaign '" + id + "'");
    e.state = load_campaign(path);
  }
  return *e.state;
}

std::string CampaignService::next_id() {
  std::lock_guard lock(registry_mutex_);
  std::size_t max_seen = 0;
  auto consider = [&](const std::string& name) {
    if (name.size() > 1 && name[0] == 'c') {
      std::size_t v = 0;
      const auto* end = name.data() + name.size();
      const auto res = std::from_chars(name.data() + 1, end, v);
      if (res.ec == std::errc() && res.ptr == end) max_seen = std::max(max_seen, v);
    }
  };
  for (const auto& [id, e] : entries_) consider(id);
  std::error_code ec;
  for (const auto& f : std::filesystem::directory_iterator(config_.paths.campaign_dir, ec)) {
    if (f.path().extension() == ".json") consider(f.path().stem().string());
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "c%04zu", max_seen + 1);
  const std::string id = buf;
  entries_[id] = std::make_shared<Entry>();  // reserve
  return id;
}

Response CampaignService::create(const Request& r) {
  const json body = parse_body(r);
  if (!body.is_object()) throw ValidationError("expected a JSON object");
  SimulationSetup setup = body.contains("config") ? setup_from_json(body.at("config"))
                                                  : config_.setup;
  const std::uint64_t seed = body.value("seed", std::uint64_t{0});

  std::vector<EvaluatedExperiment> initial;
  if (body.contains("initial_csv")) {
    std::istringstream is(body.at("initial_csv").get<std::string>());
    initial = parse_experiments_csv(is, setup.constraints, setup.cost);
  } else if (body.contains("initial")) {
    for (const auto& e : body.at("initial")) {
      auto ex = experiment_from_json(e);
      ex.feasible = setup.constraints.satisfied(ex.measurements);
      ex.cost = stress_index_unchecked(ex.x.controllable, setup.cost);
      initial.push_back(std::move(ex));
    }
  } else {
    // Simulated initialization from the configured oracle and design.
    const json sim = body.value("simulated_initialization", json::object());
    const auto data = oracle::load_oracle(config_.paths.weights);
    auto design = oracle::read_design_csv(config_.paths.design);
    const std::size_t n_init = sim.value("n_init", design.size());
    if (n_init < 2 || n_init > design.size()) {
      throw ValidationError("n_init must lie in [2, " + std::to_string(design.size()) + "]");
    }
    design.resize(n_init);
    const oracle::SimulatedProcess process(
        data, config_.oracle.noise, {0.0, config_.oracle.voltage_sd}, setup.constraints,
        setup.cost);
    initial = oracle::generate_initialization(process, design, sim.value("seed", seed));
  }

  const std::string id = next_id();
  auto e = entry(id);
  std::unique_lock lock(e->mutex);
  CampaignState state = create_campaign(id, setup, std::move(initial), seed);
  save_campaign(state, file_for(id));
  e->state = std::move(state);
  return {201, {{"id", id}, {"revision", e->state->revision},
                {"phase", std::string(to_string(e->state->phase))}}};
}

Response CampaignService::list() {
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& f : std::filesystem::directory_iterator(config_.paths.campaign_dir, ec)) {
    if (f.path().extension() == ".json") ids.push_back(f.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return {200, {{"campaigns", ids}}};
}

Response CampaignService::get(const std::string& id) {
  auto e = entry(id);
  {
    std::shared_lock lock(e->mutex);
    if (e->state) return {200, state_view(*e->state)};
  }
  std::unique_lock lock(e->mutex);
  return {200, state_view(loaded(*e, id))};
}

Response CampaignService::mutate(const std::string& id, const Request& r,
                                 const std::string& action, const std::string& arg) {
  auto e = entry(id);
  std::unique_lock lock(e->mutex);
  CampaignState state = loaded(*e, id);
  if (const auto expected = body_revision(r); expected && *expected != state.revision) {
    throw StaleRevision("campaign " + id + " is at revision " +
                        std::to_string(state.revision) + ", request expected " +
                        std::to_string(*expected));
  }
  Response resp;
  if (action == "session") {
    const json body = parse_body(r);
    if (!body.contains("x_c_b") || !body.contains("V_b")) {
      throw ValidationError("session needs 'x_c_b' and 'V_b'");
    }
    std::array<double, kControllableDim> a{};
    for (std::size_t i = 0; i < kControllableDim; ++i) {
      a[i] = body.at("x_c_b").at(std::string(kControllableNames[i])).get<double>();
    }
    std::vector<double> volts;
    if (body.at("V_b").is_array()) {
      volts = body.at("V_b").get<std::vector<double>>();
    } else {
      volts.push_back(body.at("V_b").get<double>());
    }
    const double delta = start_session(state, ControllableInputs::from_array(a), volts);
    resp.body = {{"delta_b", delta}, {"session_id", state.session->session_id}};
  } else if (action == "new-session") {
    new_session(state);
    resp.body = json::object();
  } else if (action == "batch") {
    const PendingBatch* batch = propose(state);
    resp.body = {{"batch", batch ? to_json(*batch, state.config.constraints) : json(nullptr)}};
  } else if (action == "drop") {
    std::size_t idx = 0;
    const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), idx);
    if (res.ec != std::errc() || res.ptr != arg.data() + arg.size()) {
      throw ValidationError("bad candidate index '" + arg + "'");
    }
    drop_candidate(state, idx);
    resp.body = {{"dropped", idx}};
  } else if (action == "results") {
    const auto rows = rows_from(r);
    const IngestReport report = ingest_results(state, rows);
    resp.body = {{"report", to_json(report)}};
    if (report.rejected() > 0) resp.status = 422;
  } else if (action == "finish") {
    resp.body = {{"incumbent", to_json(finish(state))}};
  } else {
    throw NotFound("unknown action '" + action + "'");
  }
  if (state.revision != e->state->revision) {
    save_campaign(state, file_for(id));
    e->state = std::move(state);
  }
  resp.body["revision"] = e->state->revision;
  resp.body["phase"] = std::string(to_string(e->state->phase));
  return resp;
}

Response CampaignService::what_if(const std::string& id, const Request& r) {
  auto e = entry(id);
  CampaignState copy;
  {
    std::unique_lock lock(e->mutex);
    copy = loaded(*e, id);
  }
  const auto rows = rows_from(r);
  const WhatIfResult w = apsbo::what_if(copy, rows);
  json body = {{"report", to_json(w.report)},
               {"incumbent", to_json(w.incumbent)},
               {"phase", std::string(to_string(w.phase))},
               {"revision", copy.revision}};
  body["next_batch"] =
      w.next_batch ? to_json(*w.next_batch, copy.config.constraints) : json(nullptr);
  return {200, body};
}

Response CampaignService::handle(const Request& r) {
  try {
    const auto parts = split_path(r.path);
    if (parts.empty() && r.method == "GET") {
      return {200, {{"service", "apsbo"}, {"config_schema", kConfigSchemaVersion}}};
    }
    if (parts.size() == 1 && parts[0] == "config" && r.method == "GET") {
      return {200, to_json(config_)};
    }
    if (parts.empty() || parts[0] != "campaigns") {
      return error_response(404, "not-found", "no route for " + r.path);
    }
    if (parts.size() == 1) {
      if (r.method == "POST") return create(r);
      if (r.method == "GET") return list();
    } else if (parts.size() == 2 && r.method == "GET") {
      return get(parts[1]);
    } else if (r.method == "POST") {
      const std::string& id = parts[1];
      if (parts.size() == 3 && parts[2] == "whatif") return what_if(id, r);
      if (parts.size() == 3) return mutate(id, r, parts[2], "");
      if (parts.size() == 5 && parts[2] == "batch" && parts[4] == "drop") {
        return mutate(id, r, "drop", parts[3]);
      }
    }
    return error_response(404, "not-found", "no route for " + r.method + " " + r.path);
  } catch (const Error& e) {
    return error_response(status_for(e.category()), to_string(e.category()), e.what());
  } catch (const json::exception& e) {
    return error_response(422, "validation", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  CampaignService& service;
  httplib::Server server;
  explicit Impl(CampaignService& s) : service(s) {}
};

namespace {

std::optional<std::uint64_t> revision_of(const httplib::Request& req) {
  std::string v;
  if (req.has_header("If-Match")) {
    v = req.get_header_value("If-Match");
  } else if (req.has_param("revision")) {
    v = req.get_param_value("revision");
  } else {
    return std::nullopt;
  }
  v.erase(std::remove(v.begin(), v.end(), '"'), v.end());
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ValidationError("bad revision '" + v + "'");
  }
  return out;
}

}  // namespace

HttpServer::HttpServer(CampaignService& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    Response out;
    try {
      Request r{req.method, req.path, req.body, req.get_header_value("Content-Type"),
                revision_of(req)};
      out = impl_->service.handle(r);
    } catch (const Error& e) {
      out = error_response(status_for(e.category()), to_string(e.category()), e.what());
    }
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
    res.set_header("Access-Control-Allow-Origin", "*");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, If-Match");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace apsbo::service
