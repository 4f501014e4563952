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

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "apsbo/service.hpp"

// After the Eigen users: resolv.h defines a _res macro.
#include "httplib.h"

namespace apsbo::service {
namespace {

using nlohmann::json;

AppConfig test_config(const std::string& dir_name) {
  AppConfig c = default_config();
  c.setup.candidates.count = 1500;
  c.setup.models.restarts = 1;
  c.setup.models.max_iterations = 60;
  c.paths.campaign_dir = std::filesystem::temp_directory_path() / dir_name;
  std::filesystem::remove_all(c.paths.campaign_dir);
  return c;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Results CSV giving every candidate of the batch the same in-band values.
std::string results_csv(const json& batch) {
  std::ostringstream os;
  os << "batch_id,candidate_index,microhardness_HV,porosity_pct,dropped_flag\n";
  const auto n = batch["proposal"]["candidates"].size();
  for (std::size_t i = 0; i < n; ++i) {
    os << batch["batch_id"].get<std::uint64_t>() << ',' << i << ",650,7,0\n";
  }
  return os.str();
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = test_config("apsbo_service_test");
    service_ = std::make_unique<CampaignService>(config_);
  }
  void TearDown() override { std::filesystem::remove_all(config_.paths.campaign_dir); }

  Response call(const std::string& method, const std::string& path, const json& body = {},
                std::optional<std::uint64_t> revision = std::nullopt) {
    return service_->handle(
        {method, path, body.is_null() ? "" : body.dump(), "application/json", revision});
  }

  // Creates a campaign from a 20-point simulated design and ignites it.
  std::string ready_campaign() {
    const Response c =
        call("POST", "/campaigns", {{"seed", 3}, {"simulated_initialization", {{"n_init", 20}}}});
    EXPECT_EQ(c.status, 201);
    const std::string id = c.body["id"];
    const Response g = call("GET", "/campaigns/" + id);
    const json x = g.body["history"][0]["x"];
    const Response s = call("POST", "/campaigns/" + id + "/session",
                            {{"x_c_b", x}, {"V_b", x["voltage"].get<double>() + 2.0}});
    EXPECT_EQ(s.status, 200) << s.body.dump();
    EXPECT_NEAR(s.body["delta_b"].get<double>(), 2.0, 0.3);
    return id;
  }

  AppConfig config_;
  std::unique_ptr<CampaignService> service_;
};

TEST_F(ServiceTest, RootAndConfig) {
  EXPECT_EQ(call("GET", "/").status, 200);
  const Response c = call("GET", "/config");
  EXPECT_EQ(c.status, 200);
  EXPECT_EQ(c.body["optimizer"]["candidates"]["count"], 1500);
}

TEST_F(ServiceTest, LifecycleThroughPhases) {
  const std::string id = ready_campaign();
  const std::string base = "/campaigns/" + id;
  Response b = call("POST", base + "/batch");
  ASSERT_EQ(b.status, 200) << b.body.dump();
  EXPECT_EQ(b.body["phase"], "AwaitingResults");
  const json batch = b.body["batch"];
  EXPECT_EQ(batch["proposal"]["candidates"].size(), 5u);

  EXPECT_EQ(call("POST", base + "/batch").status, 409);

  const std::uint64_t rev = b.body["revision"];
  Response r = service_->handle(
      {"POST", base + "/results", results_csv(batch), "text/csv", rev});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["report"]["accepted"], 5);
  EXPECT_TRUE(r.body["report"]["batch_complete"].get<bool>());
  EXPECT_EQ(r.body["revision"], rev + 1);

  const Response g = call("GET", base);
  EXPECT_EQ(g.body["history"].size(), 25u);
  EXPECT_FALSE(g.body["incumbent"]["point"].is_null());
  // The state on disk matches the served state.
  EXPECT_EQ(json::parse(file_bytes(config_.paths.campaign_dir / (id + ".json")))["revision"],
            g.body["revision"]);

  const Response f = call("POST", base + "/finish");
  EXPECT_EQ(f.status, 200);
  EXPECT_EQ(f.body["phase"], "Terminated");
  EXPECT_EQ(call("POST", base + "/batch").status, 409);

  const Response l = call("GET", "/campaigns");
  EXPECT_EQ(l.body["campaigns"], json::array({id}));
}

TEST_F(ServiceTest, DropEndpoint) {
  const std::string base = "/campaigns/" + ready_campaign();
  call("POST", base + "/batch");
  const Response d = call("POST", base + "/batch/1/drop");
  EXPECT_EQ(d.status, 200) << d.body.dump();
  EXPECT_EQ(d.body["dropped"], 1);
  EXPECT_EQ(call("POST", base + "/batch/9/drop").status, 422);
  EXPECT_EQ(call("POST", base + "/batch/x/drop").status, 422);
}

TEST_F(ServiceTest, WhatIfLeavesStateUntouched) {
  const std::string id = ready_campaign();
  const std::string base = "/campaigns/" + id;
  const json batch = call("POST", base + "/batch").body["batch"];
  const auto path = config_.paths.campaign_dir / (id + ".json");
  const std::string before_file = file_bytes(path);
  const json before = call("GET", base).body;

  const Response w = service_->handle(
      {"POST", base + "/whatif", results_csv(batch), "text/csv", std::nullopt});
  ASSERT_EQ(w.status, 200) << w.body.dump();
  EXPECT_EQ(w.body["report"]["accepted"], 5);
  EXPECT_FALSE(w.body["incumbent"]["point"].is_null());

  EXPECT_EQ(call("GET", base).body, before);
  EXPECT_EQ(file_bytes(path), before_file);
  // A fresh service reading the file sees the same state.
  CampaignService reloaded(config_);
  EXPECT_EQ(reloaded.handle({"GET", base, "", "", std::nullopt}).body, before);
}

TEST_F(ServiceTest, StatusMapping) {
  EXPECT_EQ(call("GET", "/campaigns/nope").status, 404);
  EXPECT_EQ(call("GET", "/campaigns/../etc").status, 404);
  EXPECT_EQ(call("GET", "/elsewhere").status, 404);
  const std::string base = "/campaigns/" + ready_campaign();
  EXPECT_EQ(call("POST", base + "/unknown").status, 404);

  // Phase violation: results before any batch.
  Response r = service_->handle({"POST", base + "/results",
                                 "batch_id,candidate_index,microhardness_HV,porosity_pct\n"
                                 "1,0,650,7\n",
                                 "text/csv", std::nullopt});
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["error"]["category"], "phase-violation");

  // Stale revision.
  r = call("POST", base + "/batch", {}, 0);
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body["error"]["category"], "stale-revision");

  // Validation: malformed body and malformed rows.
  EXPECT_EQ(service_->handle({"POST", "/campaigns", "{", "application/json", std::nullopt})
                .status,
            422);
  const json batch = call("POST", base + "/batch").body["batch"];
  std::string csv = results_csv(batch);
  csv += std::to_string(batch["batch_id"].get<std::uint64_t>()) + ",0,abc,7,0\n";
  r = service_->handle({"POST", base + "/results", csv, "text/csv", std::nullopt});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body["report"]["rejected"], 1);
  EXPECT_EQ(r.body["report"]["accepted"], 5);
}

TEST_F(ServiceTest, ConcurrentSameRevisionIngestOneWins) {
  const std::string base = "/campaigns/" + ready_campaign();
  const Response b = call("POST", base + "/batch");
  const std::uint64_t rev = b.body["revision"];
  const std::string csv = results_csv(b.body["batch"]);
  std::atomic<int> ok{0};
  std::atomic<int> conflict{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      const Response r = service_->handle({"POST", base + "/results", csv, "text/csv", rev});
      if (r.status == 200) ++ok;
      if (r.status == 409) ++conflict;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(ok.load(), 1);
  EXPECT_EQ(conflict.load(), 3);
  EXPECT_EQ(call("GET", base).body["revision"], rev + 1);
}

TEST(HttpServer, EndToEndOverSocket) {
  const AppConfig config = test_config("apsbo_http_test");
  CampaignService service(config);
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread worker([&] { server.serve(); });

  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(120, 0);
  auto created = cli.Post("/campaigns", R"({"seed": 1, "simulated_initialization": {"n_init": 20}})",
                          "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");
  const std::string id = json::parse(created->body)["id"];
  const std::string base = "/campaigns/" + id;

  const json state = json::parse(cli.Get(base.c_str())->body);
  EXPECT_EQ(state["phase"], "NeedsIgnition");
  const json x = state["history"][0]["x"];
  const json session = {{"x_c_b", x}, {"V_b", json::array({x["voltage"], x["voltage"]})}};
  auto s = cli.Post((base + "/session").c_str(), session.dump(), "application/json");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->status, 200) << s->body;

  auto b = cli.Post((base + "/batch").c_str(), "", "application/json");
  ASSERT_TRUE(b);
  ASSERT_EQ(b->status, 200) << b->body;
  const json batch = json::parse(b->body);
  EXPECT_EQ(batch["phase"], "AwaitingResults");

  // Stale If-Match header.
  httplib::Headers stale{{"If-Match", "\"0\""}};
  auto r = cli.Post((base + "/results").c_str(), stale, results_csv(batch["batch"]), "text/csv");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 409);

  httplib::Headers fresh{{"If-Match", std::to_string(batch["revision"].get<std::uint64_t>())}};
  r = cli.Post((base + "/results").c_str(), fresh, results_csv(batch["batch"]), "text/csv");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["report"]["accepted"], 5);

  auto missing = cli.Get("/campaigns/c9999");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto options = cli.Options("/campaigns");
  ASSERT_TRUE(options);
  EXPECT_EQ(options->status, 204);

  server.stop();
  worker.join();
  std::filesystem::remove_all(config.paths.campaign_dir);
}

}  // namespace
}  // namespace apsbo::service
