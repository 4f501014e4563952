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

#ifndef APSBO_SERVICE_HPP_
#define APSBO_SERVICE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "apsbo/campaign.hpp"
#include "apsbo/config.hpp"

namespace apsbo::service {

struct Request {
  std::string method;  // GET or POST
  std::string path;
  std::string body;
  std::string content_type;
  // Expected revision from an If-Match header or a ?revision= parameter.
  std::optional<std::uint64_t> revision;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

// Campaign registry backed by one JSON file per campaign. Mutations on one
// campaign are serialized; reads share the lock.
class CampaignService {
 public:
  explicit CampaignService(AppConfig config);

  Response handle(const Request& request);

  const AppConfig& config() const { return config_; }

 private:
  struct Entry {
    std::shared_mutex mutex;
    std::optional<CampaignState> state;
  };

  std::shared_ptr<Entry> entry(const std::string& id);
  std::filesystem::path file_for(const std::string& id) const;
  const CampaignState& loaded(Entry& e, const std::string& id);
  std::string next_id();

  Response create(const Request& r);
  Response list();
  Response get(const std::string& id);
  Response mutate(const std::string& id, const Request& r, const std::string& action,
                  const std::string& arg);
  Response what_if(const std::string& id, const Request& r);

  AppConfig config_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
};

nlohmann::json state_view(const CampaignState& state);

// HTTP front end on top of CampaignService.
class HttpServer {
 public:
  explicit HttpServer(CampaignService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace apsbo::service

#endif  // APSBO_SERVICE_HPP_
