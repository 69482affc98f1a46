// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "promptforge/error.hpp"
#include "promptforge/pair_foundry.hpp"

namespace promptforge::foundry {
namespace {

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

HttpTransport default_transport() {
  return [](const EndpointConfig& cfg, const std::map<std::string, std::string>& headers,
            const std::string& body) {
    httplib::Client client(cfg.base_url);
    const auto secs = std::chrono::duration<double>(cfg.timeout_seconds);
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
    client.set_connection_timeout(us);
    client.set_read_timeout(us);
    client.set_write_timeout(us);
    httplib::Headers h(headers.begin(), headers.end());
    HttpResponse r;
    auto res = client.Post(cfg.path, h, body, "application/json");
    if (!res) {
      r.error = httplib::to_string(res.error());
      return r;
    }
    r.status = res->status;
    r.body = res->body;
    return r;
  };
}

ChatClient::ChatClient(EndpointConfig cfg, HttpTransport transport,
                       std::function<void(std::chrono::duration<double>)> sleep)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
  cfg_.validate();
  if (!sleep_) {
    sleep_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

std::size_t ChatClient::attempts() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

std::string ChatClient::complete(std::span<const ChatMessage> messages) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::kMissingApiKey, "environment variable " + cfg_.api_key_env + " is not set");
  }
  for (const auto& m : messages) {
    if (m.content.empty()) throw Error(ErrorCode::kInvalidConfig, "empty chat message");
  }
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    ChatClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  const std::map<std::string, std::string> headers = {
      {"Authorization", std::string("Bearer ") + key}};
  const std::string body = chat_request_body(cfg_, messages).dump();
  HttpResponse last;
  for (int attempt = 0;; ++attempt) {
    {
      std::lock_guard lock(mu_);
      ++attempts_;
    }
    last = transport_(cfg_, headers, body);
    if (last.status >= 200 && last.status < 300) return extract_content(last.body);
    if (!retryable(last.status) || attempt >= cfg_.max_retries) break;
    sleep_(std::chrono::duration<double>(cfg_.backoff_seconds * static_cast<double>(1 << attempt)));
  }
  if (last.status == 429) {
    throw Error(ErrorCode::kRateLimited,
                "rate limited after " + std::to_string(cfg_.max_retries + 1) + " attempts");
  }
  if (last.status == 0) throw Error(ErrorCode::kTransportError, "connection failed: " + last.error);
  throw Error(ErrorCode::kTransportError, "HTTP " + std::to_string(last.status) + ": " + last.body);
}

std::string request_rewrites(const EndpointConfig& cfg, std::span<const ChatMessage> messages) {
  ChatClient client(cfg);
  return client.complete(messages);
}

}  // namespace promptforge::foundry
