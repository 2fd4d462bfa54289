#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "callipaint/checkpoint.hpp"

namespace callipaint {

struct HttpResult {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServiceConfig {
  std::string checkpoint;
  std::string bind = "127.0.0.1:8080";
  int workers = 2;
  int max_pending = 16;

  // Reads CALLIPAINT_CHECKPOINT, CALLIPAINT_BIND, CALLIPAINT_WORKERS and
  // CALLIPAINT_MAX_PENDING over the defaults above.
  static ServiceConfig from_env();
  void validate() const;
};

// Request handlers as pure functions of (checkpoint, request body). Seeds
// missing from a request are drawn from the system entropy source.
class InferenceService {
 public:
  explicit InferenceService(Checkpoint checkpoint);

  HttpResult health() const;
  HttpResult conditions() const;
  HttpResult handle_sample(const std::string& body) const;
  HttpResult handle_inpaint(const std::string& body) const;

  const Checkpoint& checkpoint() const { return ckpt_; }
  const std::string& model_id() const { return model_id_; }

 private:
  Checkpoint ckpt_;
  NoiseSchedule schedule_;
  std::string model_id_;
};

// FIFO dispatch to a fixed set of workers. At most `workers` jobs run at
// once and at most `max_pending` wait; further submissions are refused.
class JobQueue {
 public:
  JobQueue(int workers, int max_pending);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  std::optional<std::future<HttpResult>> submit(std::function<HttpResult()> job);
  // Finishes queued and running jobs, then joins the workers.
  void shutdown();

  int running() const;
  int pending() const;

 private:
  void loop();

  int max_pending_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::packaged_task<HttpResult()>> queue_;
  std::vector<std::thread> threads_;
  int running_ = 0;
  bool stopping_ = false;
};

class HttpServer {
 public:
  HttpServer(std::shared_ptr<const InferenceService> service, ServiceConfig config);
  ~HttpServer();

  // Binds the configured address; port 0 picks a free port. Throws kIo.
  int bind();
  // Blocks until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loads the checkpoint, binds and serves until SIGINT or SIGTERM.
void serve(const ServiceConfig& config);

}  // namespace callipaint
