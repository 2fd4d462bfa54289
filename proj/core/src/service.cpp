#include "callipaint/service.hpp"

#include <atomic>
#include <csignal>
#include <pthread.h>
#include <cstdlib>
#include <iostream>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "callipaint/base64.hpp"
#include "callipaint/error.hpp"
#include "callipaint/png_io.hpp"
#include "callipaint/repaint.hpp"

namespace callipaint {
namespace {

using nlohmann::json;

// Largest integer a JSON client can round-trip through a double.
constexpr std::uint64_t kMaxClientSeed = (1ull << 53) - 1;

struct BadRequest {
  int status;
  std::string field;
  std::string message;
};

HttpResult json_result(int status, const json& body) {
  return {status, body.dump() + "\n", "application/json"};
}

HttpResult error_result(int status, const std::string& message,
                        const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  return json_result(status, body);
}

json parse_body(const std::string& body) {
  try {
    auto j = json::parse(body);
    if (!j.is_object()) throw BadRequest{400, "body", "request body must be a JSON object"};
    return j;
  } catch (const json::exception& e) {
    throw BadRequest{400, "body", std::string("malformed JSON: ") + e.what()};
  }
}

std::string get_string(const json& j, const std::string& field) {
  const auto it = j.find(field);
  if (it == j.end()) throw BadRequest{400, field, "missing field '" + field + "'"};
  if (!it->is_string()) throw BadRequest{400, field, "field '" + field + "' must be a string"};
  return it->get<std::string>();
}

int get_int(const json& j, const std::string& field, int fallback) {
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_number_integer())
    throw BadRequest{400, field, "field '" + field + "' must be an integer"};
  const auto v = it->get<std::int64_t>();
  if (v < 1 || v > 1000000)
    throw BadRequest{400, field, "field '" + field + "' is out of range"};
  return static_cast<int>(v);
}

std::uint64_t get_seed(const json& j) {
  const auto it = j.find("seed");
  if (it == j.end() || it->is_null()) {
    std::random_device rd;
    const std::uint64_t hi = rd(), lo = rd();
    return ((hi << 32) | lo) & kMaxClientSeed;
  }
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
    throw BadRequest{400, "seed", "field 'seed' must be a non-negative integer"};
  return it->get<std::uint64_t>();
}

int lookup(const std::vector<std::string>& names, const json& j, const std::string& field) {
  const auto name = get_string(j, field);
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw BadRequest{400, field, "unknown " + field + " name '" + name + "'"};
}

ConditionLabel read_condition(const json& j, const Vocabularies& v) {
  ConditionLabel c;
  c.character = lookup(v.character, j, "character");
  c.script = lookup(v.script, j, "script");
  c.style = lookup(v.style, j, "style");
  return c;
}

GrayPng read_png_field(const json& j, const std::string& field, Resolution model) {
  const auto text = get_string(j, field);
  GrayPng png;
  try {
    png = decode_png(base64_decode(text));
  } catch (const Error& e) {
    throw BadRequest{400, field, "field '" + field + "': " + e.what()};
  }
  if (png.resolution.height > model.height || png.resolution.width > model.width)
    throw BadRequest{413, field,
                     "field '" + field + "' is " + to_string(png.resolution) +
                         ", larger than the model resolution " + to_string(model)};
  if (!(png.resolution == model))
    throw BadRequest{400, field,
                     "field '" + field + "' is " + to_string(png.resolution) +
                         ", expected " + to_string(model)};
  return png;
}

std::string encode_image(const GlyphImage& model_range) {
  const auto unit8 = to_unit8(model_range);
  return base64_encode(encode_png({unit8.resolution, to_bytes(unit8)}));
}

template <typename F>
HttpResult guarded(F&& body) {
  try {
    return body();
  } catch (const BadRequest& b) {
    return error_result(b.status, b.message, b.field);
  } catch (const Error& e) {
    return error_result(500, e.what());
  } catch (const std::exception& e) {
    return error_result(500, e.what());
  }
}

std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  require(colon != std::string::npos && colon > 0, ErrorKind::kInvalidArgument,
          "bind address must look like host:port, got '" + bind + "'");
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  require(port >= 0 && port <= 65535, ErrorKind::kInvalidArgument,
          "invalid port in bind address '" + bind + "'");
  return {bind.substr(0, colon), port};
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return (v && *v) ? v : nullptr;
  };
  auto to_int = [](const char* name, const char* v) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(v, &used);
      if (v[used] == '\0') return n;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::kInvalidArgument, std::string(name) + " must be an integer");
  };
  if (auto v = env("CALLIPAINT_CHECKPOINT")) c.checkpoint = v;
  if (auto v = env("CALLIPAINT_BIND")) c.bind = v;
  if (auto v = env("CALLIPAINT_WORKERS")) c.workers = to_int("CALLIPAINT_WORKERS", v);
  if (auto v = env("CALLIPAINT_MAX_PENDING"))
    c.max_pending = to_int("CALLIPAINT_MAX_PENDING", v);
  return c;
}

void ServiceConfig::validate() const {
  require(workers >= 1, ErrorKind::kInvalidArgument, "worker count must be at least 1");
  require(max_pending >= 0, ErrorKind::kInvalidArgument,
          "max pending must be non-negative");
  split_bind(bind);
}

InferenceService::InferenceService(Checkpoint checkpoint)
    : ckpt_(std::move(checkpoint)),
      schedule_(make_schedule(ckpt_.meta.schedule)),
      model_id_(ckpt_.model_id()) {}

HttpResult InferenceService::health() const {
  return json_result(200, {{"status", "ok"}, {"model", model_id_}});
}

HttpResult InferenceService::conditions() const {
  const auto& v = ckpt_.meta.vocab;
  return json_result(200, {{"character", v.character},
                           {"script", v.script},
                           {"style", v.style},
                           {"resolution",
                            {{"height", ckpt_.params.config().resolution.height},
                             {"width", ckpt_.params.config().resolution.width}}},
                           {"steps", schedule_.steps()},
                           {"model", model_id_}});
}

HttpResult InferenceService::handle_sample(const std::string& body) const {
  return guarded([&] {
    const auto j = parse_body(body);
    const auto cond = read_condition(j, ckpt_.meta.vocab);
    const auto seed = get_seed(j);
    SampleResult r;
    try {
      r = sample(ckpt_.params, cond, schedule_, seed);
    } catch (const Error& e) {
      return json_result(500, {{"error", e.what()}, {"seed", seed}});
    }
    return json_result(200, {{"image", encode_image(r.image)},
                             {"seed", seed},
                             {"steps", r.trace.denoise_steps},
                             {"elapsed_ms", r.trace.elapsed_ms},
                             {"model", model_id_}});
  });
}

HttpResult InferenceService::handle_inpaint(const std::string& body) const {
  return guarded([&] {
    const auto j = parse_body(body);
    const Resolution res = ckpt_.params.config().resolution;
    const auto image_png = read_png_field(j, "image", res);
    const auto mask_png = read_png_field(j, "mask", res);
    const auto cond = read_condition(j, ckpt_.meta.vocab);
    InpaintConfig cfg;
    cfg.jump_len = get_int(j, "jump_len", cfg.jump_len);
    cfg.n_resample = get_int(j, "n_resample", cfg.n_resample);
    cfg.seed = get_seed(j);
    if (cfg.jump_len > schedule_.steps())
      throw BadRequest{400, "jump_len",
                       "field 'jump_len' exceeds the schedule length " +
                           std::to_string(schedule_.steps())};
    if (schedule_.steps() % cfg.jump_len != 0)
      throw BadRequest{400, "jump_len",
                       "field 'jump_len' must divide the schedule length " +
                           std::to_string(schedule_.steps())};
    const Mask mask = mask_from_bytes(res, mask_png.bytes);
    const GlyphImage cond_image = to_model(from_bytes(res, image_png.bytes));
    InpaintResult r;
    try {
      r = inpaint(ckpt_.params, cond_image, mask, cond, schedule_, cfg);
    } catch (const Error& e) {
      return json_result(500, {{"error", e.what()}, {"seed", cfg.seed}});
    }
    const auto out = to_bytes(to_unit8(r.image));
    for (std::size_t i = 0; i < out.size(); ++i)
      if (mask.bits[i] == 0 && out[i] != image_png.bytes[i])
        return json_result(500, {{"error", "unmasked pixel changed during inpainting"},
                                 {"seed", cfg.seed}});
    return json_result(200,
                       {{"image", base64_encode(encode_png({res, out}))},
                        {"seed", cfg.seed},
                        {"steps", r.trace.denoise_steps},
                        {"elapsed_ms", r.trace.elapsed_ms},
                        {"model", model_id_}});
  });
}

JobQueue::JobQueue(int workers, int max_pending) : max_pending_(max_pending) {
  require(workers >= 1, ErrorKind::kInvalidArgument, "worker count must be at least 1");
  for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
}

JobQueue::~JobQueue() { shutdown(); }

std::optional<std::future<HttpResult>> JobQueue::submit(std::function<HttpResult()> job) {
  std::packaged_task<HttpResult()> task(std::move(job));
  auto fut = task.get_future();
  {
    std::lock_guard lock(mu_);
    if (stopping_) return std::nullopt;
    // A job only waits when every worker is busy.
    const int idle = static_cast<int>(threads_.size()) - running_;
    const int would_wait = static_cast<int>(queue_.size()) + 1 - idle;
    if (would_wait > max_pending_) return std::nullopt;
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
  return fut;
}

void JobQueue::loop() {
  for (;;) {
    std::packaged_task<HttpResult()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
      ++running_;
    }
    task();
    std::lock_guard lock(mu_);
    --running_;
  }
}

void JobQueue::shutdown() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
}

int JobQueue::running() const {
  std::lock_guard lock(mu_);
  return running_;
}

int JobQueue::pending() const {
  std::lock_guard lock(mu_);
  return static_cast<int>(queue_.size());
}

struct HttpServer::Impl {
  std::shared_ptr<const InferenceService> service;
  ServiceConfig config;
  JobQueue jobs;
  httplib::Server server;

  Impl(std::shared_ptr<const InferenceService> s, ServiceConfig c)
      : service(std::move(s)), config(std::move(c)), jobs(config.workers, config.max_pending) {}

  void reply(httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, r.content_type);
  }

  void queued(httplib::Response& res, std::function<HttpResult()> job) {
    auto fut = jobs.submit(std::move(job));
    if (!fut) {
      reply(res, error_result(429, "generation queue is full"));
      return;
    }
    reply(res, fut->get());
  }
};

HttpServer::HttpServer(std::shared_ptr<const InferenceService> service, ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(service), std::move(config))) {
  impl_->config.validate();
  auto* im = impl_.get();
  const int http_threads = im->config.workers + im->config.max_pending + 4;
  im->server.new_task_queue = [http_threads] { return new httplib::ThreadPool(http_threads); };
  im->server.set_payload_max_length(1 << 20);
  im->server.Get("/api/v1/health", [im](const httplib::Request&, httplib::Response& res) {
    im->reply(res, im->service->health());
  });
  im->server.Get("/api/v1/conditions",
                 [im](const httplib::Request&, httplib::Response& res) {
                   im->reply(res, im->service->conditions());
                 });
  im->server.Post("/api/v1/sample", [im](const httplib::Request& req, httplib::Response& res) {
    im->queued(res, [im, body = req.body] { return im->service->handle_sample(body); });
  });
  im->server.Post("/api/v1/inpaint", [im](const httplib::Request& req, httplib::Response& res) {
    im->queued(res, [im, body = req.body] { return im->service->handle_inpaint(body); });
  });
  im->server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() {
  stop();
  impl_->jobs.shutdown();
}

int HttpServer::bind() {
  const auto [host, port] = split_bind(impl_->config.bind);
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    require(p > 0, ErrorKind::kIo, "cannot bind " + host + " to any port");
    return p;
  }
  require(impl_->server.bind_to_port(host, port), ErrorKind::kIo,
          "cannot bind " + impl_->config.bind);
  return port;
}

void HttpServer::run() {
  impl_->server.listen_after_bind();
  impl_->jobs.shutdown();
}

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void serve(const ServiceConfig& config) {
  config.validate();
  require(!config.checkpoint.empty(), ErrorKind::kInvalidArgument,
          "no checkpoint given (set CALLIPAINT_CHECKPOINT or pass --checkpoint)");
  auto service = std::make_shared<const InferenceService>(load_checkpoint(config.checkpoint));

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpServer server(service, config);
  const int port = server.bind();
  std::cerr << "serving model " << service->model_id() << " on port " << port << " ("
            << config.workers << " workers, " << config.max_pending << " pending)\n";
  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    if (signalled.exchange(true)) return;
    std::cerr << "signal " << sig << " received, finishing in-flight requests\n";
    server.stop();
  });
  server.run();
  if (!signalled.exchange(true)) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
}

}  // namespace callipaint
