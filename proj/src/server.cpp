#include "c3det/server.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

namespace c3det {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, {{"error", message}});
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        fail(res, 400, std::string("malformed JSON: ") + e.what());
        return std::nullopt;
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string new_id() {
    std::random_device rd;
    const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                            static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(splitmix64(v)));
    return buf;
}

void append_line_synced(const fs::path& file, const std::string& line) {
    const int fd = ::open(file.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw Error("server", "cannot open event log " + file.string());
    const std::string rec = line + "\n";
    std::size_t off = 0;
    while (off < rec.size()) {
        const ssize_t n = ::write(fd, rec.data() + off, rec.size() - off);
        if (n <= 0) {
            ::close(fd);
            throw Error("server", "cannot append to event log " + file.string());
        }
        off += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

/// Complete lines only: a torn final record from a crash is ignored.
std::vector<json> read_events(const fs::path& file) {
    std::vector<json> out;
    if (!fs::exists(file)) return out;
    const std::string text = read_file(file);
    std::size_t start = 0;
    while (true) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos) break;
        const auto line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception&) {
        }
    }
    return out;
}

json box_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

json detections_json(const std::vector<Detection>& dets) {
    json a = json::array();
    for (const auto& d : dets) a.push_back({{"bbox", box_json(d.box)}, {"class_id", d.class_id}, {"score", d.score}});
    return a;
}

}  // namespace

ServerConfig server_config_from_env() {
    ServerConfig c;
    if (const char* p = std::getenv("C3DET_PORT")) {
        try {
            c.port = std::stoi(p);
        } catch (const std::exception&) {
            throw Error("server", std::string("C3DET_PORT is not a port number: ") + p);
        }
    }
    if (const char* p = std::getenv("C3DET_CHECKPOINT")) c.checkpoint = p;
    if (const char* p = std::getenv("C3DET_DATA")) c.data_root = p;
    if (const char* p = std::getenv("C3DET_STATE")) c.state_root = p;
    return c;
}

json to_json(const ServerConfig& c) {
    return {{"host", c.host},
            {"port", c.port},
            {"data_root", c.data_root.string()},
            {"checkpoint", c.checkpoint.string()},
            {"state_root", c.state_root.string()},
            {"queue_depth", c.queue_depth}};
}

InferenceQueue::InferenceQueue(int depth) : depth_(depth), worker_([this] { run(); }) {}

InferenceQueue::~InferenceQueue() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

std::optional<std::future<json>> InferenceQueue::submit(std::function<json()> job) {
    std::lock_guard lk(mu_);
    if (pending_.load() >= depth_) return std::nullopt;
    std::packaged_task<json()> task(std::move(job));
    auto fut = task.get_future();
    jobs_.push_back(std::move(task));
    ++pending_;
    cv_.notify_one();
    return fut;
}

void InferenceQueue::run() {
    while (true) {
        std::packaged_task<json()> task;
        {
            std::unique_lock lk(mu_);
            cv_.wait(lk, [&] { return stop_ || !jobs_.empty(); });
            if (jobs_.empty()) return;
            task = std::move(jobs_.front());
            jobs_.pop_front();
        }
        task();
        --pending_;
    }
}

const std::vector<std::string>& event_types() {
    static const std::vector<std::string> t = {"click_hint", "draw_box", "delete_box", "class_change", "submit"};
    return t;
}

AnnotationServer::AnnotationServer(ServerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.data_root.empty()) throw Error("server", "no dataset root (set --data or C3DET_DATA)");
    if (cfg_.queue_depth < 1) throw Error("server", "queue depth must be positive");
    meta_ = load_meta(cfg_.data_root);
    if (cfg_.state_root.empty()) cfg_.state_root = cfg_.data_root / "sessions";
    fs::create_directories(cfg_.state_root);
    if (!cfg_.checkpoint.empty()) {
        detector_ = std::make_unique<Detector>(Detector::load(cfg_.checkpoint, meta_.classes));
        char buf[20];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(read_file(cfg_.checkpoint))));
        model_version_ = cfg_.checkpoint.filename().string() + "@" + buf;
    }
    queue_ = std::make_unique<InferenceQueue>(cfg_.queue_depth);
    http_ = std::make_unique<httplib::Server>();
    load_sessions();
    routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::listen() {
    if (!http_->listen(cfg_.host, cfg_.port))
        throw Error("server", "cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port));
}

int AnnotationServer::start_background() {
    const int port = http_->bind_to_any_port(cfg_.host);
    if (port <= 0) throw Error("server", "cannot bind " + cfg_.host);
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    return port;
}

void AnnotationServer::stop() {
    if (http_) http_->stop();
    if (thread_.joinable()) thread_.join();
}

fs::path AnnotationServer::session_dir(const std::string& id) const { return cfg_.state_root / id; }

void AnnotationServer::load_sessions() {
    for (const auto& entry : fs::directory_iterator(cfg_.state_root)) {
        const auto info_file = entry.path() / "session.json";
        if (!entry.is_directory() || !fs::exists(info_file)) continue;
        auto s = std::make_shared<Session>();
        try {
            s->info = json::parse(read_file(info_file));
        } catch (const json::exception&) {
            continue;
        }
        for (const auto& e : read_events(entry.path() / "events.jsonl"))
            s->last_t_ms = std::max<std::int64_t>(s->last_t_ms, e.value("t_ms", std::int64_t{-1}));
        sessions_[entry.path().filename().string()] = s;
    }
}

std::shared_ptr<AnnotationServer::Session> AnnotationServer::find_session(const std::string& id) {
    std::lock_guard lk(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::optional<std::pair<Split, std::string>> AnnotationServer::locate_image(const std::string& image_id,
                                                                            const std::string& dataset) const {
    if (image_id.empty() || image_id.find('/') != std::string::npos || image_id.find("..") != std::string::npos)
        return std::nullopt;
    for (Split s : {Split::Test, Split::Val, Split::Train}) {
        if (!dataset.empty() && dataset != split_name(s)) continue;
        if (fs::exists(cfg_.data_root / "labels" / split_name(s) / (image_id + ".json")))
            return std::make_pair(s, image_id);
    }
    return std::nullopt;
}

void AnnotationServer::routes() {
    auto& srv = *http_;

    srv.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, {{"status", "ok"}, {"model_loaded", model_loaded()}, {"model_version", model_version_}});
    });

    srv.Get("/api/v1/meta", [this](const httplib::Request&, httplib::Response& res) {
        json splits = json::array();
        for (Split s : {Split::Train, Split::Val, Split::Test})
            if (fs::exists(cfg_.data_root / "labels" / split_name(s))) splits.push_back(split_name(s));
        reply(res, 200, {{"classes", meta_.classes.names()}, {"datasets", splits}, {"model_version", model_version_}});
    });

    srv.Get(R"(/api/v1/images/([^/]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto loc = locate_image(req.matches[1]);
        if (!loc) return fail(res, 404, "unknown image");
        const auto file = cfg_.data_root / "images" / split_name(loc->first) / (loc->second + ".png");
        res.set_content(read_file(file), "image/png");
    });

    srv.Post("/api/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (!body) return;
        const std::string dataset = body->value("dataset", std::string());
        const std::string mode = body->value("mode", std::string("assisted"));
        if (mode != "manual" && mode != "assisted") return fail(res, 400, "mode must be manual or assisted");
        if (dataset.empty() || dataset.find('/') != std::string::npos ||
            !fs::exists(cfg_.data_root / "labels" / dataset))
            return fail(res, 404, "unknown dataset '" + dataset + "'");
        auto s = std::make_shared<Session>();
        std::string id;
        {
            std::lock_guard lk(sessions_mu_);
            do id = new_id();
            while (sessions_.count(id) || fs::exists(session_dir(id)));
            s->info = {{"session_id", id}, {"dataset", dataset}, {"mode", mode}, {"created_at", utc_now()}};
            fs::create_directories(session_dir(id) / "annotations");
            write_file_atomic(session_dir(id) / "session.json", s->info.dump(2) + "\n");
            write_file_atomic(session_dir(id) / "events.jsonl", "");
            sessions_[id] = s;
        }
        reply(res, 201, {{"session_id", id}});
    });

    srv.Get(R"(/api/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "unknown session");
        std::lock_guard lk(s->mu);
        reply(res, 200, s->info);
    });

    srv.Post("/api/v1/infer", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (!body) return;
        if (!detector_) return fail(res, 503, "model not loaded");
        const std::string image_id = body->value("image_id", std::string());
        const auto loc = locate_image(image_id, body->value("dataset", std::string()));
        if (!loc) return fail(res, 404, "unknown image '" + image_id + "'");
        std::vector<UserInput> inputs;
        try {
            for (const auto& u : body->value("user_inputs", json::array())) {
                UserInput in;
                in.x = u.at("x").get<double>();
                in.y = u.at("y").get<double>();
                in.class_id = u.at("class_id").get<int>();
                if (!meta_.classes.valid(in.class_id))
                    return fail(res, 400, "class_id " + std::to_string(in.class_id) + " is not in [0," +
                                              std::to_string(meta_.classes.size()) + ")");
                if (!(in.x >= 0 && in.x <= meta_.width && in.y >= 0 && in.y <= meta_.height))
                    return fail(res, 400, "user input lies outside the image");
                inputs.push_back(in);
            }
        } catch (const json::exception& e) {
            return fail(res, 400, std::string("bad user_inputs: ") + e.what());
        }
        const auto t0 = std::chrono::steady_clock::now();
        auto fut = queue_->submit([this, loc, inputs] {
            const auto img = load_image(cfg_.data_root, loc->first, loc->second, meta_);
            return detections_json(detector_->detect(img.pixels, inputs));
        });
        if (!fut) return fail(res, 429, "inference queue is full");
        json dets;
        try {
            dets = fut->get();
        } catch (const std::exception& e) {
            return fail(res, 500, e.what());
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        reply(res, 200, {{"detections", dets}, {"latency_ms", ms}, {"model_version", model_version_}});
    });

    srv.Put(R"(/api/v1/sessions/([^/]+)/annotations/([^/]+))", [this](const httplib::Request& req,
                                                                       httplib::Response& res) {
        auto s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "unknown session");
        const std::string image_id = req.matches[2];
        std::lock_guard lk(s->mu);
        const auto loc = locate_image(image_id, s->info.value("dataset", std::string()));
        if (!loc) return fail(res, 404, "unknown image '" + image_id + "'");
        const auto body = parse_body(req, res);
        if (!body) return;
        json boxes = json::array();
        try {
            for (const auto& b : body->at("boxes")) {
                const auto bb = b.at("bbox").get<std::vector<double>>();
                const int cls = b.at("class_id").get<int>();
                if (bb.size() != 4) return fail(res, 422, "bbox needs four numbers");
                const Box box{bb[0], bb[1], bb[2], bb[3]};
                if (!box.valid()) return fail(res, 422, "box needs x_min < x_max and y_min < y_max");
                if (box.x_min < 0 || box.y_min < 0 || box.x_max > meta_.width || box.y_max > meta_.height)
                    return fail(res, 422, "box lies outside the image");
                if (!meta_.classes.valid(cls)) return fail(res, 422, "unknown class_id " + std::to_string(cls));
                boxes.push_back({{"bbox", box_json(box)}, {"class_id", cls}});
            }
        } catch (const json::exception& e) {
            return fail(res, 422, std::string("bad boxes: ") + e.what());
        }
        const auto dir = session_dir(req.matches[1]) / "annotations";
        const auto file = dir / (image_id + ".json");
        if (fs::exists(file)) {
            write_file_atomic(dir / (image_id + ".json.bak"), read_file(file));
        }
        write_file_atomic(file, json({{"image_id", image_id}, {"boxes", boxes}}).dump(2) + "\n");
        res.status = 204;
    });

    srv.Get(R"(/api/v1/sessions/([^/]+)/annotations/([^/]+))", [this](const httplib::Request& req,
                                                                       httplib::Response& res) {
        auto s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "unknown session");
        const std::string image_id = req.matches[2];
        std::lock_guard lk(s->mu);
        if (!locate_image(image_id, s->info.value("dataset", std::string())))
            return fail(res, 404, "unknown image '" + image_id + "'");
        const auto file = session_dir(req.matches[1]) / "annotations" / (image_id + ".json");
        if (!fs::exists(file)) return reply(res, 200, {{"image_id", image_id}, {"boxes", json::array()}});
        reply(res, 200, json::parse(read_file(file)));
    });

    srv.Post(R"(/api/v1/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        auto s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "unknown session");
        const auto body = parse_body(req, res);
        if (!body) return;
        const std::string type = body->value("type", std::string());
        const auto& types = event_types();
        if (std::find(types.begin(), types.end(), type) == types.end())
            return fail(res, 422, "unknown event type '" + type + "'");
        if (!body->contains("t_ms") || !(*body)["t_ms"].is_number_integer() || (*body)["t_ms"].get<std::int64_t>() < 0)
            return fail(res, 422, "t_ms must be a non-negative integer");
        const auto t_ms = (*body)["t_ms"].get<std::int64_t>();
        std::lock_guard lk(s->mu);
        if (t_ms < s->last_t_ms)
            return fail(res, 422, "t_ms " + std::to_string(t_ms) + " precedes the previous event at " +
                                      std::to_string(s->last_t_ms));
        const json rec = {{"type", type}, {"t_ms", t_ms}, {"payload", body->value("payload", json::object())}};
        append_line_synced(session_dir(req.matches[1]) / "events.jsonl", rec.dump());
        s->last_t_ms = t_ms;
        reply(res, 202, {{"accepted", true}});
    });

    srv.Get(R"(/api/v1/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
        auto s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "unknown session");
        std::lock_guard lk(s->mu);
        const auto dir = session_dir(req.matches[1]);
        json counts = json::object();
        for (const auto& t : event_types()) counts[t] = 0;
        std::int64_t elapsed = 0;
        const auto events = read_events(dir / "events.jsonl");
        for (const auto& e : events) {
            counts[e.value("type", std::string())] = counts.value(e.value("type", std::string()), 0) + 1;
            elapsed = std::max<std::int64_t>(elapsed, e.value("t_ms", std::int64_t{0}));
        }
        json annotations = json::object();
        if (fs::exists(dir / "annotations")) {
            std::vector<fs::path> files;
            for (const auto& f : fs::directory_iterator(dir / "annotations"))
                if (f.path().extension() == ".json") files.push_back(f.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const json snap = json::parse(read_file(f));
                json boxes = json::array();
                for (auto b : snap.at("boxes")) {
                    b["score"] = 1.0;
                    boxes.push_back(b);
                }
                annotations[f.stem().string()] = boxes;
            }
        }
        reply(res, 200, {{"session", s->info},
                         {"annotations", annotations},
                         {"stats", {{"counts", counts}, {"events", events.size()}, {"elapsed_ms", elapsed}}}});
    });

    srv.Get("/api/v1/openapi", [](const httplib::Request&, httplib::Response& res) {
        const json box = {{"type", "array"}, {"items", {{"type", "number"}}}, {"description", "[x_min,y_min,x_max,y_max] in pixels"}};
        const json spec = {
            {"openapi", "3.0.0"},
            {"info", {{"title", "c3det annotation service"}, {"version", "1"}}},
            {"paths",
             {{"/api/v1/sessions",
               {{"post",
                 {{"summary", "Create a session"},
                  {"requestBody", {{"dataset", "split name of the served dataset"}, {"mode", "manual | assisted"}}},
                  {"responses", {{"201", "{session_id}"}, {"404", "unknown dataset"}}}}}}},
              {"/api/v1/infer",
               {{"post",
                 {{"summary", "Detect objects given user inputs"},
                  {"requestBody", {{"image_id", "string"}, {"user_inputs", "[{x, y, class_id}]"}}},
                  {"responses",
                   {{"200", "{detections:[{bbox, class_id, score}], latency_ms, model_version}"},
                    {"400", "class_id out of range"},
                    {"404", "unknown image"},
                    {"429", "inference queue full"},
                    {"503", "model not loaded"}}}}}}},
              {"/api/v1/sessions/{id}/annotations/{image_id}",
               {{"put",
                 {{"requestBody", {{"boxes", "[{bbox, class_id}]"}}},
                  {"responses", {{"204", "stored"}, {"404", "unknown session or image"}, {"422", "invalid box"}}}}},
                {"get", {{"responses", {{"200", "{image_id, boxes}"}}}}}}},
              {"/api/v1/sessions/{id}/events",
               {{"post",
                 {{"requestBody",
                   {{"type", "click_hint | draw_box | delete_box | class_change | submit"},
                    {"t_ms", "integer ms since session start, non-decreasing"},
                    {"payload", "object"}}},
                  {"responses", {{"202", "appended"}, {"404", "unknown session"}, {"422", "bad type or t_ms regression"}}}}}}},
              {"/api/v1/sessions/{id}/export",
               {{"get",
                 {{"responses",
                   {{"200",
                     {{"session", "{session_id, dataset, mode, created_at}"},
                      {"annotations", "{image_id: [{bbox, class_id, score}]}, score always 1.0"},
                      {"stats", "{counts: {event type: n}, events: n, elapsed_ms: largest t_ms}"}}}}}}}}},
              {"/api/v1/images/{image_id}.png", {{"get", {{"responses", {{"200", "whole image"}}}}}}},
              {"/api/v1/meta", {{"get", {{"responses", {{"200", "{classes, datasets, model_version}"}}}}}}}}},
            {"components", {{"bbox", box}}}};
        reply(res, 200, spec);
    });
}

}  // namespace c3det
