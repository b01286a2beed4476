#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "c3det/core/dataset.hpp"
#include "c3det/model/detector.hpp"

namespace httplib {
class Server;
}

namespace c3det {

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_root;
    std::filesystem::path checkpoint;  // empty: inference answers 503
    std::filesystem::path state_root;  // default: <data_root>/sessions
    int queue_depth = 8;
};

/// C3DET_PORT, C3DET_CHECKPOINT, C3DET_DATA, C3DET_STATE.
ServerConfig server_config_from_env();
nlohmann::json to_json(const ServerConfig& c);

/// One worker draining a bounded FIFO of jobs. submit() refuses work when
/// `depth` jobs are already queued or running.
class InferenceQueue {
public:
    explicit InferenceQueue(int depth);
    ~InferenceQueue();
    InferenceQueue(const InferenceQueue&) = delete;
    InferenceQueue& operator=(const InferenceQueue&) = delete;

    std::optional<std::future<nlohmann::json>> submit(std::function<nlohmann::json()> job);
    int pending() const noexcept { return pending_.load(); }

private:
    void run();

    int depth_;
    std::atomic<int> pending_{0};
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::packaged_task<nlohmann::json()>> jobs_;
    bool stop_ = false;
    std::thread worker_;
};

/// Event kinds accepted by the event log.
const std::vector<std::string>& event_types();

/// HTTP annotation service. Sessions, annotation snapshots and event logs
/// live as flat files under `state_root`.
class AnnotationServer {
public:
    explicit AnnotationServer(ServerConfig cfg);
    ~AnnotationServer();

    /// Blocks serving on cfg.host:cfg.port.
    void listen();
    /// Binds an ephemeral port and serves from a background thread.
    int start_background();
    void stop();

    bool model_loaded() const noexcept { return detector_ != nullptr; }
    const std::string& model_version() const noexcept { return model_version_; }
    /// Runs `job` through the inference queue; exposed for tests.
    InferenceQueue& queue() noexcept { return *queue_; }

private:
    struct Session {
        std::mutex mu;
        nlohmann::json info;
        std::int64_t last_t_ms = -1;
    };

    void routes();
    void load_sessions();
    std::shared_ptr<Session> find_session(const std::string& id);
    std::optional<std::pair<Split, std::string>> locate_image(const std::string& image_id,
                                                              const std::string& dataset = "") const;
    std::filesystem::path session_dir(const std::string& id) const;

    ServerConfig cfg_;
    DatasetMeta meta_;
    std::unique_ptr<Detector> detector_;
    std::string model_version_;
    std::unique_ptr<InferenceQueue> queue_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace c3det
