#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nmdp/choice_model.hpp"
#include "nmdp/sampler.hpp"
#include "nmdp/tetris.hpp"

namespace nmdp::serve {

// Wire protocol: one JSON object per line over a TCP connection.
//
// client -> server
//   {"type":"start","mode":"record"|"mimic","tau_s":t,"blocks":n[,"seed":s]}
//   {"type":"action","rot":r,"col":c[,"seq":k]}
//   {"type":"download"}
// server -> client
//   {"type":"state","seq":k,"board":[[0/1..]..],"piece":p,"legal":[{"rot","col"}..],"deadline_ms":d}
//   {"type":"cleared","rows":n,"seq":k}
//   {"type":"mimic_action","rot":r,"col":c,"seq":k}
//   {"type":"rejected","reason":"deadline"|"illegal","seq":k}
//   {"type":"dataset","lines":[...]}   (JSON Lines of the session dataset)
//   {"type":"end","reason":...,"observations":n}
// "seq" is the block index; an action tagged with an earlier block, or any
// action read after the current deadline, is rejected as late. An illegal
// action is rejected and the current state is sent again with the time left.

struct ServeConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 0;
  int height = tetris::kDefaultHeight;
  int width = tetris::kDefaultWidth;
  std::uint64_t seed = 1;
  /// Completed record sessions are written here as session_<id>.jsonl when set.
  std::optional<std::filesystem::path> out_dir;
  /// Posterior for mimic mode; mimic sessions end with "no_posterior" otherwise.
  std::shared_ptr<const PosteriorSamples> posterior;
  /// Posterior draws used per MAP prediction (evenly thinned).
  int mimic_draws = 200;
  /// Pause between streamed mimic actions.
  int mimic_interval_ms = 0;
  int max_blocks = 100000;
};

struct SessionRecord {
  int id = 0;
  std::string mode;
  double tau_s = 0.0;
  int blocks = 0;
  int late_rejections = 0;
  int illegal_rejections = 0;
  int timeouts = 0;
  Dataset dataset;
};

class Server {
 public:
  explicit Server(ServeConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting in the background; returns the bound port.
  int start();
  void stop();
  int port() const { return port_; }
  /// Blocks until stop() is called from another thread.
  void wait();

  std::vector<SessionRecord> sessions() const;

 private:
  void accept_loop();
  void run_session(int fd, int id);

  ServeConfig config_;
  std::vector<Eigen::VectorXd> mimic_draws_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  mutable std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
  std::vector<SessionRecord> sessions_;
  int next_id_ = 1;
};

/// Blocking line-oriented JSON client used by the scripted players and tests.
class Client {
 public:
  Client() = default;
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void connect(const std::string& host, int port);
  void send(const nlohmann::json& message);
  /// Next message, or nullopt on timeout. Throws if the peer closed.
  std::optional<nlohmann::json> receive(std::chrono::milliseconds timeout);
  void close();
  bool connected() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
  std::string buffer_;
};

/// Reads the dataset carried by a {"type":"dataset"} message.
Dataset dataset_from_message(const nlohmann::json& message);
/// Rebuilds the game state described by a {"type":"state"} message.
tetris::GameState state_from_message(const nlohmann::json& message);

}  // namespace nmdp::serve
