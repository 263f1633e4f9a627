#include "nmdp/serve.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

namespace nmdp::serve {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

namespace {

struct PeerClosed : Error {
  PeerClosed() : Error("serve: connection closed") {}
};

/// Ends the session with {"type":"end","reason":"protocol_error","detail":...}.
struct ProtocolError : Error {
  std::string code;
  explicit ProtocolError(std::string c) : Error("serve: protocol error: " + c), code(std::move(c)) {}
};

void send_line(int fd, const std::string& text) {
  std::string line = text;
  line.push_back('\n');
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::send(fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw PeerClosed();
    }
    sent += static_cast<std::size_t>(n);
  }
}

/// Pulls the next newline-terminated line out of `buffer`, reading from fd
/// until `deadline`. Returns nullopt on timeout.
std::optional<std::string> read_line(int fd, std::string& buffer, Clock::time_point deadline) {
  for (;;) {
    const auto pos = buffer.find('\n');
    if (pos != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return std::nullopt;
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 1000 * 60 * 60)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw PeerClosed();
    }
    if (ready == 0) continue;
    char chunk[4096];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw PeerClosed();
    buffer.append(chunk, static_cast<std::size_t>(n));
    if (buffer.size() > (1u << 22)) throw ProtocolError("line_too_long");
  }
}

json parse_message(const std::string& line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::exception&) {
    throw ProtocolError("bad_json");
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) throw ProtocolError("missing_type");
  return msg;
}

json dataset_message(const Dataset& data) {
  std::ostringstream out;
  write_dataset(data, out);
  json lines = json::array();
  std::istringstream in(out.str());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(json::parse(line));
  }
  return {{"type", "dataset"}, {"lines", std::move(lines)}};
}

json legal_json(const std::vector<tetris::TetrisAction>& legal) {
  json out = json::array();
  for (const auto& a : legal) out.push_back({{"rot", a.rotation}, {"col", a.column}});
  return out;
}

class Session {
 public:
  Session(int fd, int id, const ServeConfig& config, const std::vector<Eigen::VectorXd>& draws)
      : fd_(fd), config_(config), draws_(draws) {
    record_.id = id;
  }

  /// Plays the session; `on_complete` receives the record once the game is
  /// over, before the client is told.
  void run(const std::function<void(const SessionRecord&)>& on_complete);

 private:
  json next_message(Clock::time_point deadline, bool& timed_out);
  void play_record(std::uint64_t seed);
  void play_mimic(std::uint64_t seed);
  void after_game();
  /// Resets the board when the game is over. Returns true if it did.
  bool ensure_playable(tetris::GameState& state);
  void send(const json& msg) { send_line(fd_, msg.dump()); }
  json state_message(const tetris::GameState& state, const std::vector<tetris::TetrisAction>& legal, int seq,
                     long deadline_ms) const;

  int fd_;
  const ServeConfig& config_;
  const std::vector<Eigen::VectorXd>& draws_;
  std::string buffer_;
  SessionRecord record_;
  json prev_ = nullptr;
  bool restarted_ = false;
  int restarts_ = 0;
};

json Session::next_message(Clock::time_point deadline, bool& timed_out) {
  auto line = read_line(fd_, buffer_, deadline);
  timed_out = !line.has_value();
  if (timed_out) return nullptr;
  return parse_message(*line);
}

json Session::state_message(const tetris::GameState& state, const std::vector<tetris::TetrisAction>& legal,
                            int seq, long deadline_ms) const {
  json msg = {{"type", "state"},          {"seq", seq},
              {"board", state.board.to_bits()}, {"piece", state.piece},
              {"legal", legal_json(legal)}, {"deadline_ms", deadline_ms}};
  if (restarted_) msg["restart"] = true;
  if (!prev_.is_null()) msg["prev"] = prev_;
  return msg;
}

bool Session::ensure_playable(tetris::GameState& state) {
  const tetris::TetrisAction fall = tetris::default_action(state);
  if (!state.terminated && tetris::placement_fits(state.board, state.piece, fall)) return false;
  // No room for the untouched fall: the game is lost and a fresh board starts
  // with the same piece so the block sequence is unaffected.
  state = {tetris::Board(config_.height, config_.width), state.piece, false};
  ++restarts_;
  return true;
}

void Session::run(const std::function<void(const SessionRecord&)>& on_complete) {
  const auto start_deadline = Clock::now() + std::chrono::seconds(60);
  bool timed_out = false;
  json start = next_message(start_deadline, timed_out);
  if (timed_out) throw ProtocolError("no_start");
  if (start["type"] != "start") throw ProtocolError("expected_start");
  if (!start.contains("mode") || !start["mode"].is_string()) throw ProtocolError("bad_mode");
  record_.mode = start["mode"].get<std::string>();
  if (record_.mode != "record" && record_.mode != "mimic") throw ProtocolError("bad_mode");
  if (!start.contains("blocks") || !start["blocks"].is_number_integer()) throw ProtocolError("bad_blocks");
  record_.blocks = start["blocks"].get<int>();
  if (record_.blocks < 1 || record_.blocks > config_.max_blocks) throw ProtocolError("bad_blocks");
  if (record_.mode == "record") {
    if (!start.contains("tau_s") || !start["tau_s"].is_number()) throw ProtocolError("bad_tau");
    record_.tau_s = start["tau_s"].get<double>();
    if (!(record_.tau_s > 0.0) || !std::isfinite(record_.tau_s)) throw ProtocolError("bad_tau");
  }
  std::uint64_t seed = config_.seed + static_cast<std::uint64_t>(record_.id);
  if (start.contains("seed")) {
    if (!start["seed"].is_number_unsigned()) throw ProtocolError("bad_seed");
    seed = start["seed"].get<std::uint64_t>();
  }

  record_.dataset.mode = Mode::basis;
  record_.dataset.dim = 3;
  if (record_.mode == "record") {
    play_record(seed);
  } else {
    if (draws_.empty()) {
      send({{"type", "end"}, {"reason", "no_posterior"}, {"observations", 0}});
      return;
    }
    play_mimic(seed);
  }
  record_.dataset.metadata = {{"source", "session"},
                              {"env", "tetris"},
                              {"session", record_.id},
                              {"mode", record_.mode},
                              {"height", config_.height},
                              {"width", config_.width},
                              {"preview", false},
                              {"tau_s", record_.tau_s},
                              {"blocks", record_.blocks},
                              {"seed", seed},
                              {"timeouts", record_.timeouts},
                              {"late_rejections", record_.late_rejections},
                              {"illegal_rejections", record_.illegal_rejections},
                              {"restarts", restarts_}};
  if (config_.out_dir && record_.mode == "record") {
    std::filesystem::create_directories(*config_.out_dir);
    save_dataset(record_.dataset, *config_.out_dir / ("session_" + std::to_string(record_.id) + ".jsonl"));
  }
  on_complete(record_);
  send({{"type", "end"},
        {"reason", "complete"},
        {"observations", record_.dataset.size()},
        {"timeouts", record_.timeouts},
        {"restarts", restarts_}});
  after_game();
}

void Session::play_record(std::uint64_t seed) {
  RngStream pieces(seed, 0);
  tetris::GameState state = tetris::new_game(pieces, config_.height, config_.width);
  const auto tau = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(record_.tau_s));
  for (int k = 0; k < record_.blocks; ++k) {
    if (k > 0) state.piece = tetris::random_piece(pieces);
    restarted_ = ensure_playable(state);
    const auto legal = tetris::legal_actions(state);
    const auto deadline = Clock::now() + tau;
    auto remaining_ms = [&] {
      return std::max<long>(0, std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count());
    };
    send(state_message(state, legal, k, remaining_ms()));

    std::optional<int> chosen;
    for (;;) {
      bool timed_out = false;
      json msg = next_message(deadline, timed_out);
      if (timed_out) break;
      const std::string type = msg["type"].get<std::string>();
      if (type == "download") {
        send(dataset_message(record_.dataset));
        continue;
      }
      if (type != "action") throw ProtocolError("unexpected_" + type);
      const int seq = msg.contains("seq") && msg["seq"].is_number_integer() ? msg["seq"].get<int>() : k;
      if (seq < k || Clock::now() > deadline) {
        ++record_.late_rejections;
        send({{"type", "rejected"}, {"reason", "deadline"}, {"seq", seq}});
        if (seq < k) continue;
        break;
      }
      if (seq > k) throw ProtocolError("future_seq");
      if (!msg.contains("rot") || !msg.contains("col") || !msg["rot"].is_number_integer() ||
          !msg["col"].is_number_integer()) {
        throw ProtocolError("bad_action");
      }
      const tetris::TetrisAction a{msg["rot"].get<int>(), msg["col"].get<int>()};
      const auto it = std::find(legal.begin(), legal.end(), a);
      if (it == legal.end()) {
        ++record_.illegal_rejections;
        send({{"type", "rejected"}, {"reason", "illegal"}, {"seq", k}});
        send(state_message(state, legal, k, remaining_ms()));
        continue;
      }
      chosen = static_cast<int>(it - legal.begin());
      break;
    }

    tetris::TetrisAction applied;
    if (chosen) {
      applied = legal[static_cast<std::size_t>(*chosen)];
      record_.dataset.observations.push_back(tetris::make_observation(state, legal, *chosen));
    } else {
      ++record_.timeouts;
      applied = tetris::default_action(state);
    }
    const auto outcome = tetris::step(state, applied);
    prev_ = {{"seq", k}, {"rot", applied.rotation}, {"col", applied.column}, {"recorded", chosen.has_value()}};
    if (outcome.rows_cleared > 0) send({{"type", "cleared"}, {"rows", outcome.rows_cleared}, {"seq", k}});
    state = outcome.state;
  }
}

void Session::play_mimic(std::uint64_t seed) {
  RngStream pieces(seed, 0);
  RngStream noise(seed, 1);
  tetris::GameState state = tetris::new_game(pieces, config_.height, config_.width);
  for (int k = 0; k < record_.blocks; ++k) {
    if (k > 0) state.piece = tetris::random_piece(pieces);
    restarted_ = ensure_playable(state);
    const auto legal = tetris::legal_actions(state);
    send(state_message(state, legal, k, 0));
    const int row = tetris::map_predicted_action(draws_, tetris::feature_r_matrix(state, legal), noise);
    const auto& a = legal[static_cast<std::size_t>(row)];
    send({{"type", "mimic_action"}, {"rot", a.rotation}, {"col", a.column}, {"seq", k}});
    const auto outcome = tetris::step(state, a);
    prev_ = {{"seq", k}, {"rot", a.rotation}, {"col", a.column}, {"recorded", false}};
    if (outcome.rows_cleared > 0) send({{"type", "cleared"}, {"rows", outcome.rows_cleared}, {"seq", k}});
    state = outcome.state;
    if (config_.mimic_interval_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.mimic_interval_ms));
    }
  }
}

void Session::after_game() {
  // The session stays open for downloads until the client hangs up or idles.
  for (;;) {
    bool timed_out = false;
    json msg = next_message(Clock::now() + std::chrono::seconds(60), timed_out);
    if (timed_out) return;
    const std::string type = msg["type"].get<std::string>();
    if (type == "download") {
      send(dataset_message(record_.dataset));
    } else if (type == "action") {
      send({{"type", "rejected"}, {"reason", "ended"}, {"seq", msg.value("seq", -1)}});
    } else {
      throw ProtocolError("unexpected_" + type);
    }
  }
}

}  // namespace

Server::Server(ServeConfig config) : config_(std::move(config)) {
  if (config_.height < 4 || config_.width < 4) throw InvalidArgument("serve: board too small");
  if (config_.mimic_draws < 1) throw InvalidArgument("serve: mimic_draws must be positive");
  if (config_.posterior) {
    if (config_.posterior->mode != Mode::basis || config_.posterior->dim != 3) {
      throw InvalidArgument("serve: mimic needs a basis posterior with K = 3");
    }
    if (!config_.posterior->empty()) mimic_draws_ = config_.posterior->thinned_values(config_.mimic_draws);
  }
}

Server::~Server() { stop(); }

int Server::start() {
  if (running_) throw Error("serve: already running");
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* found = nullptr;
  const std::string port = std::to_string(config_.port);
  if (int rc = ::getaddrinfo(config_.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    throw Error("serve: cannot resolve " + config_.host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  std::string why;
  for (addrinfo* ai = found; ai != nullptr && fd < 0; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(fd, 16) != 0) {
      why = std::strerror(errno);
      ::close(fd);
      fd = -1;
    }
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw Error("serve: cannot listen on " + config_.host + ":" + port + ": " + why);

  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                      : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  listen_fd_ = fd;
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  return port_;
}

void Server::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    const int id = next_id_++;
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd, id] { run_session(fd, id); });
  }
}

void Server::run_session(int fd, int id) {
  Session session(fd, id, config_, mimic_draws_);
  try {
    session.run([this](const SessionRecord& record) {
      std::lock_guard lock(mutex_);
      sessions_.push_back(record);
    });
  } catch (const ProtocolError& e) {
    try {
      send_line(fd, json{{"type", "end"}, {"reason", "protocol_error"}, {"detail", e.code}}.dump());
    } catch (const Error&) {
    }
  } catch (const PeerClosed&) {
  } catch (const std::exception& e) {
    try {
      send_line(fd, json{{"type", "end"}, {"reason", "server_error"}, {"detail", e.what()}}.dump());
    } catch (const Error&) {
    }
  }
  std::lock_guard lock(mutex_);
  ::shutdown(fd, SHUT_RDWR);
  ::close(fd);
  client_fds_.erase(std::remove(client_fds_.begin(), client_fds_.end(), fd), client_fds_.end());
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void Server::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(200));
}

std::vector<SessionRecord> Server::sessions() const {
  std::lock_guard lock(mutex_);
  return sessions_;
}

Client::~Client() { close(); }

void Client::connect(const std::string& host, int port) {
  close();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw Error("client: cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  for (addrinfo* ai = found; ai != nullptr && fd_ < 0; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd_ < 0) continue;
    if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) != 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }
  ::freeaddrinfo(found);
  if (fd_ < 0) throw Error("client: cannot connect to " + host + ":" + service);
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  buffer_.clear();
}

void Client::send(const json& message) {
  if (fd_ < 0) throw Error("client: not connected");
  send_line(fd_, message.dump());
}

std::optional<json> Client::receive(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw Error("client: not connected");
  auto line = read_line(fd_, buffer_, Clock::now() + timeout);
  if (!line) return std::nullopt;
  return json::parse(*line);
}

void Client::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Dataset dataset_from_message(const json& message) {
  if (message.value("type", "") != "dataset" || !message.contains("lines")) {
    throw InvalidArgument("serve: not a dataset message");
  }
  std::ostringstream text;
  for (const auto& line : message["lines"]) text << line.dump() << '\n';
  std::istringstream in(text.str());
  return read_dataset(in);
}

tetris::GameState state_from_message(const json& message) {
  if (message.value("type", "") != "state") throw InvalidArgument("serve: not a state message");
  const auto& rows = message.at("board");
  std::vector<std::string> text;
  for (const auto& row : rows) {
    std::string line;
    for (const auto& cell : row) line.push_back(cell.get<int>() != 0 ? '#' : '.');
    text.push_back(std::move(line));
  }
  return {tetris::Board::from_text(text), message.at("piece").get<int>(), false};
}

}  // namespace nmdp::serve
