#include "nmdp/tetris.hpp"

#include <algorithm>
#include <string>

namespace nmdp::tetris {

namespace {

// Spawn orientations, (row, col) with row 0 at the bottom.
constexpr std::array<std::array<Cell, 4>, kNumPieces> kSpawn = {{
    {{{0, 0}, {0, 1}, {0, 2}, {0, 3}}},  // I
    {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}},  // O
    {{{0, 0}, {0, 1}, {0, 2}, {1, 1}}},  // T
    {{{0, 0}, {0, 1}, {1, 1}, {1, 2}}},  // S
    {{{0, 1}, {0, 2}, {1, 0}, {1, 1}}},  // Z
    {{{0, 0}, {0, 1}, {0, 2}, {1, 0}}},  // J
    {{{0, 0}, {0, 1}, {0, 2}, {1, 2}}},  // L
}};

Footprint normalize(std::array<Cell, 4> cells) {
  int min_r = cells[0].row, min_c = cells[0].col, max_r = cells[0].row, max_c = cells[0].col;
  for (const auto& c : cells) {
    min_r = std::min(min_r, c.row);
    min_c = std::min(min_c, c.col);
    max_r = std::max(max_r, c.row);
    max_c = std::max(max_c, c.col);
  }
  for (auto& c : cells) {
    c.row -= min_r;
    c.col -= min_c;
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return {cells, max_c - min_c + 1, max_r - min_r + 1};
}

std::array<std::array<Footprint, kNumRotations>, kNumPieces> build_table() {
  std::array<std::array<Footprint, kNumRotations>, kNumPieces> table{};
  for (int p = 0; p < kNumPieces; ++p) {
    auto cells = kSpawn[p];
    for (int r = 0; r < kNumRotations; ++r) {
      table[p][r] = normalize(cells);
      // Clockwise quarter turn: (row, col) -> (-col, row).
      for (auto& c : cells) c = {-c.col, c.row};
    }
  }
  return table;
}

void check_piece(int piece) {
  if (piece < 1 || piece > kNumPieces) throw InvalidArgument("tetris: piece id must be in 1..7");
}

// Lowest resting row offset for the footprint at `column`, dropping from spawn.
int drop_offset(const Board& board, const Footprint& fp, int column) {
  int offset = board.height() - fp.height;
  auto collides = [&](int off) {
    for (const auto& c : fp.cells) {
      const int row = off + c.row;
      if (row < 0 || board.occupied(row, column + c.col)) return true;
    }
    return false;
  };
  while (!collides(offset - 1)) --offset;
  return offset;
}

}  // namespace

const Footprint& footprint(int piece, int rotation) {
  static const auto table = build_table();
  check_piece(piece);
  if (rotation < 0 || rotation >= kNumRotations) throw InvalidArgument("tetris: rotation must be in 0..3");
  return table[piece - 1][rotation];
}

char piece_letter(int piece) {
  check_piece(piece);
  return "IOTSZJL"[piece - 1];
}

Board::Board(int height, int width)
    : height_(height), width_(width), cells_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), 0),
      heights_(static_cast<std::size_t>(std::max(width, 0)), 0) {
  if (height < 4 || width < 4) throw InvalidArgument("tetris: board must be at least 4x4");
}

void Board::set(int row, int col, bool value) {
  if (row < 0 || row >= height_ || col < 0 || col >= width_) throw InvalidArgument("tetris: cell out of range");
  cells_[index(row, col)] = value ? 1 : 0;
  refresh_height(col);
}

void Board::refresh_height(int col) {
  int h = 0;
  for (int row = height_ - 1; row >= 0; --row) {
    if (cells_[index(row, col)]) {
      h = row + 1;
      break;
    }
  }
  heights_[col] = h;
}

int Board::occupied_count() const { return static_cast<int>(std::count(cells_.begin(), cells_.end(), 1)); }

bool Board::row_full(int row) const {
  for (int c = 0; c < width_; ++c) {
    if (!cells_[index(row, c)]) return false;
  }
  return true;
}

bool Board::row_occupied(int row) const {
  for (int c = 0; c < width_; ++c) {
    if (cells_[index(row, c)]) return true;
  }
  return false;
}

int Board::clear_full_rows() {
  int write = 0;
  int cleared = 0;
  for (int row = 0; row < height_; ++row) {
    if (row_full(row)) {
      ++cleared;
      continue;
    }
    if (write != row) {
      std::copy_n(cells_.begin() + index(row, 0), width_, cells_.begin() + index(write, 0));
    }
    ++write;
  }
  std::fill(cells_.begin() + index(write, 0), cells_.end(), 0);
  if (cleared) {
    for (int c = 0; c < width_; ++c) refresh_height(c);
  }
  return cleared;
}

std::vector<std::string> Board::to_text() const {
  std::vector<std::string> rows;
  for (int row = height_ - 1; row >= 0; --row) {
    std::string line(static_cast<std::size_t>(width_), '.');
    for (int c = 0; c < width_; ++c) {
      if (occupied(row, c)) line[c] = '#';
    }
    rows.push_back(std::move(line));
  }
  return rows;
}

Board Board::from_text(const std::vector<std::string>& rows) {
  if (rows.empty()) throw InvalidArgument("tetris: empty board text");
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows.front().size());
  Board b(h, w);
  for (int i = 0; i < h; ++i) {
    if (static_cast<int>(rows[i].size()) != w) throw InvalidArgument("tetris: ragged board text");
    for (int c = 0; c < w; ++c) {
      const char ch = rows[i][c];
      if (ch != '.' && ch != '#') throw InvalidArgument("tetris: board text uses only '.' and '#'");
      if (ch == '#') b.set(h - 1 - i, c, true);
    }
  }
  return b;
}

nlohmann::json Board::to_bits() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int row = height_ - 1; row >= 0; --row) {
    std::vector<int> line(static_cast<std::size_t>(width_));
    for (int c = 0; c < width_; ++c) line[c] = occupied(row, c) ? 1 : 0;
    rows.push_back(std::move(line));
  }
  return rows;
}

bool placement_fits(const Board& board, int piece, const TetrisAction& action) {
  if (action.rotation < 0 || action.rotation >= kNumRotations) return false;
  const Footprint& fp = footprint(piece, action.rotation);
  if (action.column < 0 || action.column + fp.width > board.width()) return false;
  const int base = board.height() - fp.height;
  for (const auto& c : fp.cells) {
    if (board.occupied(base + c.row, action.column + c.col)) return false;
  }
  return true;
}

std::vector<TetrisAction> legal_actions(const GameState& state) {
  std::vector<TetrisAction> out;
  if (state.terminated || state.board.top_row_occupied()) return out;
  for (int r = 0; r < kNumRotations; ++r) {
    for (int c = 0; c < state.board.width(); ++c) {
      if (placement_fits(state.board, state.piece, {r, c})) out.push_back({r, c});
    }
  }
  return out;
}

StepOutcome step(const GameState& state, const TetrisAction& action) {
  StepOutcome out{state, 0};
  if (state.terminated) return out;
  if (!placement_fits(state.board, state.piece, action)) {
    throw InvalidArgument("tetris: illegal action (rotation " + std::to_string(action.rotation) + ", column " +
                          std::to_string(action.column) + ")");
  }
  const Footprint& fp = footprint(state.piece, action.rotation);
  const int offset = drop_offset(state.board, fp, action.column);
  for (const auto& c : fp.cells) out.state.board.set(offset + c.row, action.column + c.col, true);
  out.rows_cleared = out.state.board.clear_full_rows();
  out.state.terminated = out.state.board.top_row_occupied();
  return out;
}

TetrisAction default_action(const GameState& state) {
  const Footprint& fp = footprint(state.piece, 0);
  return {0, (state.board.width() - fp.width) / 2};
}

bool is_stuck(const GameState& state) { return !state.terminated && legal_actions(state).empty(); }

bool is_game_over(const GameState& state) { return state.terminated || legal_actions(state).empty(); }

FeatureVector features(const Board& board) {
  FeatureVector f;
  const auto& h = board.heights();
  for (int c = 0; c < board.width(); ++c) {
    f.max_height = std::max(f.max_height, static_cast<double>(h[c]));
    for (int row = 0; row < h[c]; ++row) {
      if (!board.occupied(row, c)) f.holes += 1.0;
    }
    if (c + 1 < board.width()) {
      const double d = h[c] - h[c + 1];
      f.bumpiness += d * d;
    }
  }
  return f;
}

Eigen::MatrixXd feature_r_matrix(const GameState& state, const std::vector<TetrisAction>& legal) {
  if (state.terminated) throw InvalidArgument("tetris: feature matrix of a terminated state");
  Eigen::MatrixXd r(static_cast<Eigen::Index>(legal.size()), 3);
  for (std::size_t i = 0; i < legal.size(); ++i) {
    r.row(static_cast<Eigen::Index>(i)) = features(step(state, legal[i]).state.board).as_vector().transpose();
  }
  return r;
}

Eigen::MatrixXd feature_r_matrix(const GameState& state) { return feature_r_matrix(state, legal_actions(state)); }

int random_piece(RngStream& rng) { return rng.uniform_int(1, kNumPieces); }

GameState new_game(RngStream& rng, int height, int width) {
  GameState s{Board(height, width), I, false};
  s.piece = random_piece(rng);
  return s;
}

nlohmann::json state_to_json(const GameState& state) {
  return {{"board", state.board.to_text()}, {"piece", state.piece}, {"terminated", state.terminated}};
}

GameState state_from_json(const nlohmann::json& doc) {
  GameState s{Board::from_text(doc.at("board").get<std::vector<std::string>>()), doc.at("piece").get<int>(),
              doc.value("terminated", false)};
  check_piece(s.piece);
  return s;
}

Observation make_observation(const GameState& state, const std::vector<TetrisAction>& legal, int chosen_row) {
  Observation o;
  o.state = state_to_json(state);
  o.r = feature_r_matrix(state, legal);
  for (const auto& a : legal) o.legal_actions.push_back(a.id(state.board.width()));
  o.action = o.legal_actions.at(static_cast<std::size_t>(chosen_row));
  return o;
}

namespace {

void check_value(const ValueFunction& v) {
  if (v.mode != Mode::basis || v.size() != 3) throw InvalidArgument("tetris: needs a basis value function with K = 3");
}

}  // namespace

Dataset generate_data(const ValueFunction& v, int num_steps, RngStream& rng, const GenerateOptions& options) {
  check_value(v);
  if (num_steps < 0) throw InvalidArgument("tetris: negative step count");
  Dataset data;
  data.mode = Mode::basis;
  data.dim = 3;
  GameState state = new_game(rng, options.height, options.width);
  int restarts = 0;
  while (data.size() < num_steps) {
    auto legal = legal_actions(state);
    if (legal.empty()) {
      if (!options.restart_on_termination) break;
      state = new_game(rng, options.height, options.width);
      ++restarts;
      continue;
    }
    const Eigen::MatrixXd r = feature_r_matrix(state, legal);
    const ActionDraw draw = sample_action(v.values, r, rng);
    Observation o;
    o.state = state_to_json(state);
    o.r = r;
    for (const auto& a : legal) o.legal_actions.push_back(a.id(state.board.width()));
    o.action = o.legal_actions[draw.row];
    data.observations.push_back(std::move(o));
    state = step(state, legal[draw.row]).state;
    state.piece = random_piece(rng);
  }
  data.metadata = {{"source", "synthetic"},
                   {"env", "tetris"},
                   {"height", options.height},
                   {"width", options.width},
                   {"preview", false},
                   {"restarts", restarts},
                   {"v", std::vector<double>(v.values.begin(), v.values.end())}};
  return data;
}

int survival_steps(const ValueFunction& v, int max_steps, RngStream& rng, const GenerateOptions& options) {
  check_value(v);
  GameState state = new_game(rng, options.height, options.width);
  for (int t = 0; t < max_steps; ++t) {
    const auto legal = legal_actions(state);
    if (legal.empty()) return t;
    const ActionDraw draw = sample_action(v.values, feature_r_matrix(state, legal), rng);
    state = step(state, legal[draw.row]).state;
    state.piece = random_piece(rng);
  }
  return max_steps;
}

int map_predicted_action(const std::vector<Eigen::VectorXd>& draws, const Eigen::MatrixXd& r, RngStream& rng,
                         double noise_scale, std::vector<int>* counts) {
  if (draws.empty()) throw InvalidArgument("MAP prediction: empty posterior");
  if (r.rows() == 0) throw InvalidArgument("MAP prediction: no legal actions");
  std::vector<int> hits(static_cast<std::size_t>(r.rows()), 0);
  for (const auto& v : draws) {
    if (v.size() != r.cols()) throw InvalidArgument("MAP prediction: draw dimension differs from R");
    hits[sample_action(v, r, rng, noise_scale).row]++;
  }
  const int best = static_cast<int>(std::max_element(hits.begin(), hits.end()) - hits.begin());
  if (counts) *counts = std::move(hits);
  return best;
}

double action_error(const std::vector<int>& predictions, const std::vector<int>& actual) {
  if (predictions.size() != actual.size()) throw InvalidArgument("action error: length mismatch");
  if (predictions.empty()) throw InvalidArgument("action error: no predictions");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) wrong += predictions[i] != actual[i];
  return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

int map_self_play(const std::vector<Eigen::VectorXd>& draws, int max_steps, RngStream& rng,
                  const GenerateOptions& options) {
  GameState state = new_game(rng, options.height, options.width);
  for (int t = 0; t < max_steps; ++t) {
    const auto legal = legal_actions(state);
    if (legal.empty()) return t;
    const int row = map_predicted_action(draws, feature_r_matrix(state, legal), rng);
    state = step(state, legal[row]).state;
    state.piece = random_piece(rng);
  }
  return max_steps;
}

nlohmann::json Replay::to_json() const {
  return {{"seed", seed}, {"height", height}, {"width", width}, {"pieces", pieces}, {"actions", actions}};
}

Replay Replay::from_json(const nlohmann::json& doc) {
  Replay r;
  r.seed = doc.value("seed", std::uint64_t{0});
  r.height = doc.value("height", kDefaultHeight);
  r.width = doc.value("width", kDefaultWidth);
  r.pieces = doc.at("pieces").get<std::vector<int>>();
  r.actions = doc.at("actions").get<std::vector<int>>();
  if (r.pieces.size() != r.actions.size()) throw InvalidArgument("replay: one piece per action");
  return r;
}

std::vector<GameState> replay_game(const Replay& replay) {
  if (replay.pieces.size() != replay.actions.size()) throw InvalidArgument("replay: one piece per action");
  std::vector<GameState> out;
  GameState state{Board(replay.height, replay.width), replay.pieces.empty() ? I : replay.pieces.front(), false};
  out.push_back(state);
  for (std::size_t k = 0; k < replay.actions.size(); ++k) {
    state.piece = replay.pieces[k];
    check_piece(state.piece);
    if (is_game_over(state)) {
      state = GameState{Board(replay.height, replay.width), replay.pieces[k], false};
    }
    const TetrisAction a =
        replay.actions[k] < 0 ? default_action(state) : TetrisAction::from_id(replay.actions[k], replay.width);
    if (placement_fits(state.board, state.piece, a)) {
      state = step(state, a).state;
    } else {
      state.terminated = true;
    }
    out.push_back(state);
  }
  return out;
}

}  // namespace nmdp::tetris
