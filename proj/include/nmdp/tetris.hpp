#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nmdp/choice_model.hpp"
#include "nmdp/probability.hpp"
#include "nmdp/types.hpp"

namespace nmdp::tetris {

inline constexpr int kDefaultHeight = 30;
inline constexpr int kDefaultWidth = 10;
inline constexpr int kNumPieces = 7;
inline constexpr int kNumRotations = 4;

// Piece ids: I=1, O=2, T=3, S=4, Z=5, J=6, L=7.
enum Piece : int { I = 1, O = 2, T = 3, S = 4, Z = 5, J = 6, L = 7 };

/// Row 0 is the bottom of the board.
struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

/// Four cells normalized so the lowest row and leftmost column are 0.
struct Footprint {
  std::array<Cell, 4> cells;
  int width = 0;
  int height = 0;
};

/// Rotation r is r clockwise quarter turns of the spawn orientation.
const Footprint& footprint(int piece, int rotation);
char piece_letter(int piece);

class Board {
 public:
  Board(int height = kDefaultHeight, int width = kDefaultWidth);

  int height() const { return height_; }
  int width() const { return width_; }
  bool occupied(int row, int col) const { return cells_[index(row, col)] != 0; }
  void set(int row, int col, bool value);
  /// 1-based row of the topmost occupied cell, 0 for an empty column.
  int column_height(int col) const { return heights_[col]; }
  const std::vector<int>& heights() const { return heights_; }
  int occupied_count() const;
  bool row_full(int row) const;
  bool top_row_occupied() const { return row_occupied(height_ - 1); }
  bool row_occupied(int row) const;
  /// Removes full rows, shifting the rows above down. Returns the count.
  int clear_full_rows();

  /// Rows of '.'/'#', top row first.
  std::vector<std::string> to_text() const;
  static Board from_text(const std::vector<std::string>& rows);
  /// Rows of 0/1, top row first.
  nlohmann::json to_bits() const;

  bool operator==(const Board& other) const {
    return height_ == other.height_ && width_ == other.width_ && cells_ == other.cells_;
  }

 private:
  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width_ + col; }
  void refresh_height(int col);

  int height_;
  int width_;
  std::vector<std::uint8_t> cells_;
  std::vector<int> heights_;
};

/// Rotation in quarter turns and the leftmost column of the rotated footprint.
struct TetrisAction {
  int rotation = 0;
  int column = 0;

  int id(int width) const { return rotation * width + column; }
  static TetrisAction from_id(int id, int width) { return {id / width, id % width}; }
  bool operator==(const TetrisAction&) const = default;
};

struct GameState {
  Board board;
  int piece = I;
  bool terminated = false;
};

/// Spawn placement: footprint top on the top row, leftmost column `column`.
/// Legal if it fits within the columns and overlaps nothing there.
bool placement_fits(const Board& board, int piece, const TetrisAction& action);

/// Rotation-major, then column. Empty when terminated. Duplicate footprints
/// of symmetric pieces are kept.
std::vector<TetrisAction> legal_actions(const GameState& state);

struct StepOutcome {
  GameState state;
  int rows_cleared = 0;
};

/// Drops the piece, clears full rows and sets the terminated flag when the
/// top row ends up occupied. Terminated states are returned unchanged. The
/// piece id is left for the caller to replace.
StepOutcome step(const GameState& state, const TetrisAction& action);

/// The unrotated, centred placement used when no decision arrives in time.
TetrisAction default_action(const GameState& state);

/// Live board with no legal placement for the current piece.
bool is_stuck(const GameState& state);
bool is_game_over(const GameState& state);

struct FeatureVector {
  double max_height = 0.0;
  double holes = 0.0;
  double bumpiness = 0.0;

  Eigen::Vector3d as_vector() const { return {max_height, holes, bumpiness}; }
};

/// phi1 max column height, phi2 empty cells below their column's top cell,
/// phi3 sum of squared adjacent height differences.
FeatureVector features(const Board& board);

/// Row i holds features(step(state, legal[i]).board). Throws on a
/// terminated state.
Eigen::MatrixXd feature_r_matrix(const GameState& state, const std::vector<TetrisAction>& legal);
Eigen::MatrixXd feature_r_matrix(const GameState& state);

int random_piece(RngStream& rng);
GameState new_game(RngStream& rng, int height = kDefaultHeight, int width = kDefaultWidth);

nlohmann::json state_to_json(const GameState& state);
GameState state_from_json(const nlohmann::json& doc);

/// Observation for `state` with the given chosen action.
Observation make_observation(const GameState& state, const std::vector<TetrisAction>& legal, int chosen_row);

struct GenerateOptions {
  int height = kDefaultHeight;
  int width = kDefaultWidth;
  bool restart_on_termination = true;
};

/// Plays T decisions under the noisy argmax of R_t v with unit noise.
Dataset generate_data(const ValueFunction& v, int num_steps, RngStream& rng, const GenerateOptions& options = {});

/// Noisy-argmax policy rollout: number of placements made before the game
/// ends, capped at max_steps.
int survival_steps(const ValueFunction& v, int max_steps, RngStream& rng, const GenerateOptions& options = {});

/// Modal noisy argmax over posterior draws: each draw V_n gets fresh noise
/// scaled by noise_scale (0 suppresses it). Returns the row in R.
int map_predicted_action(const std::vector<Eigen::VectorXd>& draws, const Eigen::MatrixXd& r, RngStream& rng,
                         double noise_scale = 1.0, std::vector<int>* counts = nullptr);

/// Fraction of positions where predictions differ from actual.
double action_error(const std::vector<int>& predictions, const std::vector<int>& actual);

/// Placements made by MAP self-play before the game ends, capped at max_steps.
int map_self_play(const std::vector<Eigen::VectorXd>& draws, int max_steps, RngStream& rng,
                  const GenerateOptions& options = {});

/// Seed, piece sequence and action ids (-1 for the default fall) that
/// reproduce a game exactly.
struct Replay {
  std::uint64_t seed = 0;
  int height = kDefaultHeight;
  int width = kDefaultWidth;
  std::vector<int> pieces;
  std::vector<int> actions;

  nlohmann::json to_json() const;
  static Replay from_json(const nlohmann::json& doc);
};

/// Board after each move of the replay (size = actions.size() + 1).
std::vector<GameState> replay_game(const Replay& replay);

}  // namespace nmdp::tetris
