#pragma once

#include <vector>

#include "boms/mdp.hpp"

namespace boms {

struct RewardCell {
    int row = 0;
    int col = 0;
    double reward = 0.0;
};

/// Slippery gridworld. Actions are up/right/down/left; with probability
/// `slip` the executed move is drawn uniformly from all four. Moves into a
/// wall leave the agent in place. The goal cell is absorbing and pays
/// `goal_reward` for every action taken in it.
struct GridworldSpec {
    int rows = 6;
    int cols = 6;
    double slip = 0.1;
    double goal_reward = 1.0;
    double step_reward = 0.0;
    double gamma = 0.95;
    int start_row = 0;
    int start_col = 0;
    int goal_row = -1;  // -1: bottom-right corner
    int goal_col = -1;
    std::vector<RewardCell> extra_rewards{};
};

struct Gridworld {
    TabularMdp mdp;
    StateEmbedding embedding;
    int goal_state = 0;
    int start_state = 0;
};

inline constexpr int kGridActions = 4;

inline Gridworld make_gridworld(const GridworldSpec& spec) {
    if (spec.rows < 1 || spec.cols < 1 || spec.rows * spec.cols < 2)
        throw std::invalid_argument("gridworld needs at least two cells");
    if (!(spec.slip >= 0.0 && spec.slip <= 1.0)) throw std::invalid_argument("gridworld slip must lie in [0, 1]");
    const int goal_row = spec.goal_row < 0 ? spec.rows - 1 : spec.goal_row;
    const int goal_col = spec.goal_col < 0 ? spec.cols - 1 : spec.goal_col;
    auto inside = [&](int r, int c) { return r >= 0 && r < spec.rows && c >= 0 && c < spec.cols; };
    if (!inside(goal_row, goal_col) || !inside(spec.start_row, spec.start_col))
        throw std::invalid_argument("gridworld start/goal outside the grid");

    const int n = spec.rows * spec.cols;
    auto index = [&](int r, int c) { return r * spec.cols + c; };
    constexpr int dr[kGridActions] = {-1, 0, 1, 0};
    constexpr int dc[kGridActions] = {0, 1, 0, -1};

    Gridworld g;
    g.goal_state = index(goal_row, goal_col);
    g.start_state = index(spec.start_row, spec.start_col);
    TabularMdp& m = g.mdp;
    m.n_states = n;
    m.n_actions = kGridActions;
    m.gamma = spec.gamma;
    m.transition = Eigen::MatrixXd::Zero(Eigen::Index{n} * kGridActions, n);
    m.reward = Eigen::MatrixXd::Constant(n, kGridActions, spec.step_reward);
    m.initial_dist = Eigen::VectorXd::Zero(n);
    m.initial_dist(g.start_state) = 1.0;
    g.embedding.coords.resize(n, 2);

    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c) {
            const int s = index(r, c);
            g.embedding.coords(s, 0) = r;
            g.embedding.coords(s, 1) = c;
            for (int a = 0; a < kGridActions; ++a) {
                if (s == g.goal_state) {
                    m.transition(m.row(s, a), s) = 1.0;
                    continue;
                }
                for (int move = 0; move < kGridActions; ++move) {
                    const double p = (move == a ? 1.0 - spec.slip : 0.0) + spec.slip / kGridActions;
                    if (p == 0.0) continue;
                    const int nr = r + dr[move];
                    const int nc = c + dc[move];
                    const int target = inside(nr, nc) ? index(nr, nc) : s;
                    m.transition(m.row(s, a), target) += p;
                }
            }
        }
    m.reward.row(g.goal_state).setConstant(spec.goal_reward);
    for (const auto& cell : spec.extra_rewards) {
        if (!inside(cell.row, cell.col)) throw std::invalid_argument("gridworld reward cell outside the grid");
        m.reward.row(index(cell.row, cell.col)).array() += cell.reward;
    }
    m.r_max = std::max(1e-12, m.reward.cwiseAbs().maxCoeff());
    m.validate();
    return g;
}

}  // namespace boms
